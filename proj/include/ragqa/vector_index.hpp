#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ragqa/embeddings.hpp"
#include "ragqa/error.hpp"
#include "ragqa/segmenter.hpp"

namespace ragqa {

class IndexError : public Error {
public:
    enum class Kind { duplicate_id, dimension_mismatch, invalid_argument, io_failure, format_mismatch };

    IndexError(Kind kind, const std::string& message) : Error(code_for(kind), message), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

    static std::string code_for(Kind kind) {
        switch (kind) {
        case Kind::duplicate_id: return "duplicate_id";
        case Kind::dimension_mismatch: return "dimension_mismatch";
        case Kind::invalid_argument: return "invalid_argument";
        case Kind::io_failure: return "io_failure";
        case Kind::format_mismatch: return "format_mismatch";
        }
        return "index_error";
    }

private:
    Kind kind_;
};

struct IndexEntry {
    std::string passage_id;
    std::string document_id;
    EmbeddingVector vector;
    std::uint64_t insertion_seq = 0;
};

struct ScoredHit {
    std::string passage_id;
    std::string document_id;
    double distance = 0.0;

    bool operator==(const ScoredHit&) const = default;
};

using DocumentFilter = std::optional<std::unordered_set<std::string>>;

// Exact cosine k-NN over an in-memory table. Stored vectors are rounded to
// float32 on insert so that a saved and reloaded index ranks identically.
// Readers share a lock; insert/remove/load take it exclusively.
class VectorIndex {
public:
    static constexpr std::array<char, 8> kMagic{'R', 'A', 'G', 'Q', 'A', 'I', 'D', 'X'};
    static constexpr std::uint32_t kVersion = 1;

    explicit VectorIndex(std::size_t dim) : dim_(dim) {
        if (dim_ == 0) throw IndexError(IndexError::Kind::invalid_argument, "index dimension must be positive");
    }

    VectorIndex(const VectorIndex&) = delete;
    VectorIndex& operator=(const VectorIndex&) = delete;

    std::size_t dim() const noexcept { return dim_; }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return entries_.size();
    }

    bool contains(const std::string& passage_id) const {
        std::shared_lock lock(mutex_);
        return by_id_.contains(passage_id);
    }

    void insert(const std::string& passage_id, const std::string& document_id, const EmbeddingVector& vector) {
        std::unique_lock lock(mutex_);
        insert_locked(passage_id, document_id, vector, next_seq_);
    }

    void insert(const Passage& passage, const EmbeddingVector& vector) {
        insert(passage.id, passage.document_id, vector);
    }

    // Inserts a batch atomically: either every entry is stored or none is.
    void insert_all(const std::vector<IndexEntry>& batch) {
        std::unique_lock lock(mutex_);
        std::unordered_set<std::string> seen;
        for (const auto& e : batch) {
            check_dim(e.vector.dim());
            if (by_id_.contains(e.passage_id) || !seen.insert(e.passage_id).second)
                throw IndexError(IndexError::Kind::duplicate_id, "passage '" + e.passage_id + "' is already indexed");
        }
        for (const auto& e : batch) insert_locked(e.passage_id, e.document_id, e.vector, next_seq_);
    }

    std::vector<ScoredHit> search(const EmbeddingVector& query, std::size_t k, const DocumentFilter& allowed = std::nullopt) const {
        if (k == 0) throw IndexError(IndexError::Kind::invalid_argument, "k must be at least 1");
        check_dim(query.dim());
        const double qnorm = query.norm();
        if (qnorm == 0.0) throw EmbeddingError(EmbeddingError::Kind::zero_vector, "query vector is zero");

        std::shared_lock lock(mutex_);
        struct Candidate {
            double distance;
            std::uint64_t seq;
            const Stored* entry;
        };
        std::vector<Candidate> candidates;
        candidates.reserve(entries_.size());
        for (const auto& e : entries_) {
            if (allowed && !allowed->contains(e.document_id)) continue;
            double dot = 0.0;
            for (std::size_t i = 0; i < dim_; ++i) dot += query[i] * e.values[i];
            double d = 1.0 - dot / (qnorm * e.norm);
            d = std::clamp(d, 0.0, 2.0);
            candidates.push_back({d, e.seq, &e});
        }
        auto before = [](const Candidate& a, const Candidate& b) {
            return a.distance != b.distance ? a.distance < b.distance : a.seq < b.seq;
        };
        const std::size_t take = std::min(k, candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(), before);

        std::vector<ScoredHit> hits;
        hits.reserve(take);
        for (std::size_t i = 0; i < take; ++i)
            hits.push_back({candidates[i].entry->passage_id, candidates[i].entry->document_id, candidates[i].distance});
        return hits;
    }

    std::size_t remove_document(const std::string& document_id) {
        std::unique_lock lock(mutex_);
        const std::size_t before = entries_.size();
        std::erase_if(entries_, [&](const Stored& e) { return e.document_id == document_id; });
        rebuild_id_map();
        return before - entries_.size();
    }

    // Copies of all entries in insertion order.
    std::vector<IndexEntry> entries() const {
        std::shared_lock lock(mutex_);
        std::vector<IndexEntry> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) out.push_back({e.passage_id, e.document_id, EmbeddingVector(e.values), e.seq});
        return out;
    }

    // Layout (all integers little-endian):
    //   magic "RAGQAIDX" | u32 version | u32 dim | u64 next_seq | u64 count
    //   count x { u32 len, passage_id | u32 len, document_id | u64 seq | u32 dim | dim x f32 }
    void save(const std::filesystem::path& path) const {
        std::shared_lock lock(mutex_);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IndexError(IndexError::Kind::io_failure, "cannot open '" + path.string() + "' for writing");
        out.write(kMagic.data(), kMagic.size());
        put_u32(out, kVersion);
        put_u32(out, static_cast<std::uint32_t>(dim_));
        put_u64(out, next_seq_);
        put_u64(out, entries_.size());
        for (const auto& e : entries_) {
            put_string(out, e.passage_id);
            put_string(out, e.document_id);
            put_u64(out, e.seq);
            put_u32(out, static_cast<std::uint32_t>(dim_));
            for (double v : e.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        }
        if (!out) throw IndexError(IndexError::Kind::io_failure, "write to '" + path.string() + "' failed");
    }

    // Rejects files with a different version, or whose dimension differs
    // from `expected_dim` when one is given.
    static std::unique_ptr<VectorIndex> load(const std::filesystem::path& path, std::optional<std::size_t> expected_dim = std::nullopt) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IndexError(IndexError::Kind::io_failure, "cannot open '" + path.string() + "'");
        std::array<char, 8> magic{};
        in.read(magic.data(), magic.size());
        if (!in || magic != kMagic) throw IndexError(IndexError::Kind::format_mismatch, "'" + path.string() + "' is not an index file");
        const auto version = get_u32(in);
        if (version != kVersion)
            throw IndexError(IndexError::Kind::format_mismatch, "unsupported index version " + std::to_string(version));
        const std::size_t dim = get_u32(in);
        if (expected_dim && *expected_dim != dim)
            throw IndexError(IndexError::Kind::dimension_mismatch, "index has dimension " + std::to_string(dim) +
                                                                       ", expected " + std::to_string(*expected_dim));
        auto index = std::make_unique<VectorIndex>(dim);
        const auto next_seq = get_u64(in);
        const auto count = get_u64(in);
        for (std::uint64_t i = 0; i < count; ++i) {
            auto pid = get_string(in);
            auto did = get_string(in);
            const auto seq = get_u64(in);
            const auto entry_dim = get_u32(in);
            if (entry_dim != dim)
                throw IndexError(IndexError::Kind::dimension_mismatch, "entry '" + pid + "' has dimension " + std::to_string(entry_dim));
            std::vector<double> values(dim);
            for (auto& v : values) v = static_cast<double>(std::bit_cast<float>(get_u32(in)));
            std::uint64_t seq_slot = seq;
            index->insert_locked(pid, did, EmbeddingVector(std::move(values)), seq_slot);
        }
        index->next_seq_ = next_seq;
        return index;
    }

private:
    struct Stored {
        std::string passage_id;
        std::string document_id;
        std::vector<double> values;
        double norm = 0.0;
        std::uint64_t seq = 0;
    };

    void check_dim(std::size_t d) const {
        if (d != dim_)
            throw IndexError(IndexError::Kind::dimension_mismatch,
                             "vector has dimension " + std::to_string(d) + ", index expects " + std::to_string(dim_));
    }

    // `seq` is consumed and advanced.
    void insert_locked(const std::string& passage_id, const std::string& document_id, const EmbeddingVector& vector, std::uint64_t& seq) {
        check_dim(vector.dim());
        if (by_id_.contains(passage_id))
            throw IndexError(IndexError::Kind::duplicate_id, "passage '" + passage_id + "' is already indexed");
        Stored s{passage_id, document_id, {}, 0.0, seq++};
        s.values.reserve(dim_);
        double sum = 0.0;
        for (double v : vector.values()) {
            const double r = static_cast<double>(static_cast<float>(v));
            s.values.push_back(r);
            sum += r * r;
        }
        s.norm = std::sqrt(sum);
        if (s.norm == 0.0) throw EmbeddingError(EmbeddingError::Kind::zero_vector, "cannot index a zero vector");
        by_id_.emplace(passage_id, entries_.size());
        entries_.push_back(std::move(s));
    }

    void rebuild_id_map() {
        by_id_.clear();
        for (std::size_t i = 0; i < entries_.size(); ++i) by_id_.emplace(entries_[i].passage_id, i);
    }

    static void put_u32(std::ostream& out, std::uint32_t v) {
        std::array<char, 4> b{};
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out.write(b.data(), b.size());
    }
    static void put_u64(std::ostream& out, std::uint64_t v) {
        std::array<char, 8> b{};
        for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out.write(b.data(), b.size());
    }
    static void put_string(std::ostream& out, const std::string& s) {
        put_u32(out, static_cast<std::uint32_t>(s.size()));
        out.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    static void need(std::istream& in) {
        if (!in) throw IndexError(IndexError::Kind::format_mismatch, "index file is truncated");
    }
    static std::uint32_t get_u32(std::istream& in) {
        std::array<unsigned char, 4> b{};
        in.read(reinterpret_cast<char*>(b.data()), b.size());
        need(in);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    static std::uint64_t get_u64(std::istream& in) {
        std::array<unsigned char, 8> b{};
        in.read(reinterpret_cast<char*>(b.data()), b.size());
        need(in);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    static std::string get_string(std::istream& in) {
        const auto len = get_u32(in);
        if (len > (1u << 20)) throw IndexError(IndexError::Kind::format_mismatch, "implausible identifier length");
        std::string s(len, '\0');
        in.read(s.data(), len);
        need(in);
        return s;
    }

    std::size_t dim_;
    std::vector<Stored> entries_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::uint64_t next_seq_ = 0;
    mutable std::shared_mutex mutex_;
};

} // namespace ragqa
