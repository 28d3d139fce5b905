#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ragqa/error.hpp"

namespace ragqa {

class EmbeddingError : public Error {
public:
    enum class Kind { auth_failure, rate_limited, transport_failure, dimension_mismatch, zero_vector, bad_response };

    EmbeddingError(Kind kind, const std::string& message) : Error(code_for(kind), message), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

    static std::string code_for(Kind kind) {
        switch (kind) {
        case Kind::auth_failure: return "auth_failure";
        case Kind::rate_limited: return "rate_limited";
        case Kind::transport_failure: return "transport_failure";
        case Kind::dimension_mismatch: return "dimension_mismatch";
        case Kind::zero_vector: return "zero_vector";
        case Kind::bad_response: return "bad_response";
        }
        return "embedding_error";
    }

private:
    Kind kind_;
};

// Dense real vector. Values are always finite and the dimension is at least 1.
class EmbeddingVector {
public:
    EmbeddingVector() = default;

    explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
        if (values_.empty()) throw EmbeddingError(EmbeddingError::Kind::dimension_mismatch, "embedding has zero dimensions");
        for (double v : values_) {
            if (!std::isfinite(v)) throw EmbeddingError(EmbeddingError::Kind::bad_response, "embedding contains a non-finite value");
        }
    }

    std::size_t dim() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    double norm() const {
        double sum = 0.0;
        for (double v : values_) sum += v * v;
        return std::sqrt(sum);
    }

    // Returns the unit vector in the same direction; the zero vector maps to e0.
    EmbeddingVector normalized() const {
        const double n = norm();
        std::vector<double> out(values_.size(), 0.0);
        if (n == 0.0) {
            out[0] = 1.0;
        } else {
            for (std::size_t i = 0; i < values_.size(); ++i) out[i] = values_[i] / n;
        }
        return EmbeddingVector(std::move(out));
    }

    bool operator==(const EmbeddingVector&) const = default;

private:
    std::vector<double> values_;
};

// 1 - cos(angle). Range [0, 2], symmetric, scale invariant.
inline double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim())
        throw EmbeddingError(EmbeddingError::Kind::dimension_mismatch,
                             "cannot compare vectors of dimension " + std::to_string(a.dim()) + " and " +
                                 std::to_string(b.dim()));
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw EmbeddingError(EmbeddingError::Kind::zero_vector, "cosine distance of a zero vector");
    const double d = 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
    return d < 0.0 ? 0.0 : (d > 2.0 ? 2.0 : d);
}

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::string name() const = 0;
    virtual std::size_t dim() const = 0;
    virtual EmbeddingVector embed(std::string_view text) const = 0;

    virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed(t));
        return out;
    }
};

namespace detail {

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Non-ASCII bytes are kept inside terms so UTF-8 words survive intact.
inline bool is_term_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

inline std::vector<std::string> hash_terms(std::string_view text) {
    std::vector<std::string> terms;
    std::string cur;
    for (unsigned char c : text) {
        if (is_term_byte(c)) {
            cur.push_back(static_cast<char>((c >= 'A' && c <= 'Z') ? c + ('a' - 'A') : c));
        } else if (!cur.empty()) {
            terms.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) terms.push_back(std::move(cur));
    return terms;
}

} // namespace detail

// Feature-hashed bag of words: each lower-cased term adds a signed unit to
// bucket fnv1a(term) mod dim, the sign taken from the hash's top bit.
inline EmbeddingVector hash_embed(std::string_view text, std::size_t dim) {
    if (dim < 8) throw EmbeddingError(EmbeddingError::Kind::dimension_mismatch, "hash_embed requires dim >= 8");
    std::vector<double> acc(dim, 0.0);
    for (const auto& term : detail::hash_terms(text)) {
        const std::uint64_t h = detail::fnv1a64(term);
        acc[h % dim] += (h >> 63) ? -1.0 : 1.0;
    }
    return EmbeddingVector(std::move(acc)).normalized();
}

class HashEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit HashEmbeddingProvider(std::size_t dim = 256) : dim_(dim) {
        if (dim_ < 8) throw EmbeddingError(EmbeddingError::Kind::dimension_mismatch, "hash provider requires dim >= 8");
    }

    std::string name() const override { return "hash:" + std::to_string(dim_); }
    std::size_t dim() const override { return dim_; }
    EmbeddingVector embed(std::string_view text) const override { return hash_embed(text, dim_); }

private:
    std::size_t dim_;
};

} // namespace ragqa
