#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragqa/corpus.hpp"
#include "ragqa/embeddings.hpp"
#include "ragqa/error.hpp"
#include "ragqa/llm_client.hpp"
#include "ragqa/promptkit.hpp"
#include "ragqa/segmenter.hpp"
#include "ragqa/vector_index.hpp"

namespace ragqa {

enum class Stage { validate, ingest, embed, retrieve, assemble, complete };

inline std::string_view to_string(Stage s) {
    switch (s) {
    case Stage::validate: return "validate";
    case Stage::ingest: return "ingest";
    case Stage::embed: return "embed";
    case Stage::retrieve: return "retrieve";
    case Stage::assemble: return "assemble";
    case Stage::complete: return "complete";
    }
    return "validate";
}

class QaError : public Error {
public:
    enum class Kind {
        empty_question,
        empty_corpus,
        empty_selection,
        invalid_options,
        invalid_question,
        duplicate_document,
        backend_failure,
    };

    QaError(Kind kind, Stage stage, const std::string& message, std::string code = {})
        : Error(code.empty() ? code_for(kind) : std::move(code), message), kind_(kind), stage_(stage) {}

    Kind kind() const noexcept { return kind_; }
    Stage stage() const noexcept { return stage_; }

    static std::string code_for(Kind kind) {
        switch (kind) {
        case Kind::empty_question: return "empty_question";
        case Kind::empty_corpus: return "empty_corpus";
        case Kind::empty_selection: return "empty_corpus_selection";
        case Kind::invalid_options: return "invalid_options";
        case Kind::invalid_question: return "invalid_question";
        case Kind::duplicate_document: return "duplicate_document";
        case Kind::backend_failure: return "backend_failure";
        }
        return "qa_error";
    }

private:
    Kind kind_;
    Stage stage_;
};

struct QueryOptions {
    DocumentFilter allowed_documents;
    double temperature = kDefaultTemperature;
    std::size_t top_k = 24;
    PassageOrder passage_order = PassageOrder::relevance;
    std::optional<PromptBudget> budget;

    bool operator==(const QueryOptions&) const = default;

    void validate() const {
        if (top_k < 1) throw QaError(QaError::Kind::invalid_options, Stage::validate, "top_k must be at least 1");
        if (!std::isfinite(temperature) || temperature < 0.0 || temperature > 2.0)
            throw QaError(QaError::Kind::invalid_options, Stage::validate, "temperature must be within [0, 2]");
        if (budget) {
            try {
                budget->validate();
            } catch (const PromptError& e) {
                throw QaError(QaError::Kind::invalid_options, Stage::validate, e.what());
            }
        }
    }
};

struct IncludedPassage {
    std::string passage_id;
    std::string document_id;
    std::string document_title;
    std::vector<std::string> heading_path;
    double distance = 0.0;
    std::string flattened_text;

    bool operator==(const IncludedPassage&) const = default;
};

struct BundleStats {
    std::size_t passage_tokens_used = 0;
    std::size_t prompt_tokens = 0;
    std::size_t total_hits = 0;
    std::size_t skipped_count = 0;
    bool no_passages_fit = false;
    PromptBudget budget;

    bool operator==(const BundleStats&) const = default;
};

struct QueryResult {
    std::string question;
    std::string answer;
    FinishReason finish_reason = FinishReason::stop;
    std::vector<IncludedPassage> included_passages;
    BundleStats bundle_stats;
    std::string backend;
    std::string model;
    double temperature = kDefaultTemperature;
    std::string timestamp;

    bool operator==(const QueryResult&) const = default;

    bool same_except_timestamp(const QueryResult& other) const {
        QueryResult a = *this;
        a.timestamp = other.timestamp;
        return a == other;
    }
};

struct DocumentInfo {
    std::string document_id;
    std::string title;
    std::size_t passage_count = 0;
};

struct IngestReport {
    std::string document_id;
    std::size_t passage_count = 0;
};

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct EngineConfig {
    SegmentationPolicy policy;
    TokenCounter counter = TokenCounter::word_ratio();
    PromptBudget budget;
    std::string model_name{kDefaultModel};
    const PromptTemplate* prompt_template = nullptr;
};

// Retrieval and assembly output for one question; everything the backend
// call needs.
struct PreparedQuery {
    std::vector<RetrievedPassage> hits;
    PromptBundle bundle;
};

// Owns the passage store and vector index and runs the question pipeline:
// embed -> search -> assemble -> complete. Ingestion takes the engine lock
// exclusively; queries hold it shared across retrieval and assembly and
// release it before calling the chat backend.
class Engine {
public:
    Engine(std::shared_ptr<const EmbeddingProvider> embedder, std::shared_ptr<const ChatBackend> backend, EngineConfig config = {})
        : embedder_(std::move(embedder)), backend_(std::move(backend)), config_(std::move(config)),
          index_(std::make_unique<VectorIndex>(embedder_->dim())) {
        config_.policy.validate();
        config_.budget.validate();
    }

    const EngineConfig& config() const noexcept { return config_; }
    const EmbeddingProvider& embedder() const noexcept { return *embedder_; }
    const ChatBackend& backend() const noexcept { return *backend_; }

    // All-or-nothing: a failure leaves the corpus unchanged.
    IngestReport ingest(const Document& doc) {
        {
            std::shared_lock lock(mutex_);
            if (doc_pos_.contains(doc.id))
                throw QaError(QaError::Kind::duplicate_document, Stage::ingest, "document '" + doc.id + "' is already ingested");
        }
        auto passages = segment_document(doc, config_.policy, config_.counter);
        std::vector<std::string> texts;
        texts.reserve(passages.size());
        for (const auto& p : passages) texts.push_back(p.text);
        std::vector<EmbeddingVector> vectors;
        try {
            vectors = embedder_->embed_batch(texts);
        } catch (const Error& e) {
            throw QaError(QaError::Kind::backend_failure, Stage::embed, e.what(), e.code());
        }

        std::vector<IndexEntry> entries;
        entries.reserve(passages.size());
        for (std::size_t i = 0; i < passages.size(); ++i)
            entries.push_back({passages[i].id, passages[i].document_id, vectors[i], 0});

        std::unique_lock lock(mutex_);
        if (doc_pos_.contains(doc.id))
            throw QaError(QaError::Kind::duplicate_document, Stage::ingest, "document '" + doc.id + "' is already ingested");
        index_->insert_all(entries);
        store_document_locked(doc, std::move(passages));
        return {doc.id, documents_.back().passage_count};
    }

    std::vector<DocumentInfo> documents() const {
        std::shared_lock lock(mutex_);
        std::vector<DocumentInfo> out;
        out.reserve(documents_.size());
        for (const auto& d : documents_) out.push_back({d.doc.id, d.doc.title, d.passage_count});
        return out;
    }

    std::optional<Document> document(const std::string& id) const {
        std::shared_lock lock(mutex_);
        auto it = doc_pos_.find(id);
        if (it == doc_pos_.end()) return std::nullopt;
        return documents_[it->second].doc;
    }

    std::optional<Passage> passage(const std::string& id) const {
        std::shared_lock lock(mutex_);
        auto it = passages_.find(id);
        if (it == passages_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t passage_count() const {
        std::shared_lock lock(mutex_);
        return passages_.size();
    }

    std::size_t document_count() const {
        std::shared_lock lock(mutex_);
        return documents_.size();
    }

    // Index entries in insertion order; lets tests run an independent k-NN.
    std::vector<IndexEntry> index_entries() const {
        std::shared_lock lock(mutex_);
        return index_->entries();
    }

    // Embed, search and assemble. Pure for a fixed index state.
    PreparedQuery prepare(std::string_view question, const QueryOptions& options) const {
        if (normalize_whitespace(question).empty())
            throw QaError(QaError::Kind::empty_question, Stage::validate, "question is empty");
        options.validate();
        if (options.allowed_documents && options.allowed_documents->empty())
            throw QaError(QaError::Kind::empty_selection, Stage::validate, "no documents selected");

        EmbeddingVector query;
        try {
            query = embedder_->embed(question);
        } catch (const Error& e) {
            throw QaError(QaError::Kind::backend_failure, Stage::embed, e.what(), e.code());
        }

        std::shared_lock lock(mutex_);
        if (documents_.empty()) throw QaError(QaError::Kind::empty_corpus, Stage::retrieve, "the corpus is empty");
        if (options.allowed_documents) {
            bool any = false;
            for (const auto& id : *options.allowed_documents) any = any || doc_pos_.contains(id);
            if (!any) throw QaError(QaError::Kind::empty_selection, Stage::retrieve, "none of the selected documents are in the corpus");
        }

        PreparedQuery out;
        for (auto& hit : index_->search(query, options.top_k, options.allowed_documents))
            out.hits.push_back({passages_.at(hit.passage_id), hit.distance});

        AssemblyOptions assembly;
        assembly.order = options.passage_order;
        assembly.prompt_template = config_.prompt_template;
        try {
            out.bundle = assemble_prompt(question, out.hits, options.budget.value_or(config_.budget), config_.counter, assembly);
        } catch (const PromptError& e) {
            throw QaError(QaError::Kind::invalid_question, Stage::assemble, e.what(), e.code());
        }
        return out;
    }

    QueryResult answer_question(std::string_view question, const QueryOptions& options = {}) const {
        PreparedQuery prepared = prepare(question, options);
        const PromptBundle& bundle = prepared.bundle;

        CompletionRequest request;
        request.messages = bundle.messages;
        request.temperature = options.temperature;
        request.model_name = config_.model_name;
        request.max_answer_tokens = bundle.budget.answer_reserve;

        CompletionResult completion;
        try {
            completion = backend_->complete(request);
        } catch (const Error& e) {
            throw QaError(QaError::Kind::backend_failure, Stage::complete, e.what(), e.code());
        }

        QueryResult result;
        result.question = std::string(question);
        result.answer = std::move(completion.text);
        result.finish_reason = completion.finish_reason;
        result.backend = backend_->name();
        result.model = config_.model_name;
        result.temperature = options.temperature;
        result.timestamp = utc_timestamp();
        result.bundle_stats = {bundle.passage_tokens_used, bundle.prompt_tokens, bundle.offered,
                               bundle.skipped_count(), bundle.no_passages_fit, bundle.budget};
        for (const auto& packed : bundle.packed) {
            const RetrievedPassage* src = nullptr;
            for (const auto& h : prepared.hits)
                if (h.passage.id == packed.passage_id) src = &h;
            result.included_passages.push_back({packed.passage_id, packed.document_id, src->passage.document_title,
                                                src->passage.heading_path, packed.distance, packed.flattened});
        }
        return result;
    }

    // Writes the vector index to `index_path` and the corpus (documents,
    // passages, embedder identity) to `<index_path>.corpus.json`.
    void save(const std::filesystem::path& index_path) const {
        std::shared_lock lock(mutex_);
        nlohmann::ordered_json side;
        side["format"] = "ragqa-corpus";
        side["version"] = 1;
        side["embedder"] = embedder_->name();
        side["dim"] = embedder_->dim();
        side["token_counter"] = config_.counter.name;
        side["policy"] = {{"whole_section_max_tokens", config_.policy.whole_section_max_tokens},
                          {"merge_min_tokens", config_.policy.merge_min_tokens}};
        side["documents"] = nlohmann::ordered_json::array();
        for (const auto& d : documents_) {
            auto j = to_json(d.doc);
            j["passage_ids"] = d.passage_ids;
            side["documents"].push_back(std::move(j));
        }
        side["passages"] = nlohmann::ordered_json::array();
        for (const auto& d : documents_)
            for (const auto& pid : d.passage_ids) side["passages"].push_back(to_json(passages_.at(pid)));

        index_->save(index_path);
        const auto side_path = sidecar_path(index_path);
        std::ofstream out(side_path, std::ios::trunc);
        if (!out) throw IndexError(IndexError::Kind::io_failure, "cannot write '" + side_path.string() + "'");
        out << side.dump(1) << '\n';
        if (!out) throw IndexError(IndexError::Kind::io_failure, "write to '" + side_path.string() + "' failed");
    }

    static std::filesystem::path sidecar_path(const std::filesystem::path& index_path) {
        return std::filesystem::path(index_path.string() + ".corpus.json");
    }

    // Reads the embedder name recorded by save() without loading the index.
    static std::string recorded_embedder(const std::filesystem::path& index_path) {
        return read_sidecar(index_path).at("embedder").get<std::string>();
    }

    static std::unique_ptr<Engine> load(const std::filesystem::path& index_path, std::shared_ptr<const EmbeddingProvider> embedder,
                                        std::shared_ptr<const ChatBackend> backend, EngineConfig config = {}) {
        const auto side = read_sidecar(index_path);
        const auto recorded = side.at("embedder").get<std::string>();
        if (recorded != embedder->name())
            throw IndexError(IndexError::Kind::format_mismatch,
                             "index was built with embedder '" + recorded + "', not '" + embedder->name() + "'");
        config.policy.whole_section_max_tokens = side.at("policy").at("whole_section_max_tokens").get<std::size_t>();
        config.policy.merge_min_tokens = side.at("policy").at("merge_min_tokens").get<std::size_t>();

        auto engine = std::make_unique<Engine>(std::move(embedder), std::move(backend), std::move(config));
        engine->index_ = VectorIndex::load(index_path, engine->embedder_->dim());

        std::unordered_map<std::string, Passage> by_id;
        for (const auto& pj : side.at("passages")) {
            auto p = passage_from_json(pj);
            by_id.emplace(p.id, std::move(p));
        }
        for (const auto& dj : side.at("documents")) {
            Document doc = document_from_json(dj);
            std::vector<Passage> ps;
            for (const auto& pid : dj.at("passage_ids")) {
                auto it = by_id.find(pid.get<std::string>());
                if (it == by_id.end() || !engine->index_->contains(it->first))
                    throw IndexError(IndexError::Kind::format_mismatch, "corpus sidecar and index disagree on passage '" +
                                                                            pid.get<std::string>() + "'");
                ps.push_back(it->second);
            }
            engine->store_document_locked(doc, std::move(ps));
        }
        if (engine->passages_.size() != engine->index_->size())
            throw IndexError(IndexError::Kind::format_mismatch, "index holds passages missing from the corpus sidecar");
        return engine;
    }

private:
    struct StoredDocument {
        Document doc;
        std::size_t passage_count = 0;
        std::vector<std::string> passage_ids;
    };

    static nlohmann::json read_sidecar(const std::filesystem::path& index_path) {
        const auto path = sidecar_path(index_path);
        std::ifstream in(path);
        if (!in) throw IndexError(IndexError::Kind::io_failure, "cannot open corpus sidecar '" + path.string() + "'");
        auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded() || j.value("format", std::string()) != "ragqa-corpus" || j.value("version", 0) != 1)
            throw IndexError(IndexError::Kind::format_mismatch, "'" + path.string() + "' is not a version 1 corpus sidecar");
        return j;
    }

    void store_document_locked(const Document& doc, std::vector<Passage> passages) {
        StoredDocument sd{doc, passages.size(), {}};
        for (auto& p : passages) {
            sd.passage_ids.push_back(p.id);
            passages_.emplace(p.id, std::move(p));
        }
        doc_pos_.emplace(doc.id, documents_.size());
        documents_.push_back(std::move(sd));
    }

    std::shared_ptr<const EmbeddingProvider> embedder_;
    std::shared_ptr<const ChatBackend> backend_;
    EngineConfig config_;
    std::unique_ptr<VectorIndex> index_;
    std::vector<StoredDocument> documents_;  // ingestion order
    std::unordered_map<std::string, std::size_t> doc_pos_;
    std::unordered_map<std::string, Passage> passages_;
    mutable std::shared_mutex mutex_;
};

inline nlohmann::ordered_json to_json(const QueryResult& r) {
    nlohmann::ordered_json included = nlohmann::ordered_json::array();
    for (const auto& p : r.included_passages) {
        included.push_back({{"passage_id", p.passage_id},
                            {"document_id", p.document_id},
                            {"document_title", p.document_title},
                            {"heading_path", p.heading_path},
                            {"distance", p.distance},
                            {"flattened_text", p.flattened_text}});
    }
    const auto& s = r.bundle_stats;
    return {{"question", r.question},
            {"answer", r.answer},
            {"finish_reason", to_string(r.finish_reason)},
            {"backend", r.backend},
            {"model", r.model},
            {"temperature", r.temperature},
            {"included_passages", std::move(included)},
            {"bundle_stats",
             {{"passage_tokens_used", s.passage_tokens_used},
              {"prompt_tokens", s.prompt_tokens},
              {"total_hits", s.total_hits},
              {"skipped_count", s.skipped_count},
              {"no_passages_fit", s.no_passages_fit},
              {"passage_budget", s.budget.passage_budget},
              {"context_limit", s.budget.context_limit},
              {"answer_reserve", s.budget.answer_reserve}}},
            {"timestamp", r.timestamp}};
}

inline QueryResult query_result_from_json(const nlohmann::json& j) {
    QueryResult r;
    r.question = j.at("question").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    const auto reason = j.at("finish_reason").get<std::string>();
    r.finish_reason = reason == "stop" ? FinishReason::stop : reason == "length" ? FinishReason::length : FinishReason::error;
    r.backend = j.at("backend").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.temperature = j.at("temperature").get<double>();
    for (const auto& p : j.at("included_passages")) {
        r.included_passages.push_back({p.at("passage_id").get<std::string>(), p.at("document_id").get<std::string>(),
                                       p.at("document_title").get<std::string>(),
                                       p.at("heading_path").get<std::vector<std::string>>(), p.at("distance").get<double>(),
                                       p.at("flattened_text").get<std::string>()});
    }
    const auto& s = j.at("bundle_stats");
    r.bundle_stats.passage_tokens_used = s.at("passage_tokens_used").get<std::size_t>();
    r.bundle_stats.prompt_tokens = s.at("prompt_tokens").get<std::size_t>();
    r.bundle_stats.total_hits = s.at("total_hits").get<std::size_t>();
    r.bundle_stats.skipped_count = s.at("skipped_count").get<std::size_t>();
    r.bundle_stats.no_passages_fit = s.at("no_passages_fit").get<bool>();
    r.bundle_stats.budget = {s.at("passage_budget").get<std::size_t>(), s.at("context_limit").get<std::size_t>(),
                             s.at("answer_reserve").get<std::size_t>()};
    r.timestamp = j.at("timestamp").get<std::string>();
    return r;
}

inline nlohmann::ordered_json to_json(const QueryOptions& o) {
    nlohmann::ordered_json j;
    if (o.allowed_documents) {
        std::vector<std::string> ids(o.allowed_documents->begin(), o.allowed_documents->end());
        std::sort(ids.begin(), ids.end());
        j["allowed_documents"] = ids;
    } else {
        j["allowed_documents"] = nullptr;
    }
    j["temperature"] = o.temperature;
    j["top_k"] = o.top_k;
    j["passage_order"] = to_string(o.passage_order);
    if (o.budget)
        j["budget"] = {{"passage_budget", o.budget->passage_budget},
                       {"context_limit", o.budget->context_limit},
                       {"answer_reserve", o.budget->answer_reserve}};
    return j;
}

// Reads the optional fields of a query or probe body over `defaults`.
// Throws QaError(invalid_options) on wrongly typed fields.
inline QueryOptions query_options_from_json(const nlohmann::json& j, QueryOptions defaults = {}) {
    auto bad = [](const std::string& what) -> QaError {
        return QaError(QaError::Kind::invalid_options, Stage::validate, what);
    };
    QueryOptions o = std::move(defaults);
    if (!j.is_object()) throw bad("options must be an object");
    if (auto it = j.find("allowed_documents"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) throw bad("allowed_documents must be an array of document ids");
        std::unordered_set<std::string> ids;
        for (const auto& id : *it) {
            if (!id.is_string()) throw bad("allowed_documents must be an array of document ids");
            ids.insert(id.get<std::string>());
        }
        o.allowed_documents = std::move(ids);
    }
    if (auto it = j.find("temperature"); it != j.end() && !it->is_null()) {
        if (!it->is_number()) throw bad("temperature must be a number");
        o.temperature = it->get<double>();
    }
    if (auto it = j.find("top_k"); it != j.end() && !it->is_null()) {
        if (!it->is_number_integer() || it->get<long long>() < 1) throw bad("top_k must be a positive integer");
        o.top_k = it->get<std::size_t>();
    }
    if (auto it = j.find("passage_order"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw bad("passage_order must be 'relevance' or 'document'");
        try {
            o.passage_order = parse_passage_order(it->get<std::string>());
        } catch (const PromptError& e) {
            throw bad(e.what());
        }
    }
    if (auto it = j.find("budget"); it != j.end() && !it->is_null()) {
        if (!it->is_object()) throw bad("budget must be an object");
        PromptBudget b = o.budget.value_or(PromptBudget{});
        try {
            b.passage_budget = it->value("passage_budget", b.passage_budget);
            b.context_limit = it->value("context_limit", b.context_limit);
            b.answer_reserve = it->value("answer_reserve", b.answer_reserve);
        } catch (const nlohmann::json::exception&) {
            throw bad("budget fields must be non-negative integers");
        }
        o.budget = b;
    }
    o.validate();
    return o;
}

} // namespace ragqa
