#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragqa/error.hpp"
#include "ragqa/qa.hpp"

namespace ragqa {

class ProbeError : public Error {
public:
    enum class Kind { invalid_spec, variant_failed, io_failure, malformed_report };

    ProbeError(Kind kind, const std::string& message, std::string code = {}, std::string variant = {})
        : Error(code.empty() ? code_for(kind) : std::move(code), message), kind_(kind), variant_(std::move(variant)) {}

    Kind kind() const noexcept { return kind_; }
    // Label of the failing variant, for variant_failed.
    const std::string& variant() const noexcept { return variant_; }

    static std::string code_for(Kind kind) {
        switch (kind) {
        case Kind::invalid_spec: return "invalid_probe_spec";
        case Kind::variant_failed: return "variant_failed";
        case Kind::io_failure: return "io_failure";
        case Kind::malformed_report: return "malformed_report";
        }
        return "probe_error";
    }

private:
    Kind kind_;
    std::string variant_;
};

struct ProbeVariant {
    std::string label;
    std::string question;

    bool operator==(const ProbeVariant&) const = default;
};

struct ProbeSpec {
    std::string name;
    std::vector<ProbeVariant> variants;
    QueryOptions options;
    std::size_t repetitions = 1;

    void validate() const {
        auto bad = [](const std::string& m) { return ProbeError(ProbeError::Kind::invalid_spec, m); };
        if (normalize_whitespace(name).empty()) throw bad("probe needs a name");
        if (variants.size() < 2) throw bad("probe needs at least two variants");
        std::set<std::string> labels;
        for (const auto& v : variants) {
            if (v.label.empty()) throw bad("variant labels must be non-empty");
            if (!labels.insert(v.label).second) throw bad("duplicate variant label '" + v.label + "'");
            if (normalize_whitespace(v.question).empty()) throw bad("variant '" + v.label + "' has an empty question");
        }
        if (repetitions < 1) throw bad("repetitions must be at least 1");
        try {
            options.validate();
        } catch (const QaError& e) {
            throw bad(e.what());
        }
    }
};

enum class Attribution { none, retrieval_stage, generation_stage };

inline std::string_view to_string(Attribution a) {
    switch (a) {
    case Attribution::none: return "none";
    case Attribution::retrieval_stage: return "retrieval-stage";
    case Attribution::generation_stage: return "generation-stage";
    }
    return "none";
}

struct VariantTranscript {
    std::string label;
    std::string question;
    std::vector<QueryResult> results;  // one per repetition

    bool operator==(const VariantTranscript&) const = default;
};

struct PairStats {
    std::string first;
    std::string second;
    double retrieval_overlap = 1.0;
    double answer_divergence = 0.0;
    Attribution attribution = Attribution::none;

    bool operator==(const PairStats&) const = default;
};

struct ProbeReport {
    std::string name;
    QueryOptions options;
    std::size_t repetitions = 1;
    std::vector<VariantTranscript> variants;
    std::vector<PairStats> pairs;  // every (i, j) with i < j, in variant order

    bool operator==(const ProbeReport&) const = default;

    const PairStats* pair(std::string_view a, std::string_view b) const {
        for (const auto& p : pairs)
            if ((p.first == a && p.second == b) || (p.first == b && p.second == a)) return &p;
        return nullptr;
    }
};

// |A ∩ B| / |A ∪ B|; two empty sets are identical (1.0).
inline double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& x : sa) inter += sb.count(x);
    return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

inline std::vector<std::string> whitespace_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::istringstream in{std::string(text)};
    for (std::string t; in >> t;) out.push_back(std::move(t));
    return out;
}

// Token-level Levenshtein distance divided by the longer token count.
inline double answer_divergence(std::string_view a, std::string_view b) {
    const auto ta = whitespace_tokens(a);
    const auto tb = whitespace_tokens(b);
    const std::size_t longest = std::max(ta.size(), tb.size());
    if (longest == 0) return 0.0;
    std::vector<std::size_t> prev(tb.size() + 1), cur(tb.size() + 1);
    for (std::size_t j = 0; j <= tb.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= ta.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= tb.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (ta[i - 1] == tb[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return static_cast<double>(prev[tb.size()]) / static_cast<double>(longest);
}

inline std::vector<std::string> included_ids(const QueryResult& r) {
    std::vector<std::string> ids;
    for (const auto& p : r.included_passages) ids.push_back(p.passage_id);
    return ids;
}

inline Attribution attribute(double overlap, double divergence) {
    if (divergence == 0.0) return Attribution::none;
    return overlap == 1.0 ? Attribution::generation_stage : Attribution::retrieval_stage;
}

// Overlap and divergence are averaged over repetition index r, pairing the
// r-th answer of one variant with the r-th answer of the other.
inline std::vector<PairStats> compute_pair_stats(const std::vector<VariantTranscript>& variants) {
    std::vector<PairStats> pairs;
    for (std::size_t i = 0; i < variants.size(); ++i) {
        for (std::size_t j = i + 1; j < variants.size(); ++j) {
            const auto& a = variants[i].results;
            const auto& b = variants[j].results;
            const std::size_t n = std::min(a.size(), b.size());
            PairStats s{variants[i].label, variants[j].label, 1.0, 0.0, Attribution::none};
            if (n > 0) {
                double overlap = 0.0, divergence = 0.0;
                for (std::size_t r = 0; r < n; ++r) {
                    overlap += jaccard(included_ids(a[r]), included_ids(b[r]));
                    divergence += answer_divergence(a[r].answer, b[r].answer);
                }
                s.retrieval_overlap = overlap / static_cast<double>(n);
                s.answer_divergence = divergence / static_cast<double>(n);
            }
            s.attribution = attribute(s.retrieval_overlap, s.answer_divergence);
            pairs.push_back(std::move(s));
        }
    }
    return pairs;
}

// Answers every variant `repetitions` times under identical options.
// Variants run concurrently; the report lists them in spec order.
inline ProbeReport run_probe(const Engine& engine, const ProbeSpec& spec) {
    spec.validate();
    std::vector<std::future<VariantTranscript>> pending;
    for (const auto& v : spec.variants) {
        pending.push_back(std::async(std::launch::async, [&engine, &spec, v] {
            VariantTranscript t{v.label, v.question, {}};
            for (std::size_t r = 0; r < spec.repetitions; ++r) {
                try {
                    t.results.push_back(engine.answer_question(v.question, spec.options));
                } catch (const Error& e) {
                    throw ProbeError(ProbeError::Kind::variant_failed, "variant '" + v.label + "': " + e.what(), e.code(), v.label);
                }
            }
            return t;
        }));
    }
    ProbeReport report;
    report.name = spec.name;
    report.options = spec.options;
    report.repetitions = spec.repetitions;
    std::exception_ptr first_error;
    for (auto& f : pending) {
        try {
            report.variants.push_back(f.get());
        } catch (...) {
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);
    report.pairs = compute_pair_stats(report.variants);
    return report;
}

inline nlohmann::ordered_json to_json(const ProbeSpec& spec) {
    nlohmann::ordered_json variants = nlohmann::ordered_json::array();
    for (const auto& v : spec.variants) variants.push_back({{"label", v.label}, {"question", v.question}});
    return {{"name", spec.name}, {"repetitions", spec.repetitions}, {"options", to_json(spec.options)}, {"variants", std::move(variants)}};
}

inline ProbeSpec probe_spec_from_json(const nlohmann::json& j) {
    auto bad = [](const std::string& m) { return ProbeError(ProbeError::Kind::invalid_spec, m); };
    if (!j.is_object()) throw bad("probe spec must be an object");
    ProbeSpec spec;
    if (!j.contains("name") || !j["name"].is_string()) throw bad("probe spec needs a string 'name'");
    spec.name = j["name"].get<std::string>();
    if (auto it = j.find("repetitions"); it != j.end()) {
        if (!it->is_number_integer() || it->get<long long>() < 1) throw bad("repetitions must be a positive integer");
        spec.repetitions = it->get<std::size_t>();
    }
    if (auto it = j.find("options"); it != j.end() && !it->is_null()) {
        try {
            spec.options = query_options_from_json(*it);
        } catch (const QaError& e) {
            throw bad(e.what());
        }
    }
    if (!j.contains("variants") || !j["variants"].is_array()) throw bad("probe spec needs a 'variants' array");
    for (const auto& v : j["variants"]) {
        if (!v.is_object() || !v.contains("label") || !v["label"].is_string() || !v.contains("question") || !v["question"].is_string())
            throw bad("each variant needs string 'label' and 'question'");
        spec.variants.push_back({v["label"].get<std::string>(), v["question"].get<std::string>()});
    }
    spec.validate();
    return spec;
}

// Probe spec file grammar (one directive per line, '#' starts a comment):
//   name: <text>                      required
//   temperature: <real>               default 0.3
//   top_k: <int>                      default 24
//   repetitions: <int>                default 1
//   order: relevance | document       default relevance
//   documents: all | <id>[, <id>...]  default all
//   passage_budget: <int>             optional budget override
//   variant <label>: <question>       two or more
inline ProbeSpec parse_probe_spec(std::string_view text) {
    ProbeSpec spec;
    std::size_t pos = 0, line_no = 0;
    auto bad = [&](const std::string& m) {
        return ProbeError(ProbeError::Kind::invalid_spec, "line " + std::to_string(line_no) + ": " + m);
    };
    auto to_size = [&](const std::string& v, const char* what) {
        try {
            std::size_t used = 0;
            const long long n = std::stoll(v, &used);
            if (used != v.size() || n < 1) throw bad(std::string(what) + " must be a positive integer");
            return static_cast<std::size_t>(n);
        } catch (const std::logic_error&) {
            throw bad(std::string(what) + " must be a positive integer");
        }
    };
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        ++line_no;
        const std::string line = detail::trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        if (line.empty() || line.front() == '#') continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) throw bad("expected '<key>: <value>'");
        const std::string key = detail::trim(std::string_view(line).substr(0, colon));
        const std::string value = detail::trim(std::string_view(line).substr(colon + 1));

        if (key == "name") {
            spec.name = value;
        } else if (key == "temperature") {
            try {
                std::size_t used = 0;
                spec.options.temperature = std::stod(value, &used);
                if (used != value.size()) throw bad("temperature must be a number");
            } catch (const std::logic_error&) {
                throw bad("temperature must be a number");
            }
        } else if (key == "top_k") {
            spec.options.top_k = to_size(value, "top_k");
        } else if (key == "repetitions") {
            spec.repetitions = to_size(value, "repetitions");
        } else if (key == "order") {
            try {
                spec.options.passage_order = parse_passage_order(value);
            } catch (const PromptError& e) {
                throw bad(e.what());
            }
        } else if (key == "documents") {
            if (value == "all") {
                spec.options.allowed_documents.reset();
            } else {
                std::unordered_set<std::string> ids;
                std::stringstream ss(value);
                for (std::string id; std::getline(ss, id, ',');) {
                    id = detail::trim(id);
                    if (!id.empty()) ids.insert(id);
                }
                spec.options.allowed_documents = std::move(ids);
            }
        } else if (key == "passage_budget") {
            PromptBudget b = spec.options.budget.value_or(PromptBudget{});
            b.passage_budget = to_size(value, "passage_budget");
            spec.options.budget = b;
        } else if (key.starts_with("variant ")) {
            const std::string label = detail::trim(std::string_view(key).substr(8));
            spec.variants.push_back({label, value});
        } else {
            throw bad("unknown key '" + key + "'");
        }
    }
    spec.validate();
    return spec;
}

inline ProbeSpec load_probe_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ProbeError(ProbeError::Kind::io_failure, "cannot read probe spec '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_probe_spec(ss.str());
}

inline nlohmann::ordered_json to_json(const ProbeReport& report) {
    nlohmann::ordered_json variants = nlohmann::ordered_json::array();
    for (const auto& v : report.variants) {
        nlohmann::ordered_json results = nlohmann::ordered_json::array();
        for (const auto& r : v.results) results.push_back(to_json(r));
        variants.push_back({{"label", v.label}, {"question", v.question}, {"results", std::move(results)}});
    }
    nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
    for (const auto& p : report.pairs) {
        pairs.push_back({{"first", p.first},
                         {"second", p.second},
                         {"retrieval_overlap", p.retrieval_overlap},
                         {"answer_divergence", p.answer_divergence},
                         {"attribution", to_string(p.attribution)}});
    }
    return {{"name", report.name},
            {"repetitions", report.repetitions},
            {"options", to_json(report.options)},
            {"variants", std::move(variants)},
            {"pairs", std::move(pairs)}};
}

inline ProbeReport probe_report_from_json(const nlohmann::json& j) {
    try {
        ProbeReport r;
        r.name = j.at("name").get<std::string>();
        r.repetitions = j.at("repetitions").get<std::size_t>();
        r.options = query_options_from_json(j.at("options"));
        for (const auto& v : j.at("variants")) {
            VariantTranscript t{v.at("label").get<std::string>(), v.at("question").get<std::string>(), {}};
            for (const auto& res : v.at("results")) t.results.push_back(query_result_from_json(res));
            r.variants.push_back(std::move(t));
        }
        for (const auto& p : j.at("pairs")) {
            const auto a = p.at("attribution").get<std::string>();
            const Attribution attr = a == "retrieval-stage" ? Attribution::retrieval_stage
                                     : a == "generation-stage" ? Attribution::generation_stage
                                                               : Attribution::none;
            r.pairs.push_back({p.at("first").get<std::string>(), p.at("second").get<std::string>(),
                               p.at("retrieval_overlap").get<double>(), p.at("answer_divergence").get<double>(), attr});
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ProbeError(ProbeError::Kind::malformed_report, std::string("malformed probe report: ") + e.what());
    } catch (const QaError& e) {
        throw ProbeError(ProbeError::Kind::malformed_report, std::string("malformed probe report: ") + e.what());
    }
}

enum class ReportFormat { text, json };

inline constexpr std::string_view kReportJsonFence = "\n```json\n";

// Human-readable Markdown: summary table, then every transcript verbatim,
// then the complete machine-readable report in a ```json fence.
inline std::string render_report_text(const ProbeReport& report) {
    std::ostringstream out;
    out << "# Probe report: " << report.name << "\n\n";
    out << "- temperature: " << report.options.temperature << "\n";
    out << "- top_k: " << report.options.top_k << "\n";
    out << "- passage order: " << to_string(report.options.passage_order) << "\n";
    out << "- repetitions: " << report.repetitions << "\n";
    out << "- documents: ";
    if (report.options.allowed_documents) {
        std::vector<std::string> ids(report.options.allowed_documents->begin(), report.options.allowed_documents->end());
        std::sort(ids.begin(), ids.end());
        for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? ", " : "") << ids[i];
    } else {
        out << "all";
    }
    out << "\n\n## Pairwise comparison\n\n";
    out << "| first | second | retrieval overlap | answer divergence | attribution |\n";
    out << "|---|---|---|---|---|\n";
    for (const auto& p : report.pairs) {
        char overlap[32], divergence[32];
        std::snprintf(overlap, sizeof overlap, "%.4f", p.retrieval_overlap);
        std::snprintf(divergence, sizeof divergence, "%.4f", p.answer_divergence);
        out << "| " << p.first << " | " << p.second << " | " << overlap << " | " << divergence << " | "
            << to_string(p.attribution) << " |\n";
    }
    for (const auto& v : report.variants) {
        out << "\n## Variant: " << v.label << "\n\n";
        out << "Question: " << v.question << "\n";
        for (std::size_t r = 0; r < v.results.size(); ++r) {
            const auto& res = v.results[r];
            out << "\n### Repetition " << (r + 1) << "\n\n";
            out << "Answer:\n\n" << res.answer << "\n\n";
            out << "Sources:\n\n";
            for (const auto& p : res.included_passages) {
                char d[32];
                std::snprintf(d, sizeof d, "%.4f", p.distance);
                out << "- " << p.passage_id << " (distance " << d << ") " << p.document_title << "\n";
            }
        }
    }
    out << "\n## Machine-readable report\n" << kReportJsonFence << to_json(report).dump(2) << "\n```\n";
    return out.str();
}

inline void export_report(const ProbeReport& report, const std::filesystem::path& path, ReportFormat format = ReportFormat::text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ProbeError(ProbeError::Kind::io_failure, "cannot write report to '" + path.string() + "'");
    if (format == ReportFormat::json) {
        out << to_json(report).dump(2) << '\n';
    } else {
        out << render_report_text(report);
    }
    out.flush();
    if (!out) throw ProbeError(ProbeError::Kind::io_failure, "write to '" + path.string() + "' failed");
}

// Reads either export format back.
inline ProbeReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ProbeError(ProbeError::Kind::io_failure, "cannot read report '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    std::string body = ss.str();
    if (!body.empty() && body.front() != '{') {
        const auto start = body.rfind(kReportJsonFence);
        if (start == std::string::npos) throw ProbeError(ProbeError::Kind::malformed_report, "report has no JSON block");
        const auto from = start + kReportJsonFence.size();
        const auto end = body.rfind("\n```");
        if (end == std::string::npos || end <= from) throw ProbeError(ProbeError::Kind::malformed_report, "unterminated JSON block");
        body = body.substr(from, end - from);
    }
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) throw ProbeError(ProbeError::Kind::malformed_report, "report JSON does not parse");
    return probe_report_from_json(j);
}

} // namespace ragqa
