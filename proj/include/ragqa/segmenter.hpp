#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ragqa/corpus.hpp"
#include "ragqa/error.hpp"

namespace ragqa {

// Default token estimate: ceil(4w/3) for w whitespace-separated words, so
// 150 words count as 200 tokens and 2,250 words as 3,000.
inline std::size_t default_token_count(std::string_view text) {
    const std::size_t words = detail::word_count(text);
    return (4 * words + 2) / 3;
}

struct TokenCounter {
    std::string name;
    std::function<std::size_t(std::string_view)> count;

    std::size_t operator()(std::string_view text) const { return count(text); }

    static TokenCounter word_ratio() { return {"word-ratio-4/3", &default_token_count}; }
};

class SegmentError : public Error {
public:
    enum class Kind { empty_section, invalid_policy };

    SegmentError(Kind kind, const std::string& message)
        : Error(kind == Kind::empty_section ? "empty_section" : "invalid_policy", message), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct SegmentationPolicy {
    std::size_t whole_section_max_tokens = 200;
    std::size_t merge_min_tokens = 100;

    void validate() const {
        if (merge_min_tokens == 0 || whole_section_max_tokens <= merge_min_tokens)
            throw SegmentError(SegmentError::Kind::invalid_policy,
                               "segmentation policy requires whole_section_max_tokens > merge_min_tokens > 0");
    }
};

struct DocumentMeta {
    std::string id;
    std::string title;
};

struct Passage {
    std::string id;
    std::string document_id;
    std::string document_title;
    std::vector<std::string> heading_path;
    std::string text;
    std::size_t token_count = 0;
    std::size_t ordinal = 0;  // position within the document
    std::size_t paragraph_count = 0;

    bool operator==(const Passage&) const = default;
};

inline std::string make_passage_id(std::string_view document_id, std::size_t ordinal) {
    std::string id(document_id);
    id += ':';
    id += std::to_string(ordinal);
    return id;
}

namespace detail {

inline std::string join_lines(const std::vector<Paragraph>& paragraphs, std::size_t first, std::size_t last) {
    std::string out;
    for (std::size_t i = first; i < last; ++i) {
        if (i != first) out.push_back('\n');
        out += paragraphs[i].text;
    }
    return out;
}

} // namespace detail

// Splits one section into passages. Ordinals are local to the section
// (0..n-1); segment_document renumbers them per document.
inline std::vector<Passage> segment_section(const Section& section, const DocumentMeta& meta,
                                            const SegmentationPolicy& policy, const TokenCounter& counter) {
    policy.validate();
    if (section.paragraphs.empty())
        throw SegmentError(SegmentError::Kind::empty_section, "cannot segment a section without paragraphs");

    const auto& paras = section.paragraphs;
    std::vector<Passage> out;

    auto emit = [&](std::size_t first, std::size_t last) {
        Passage p;
        p.document_id = meta.id;
        p.document_title = meta.title;
        p.heading_path = section.heading_path;
        p.text = detail::join_lines(paras, first, last);
        p.token_count = counter(p.text);
        p.ordinal = out.size();
        p.id = make_passage_id(meta.id, p.ordinal);
        p.paragraph_count = last - first;
        out.push_back(std::move(p));
    };

    const std::string whole = detail::join_lines(paras, 0, paras.size());
    if (counter(whole) < policy.whole_section_max_tokens) {
        emit(0, paras.size());
        return out;
    }

    std::size_t start = 0;
    for (std::size_t i = 0; i < paras.size(); ++i) {
        if (counter(detail::join_lines(paras, start, i + 1)) >= policy.merge_min_tokens) {
            emit(start, i + 1);
            start = i + 1;
        }
    }
    if (start < paras.size()) {
        if (out.empty()) {
            emit(start, paras.size());
        } else {
            // Sub-minimum tail joins the last emitted passage.
            Passage& last = out.back();
            last.text += '\n';
            last.text += detail::join_lines(paras, start, paras.size());
            last.token_count = counter(last.text);
            last.paragraph_count += paras.size() - start;
        }
    }
    return out;
}

inline std::vector<Passage> segment_document(const Document& doc, const SegmentationPolicy& policy = {},
                                             const TokenCounter& counter = TokenCounter::word_ratio()) {
    const DocumentMeta meta{doc.id, doc.title};
    std::vector<Passage> out;
    for (const auto& section : doc.sections) {
        if (section.paragraphs.empty()) continue;
        for (auto& p : segment_section(section, meta, policy, counter)) {
            p.ordinal = out.size();
            p.id = make_passage_id(doc.id, p.ordinal);
            out.push_back(std::move(p));
        }
    }
    return out;
}

inline nlohmann::ordered_json to_json(const Passage& p) {
    return {{"id", p.id},
            {"document_id", p.document_id},
            {"document_title", p.document_title},
            {"heading_path", p.heading_path},
            {"text", p.text},
            {"token_count", p.token_count},
            {"ordinal", p.ordinal},
            {"paragraph_count", p.paragraph_count}};
}

inline Passage passage_from_json(const nlohmann::json& j) {
    Passage p;
    p.id = j.at("id").get<std::string>();
    p.document_id = j.at("document_id").get<std::string>();
    p.document_title = j.at("document_title").get<std::string>();
    p.heading_path = j.at("heading_path").get<std::vector<std::string>>();
    p.text = j.at("text").get<std::string>();
    p.token_count = j.at("token_count").get<std::size_t>();
    p.ordinal = j.at("ordinal").get<std::size_t>();
    p.paragraph_count = j.value("paragraph_count", std::size_t{0});
    return p;
}

} // namespace ragqa
