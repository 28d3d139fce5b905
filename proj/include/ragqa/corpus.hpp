#pragma once

#include <algorithm>
#include <cstddef>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragqa/error.hpp"

namespace ragqa {

enum class ParagraphKind { prose, list_item };

inline std::string_view to_string(ParagraphKind kind) {
    return kind == ParagraphKind::list_item ? "list_item" : "prose";
}

struct Paragraph {
    std::string text;  // whitespace-normalized, never empty
    ParagraphKind kind = ParagraphKind::prose;

    bool operator==(const Paragraph&) const = default;
};

struct Section {
    std::vector<std::string> heading_path;  // outermost first; empty for front matter
    std::vector<Paragraph> paragraphs;

    bool operator==(const Section&) const = default;
};

struct Document {
    std::string id;
    std::string title;
    std::vector<Section> sections;

    bool operator==(const Document&) const = default;

    std::size_t paragraph_count() const {
        std::size_t n = 0;
        for (const auto& s : sections) n += s.paragraphs.size();
        return n;
    }
};

class CorpusError : public Error {
public:
    enum class Kind { malformed_format, empty_document };

    CorpusError(Kind kind, const std::string& message, std::size_t line = 0, std::size_t column = 0)
        : Error(kind == Kind::malformed_format ? "malformed_format" : "empty_document", message),
          kind_(kind), line_(line), column_(column) {}

    Kind kind() const noexcept { return kind_; }
    // 1-based; 0 when the error has no source position.
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    Kind kind_;
    std::size_t line_;
    std::size_t column_;
};

inline bool is_ascii_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Collapses every run of ASCII whitespace to one space and trims both ends.
inline std::string normalize_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_ascii_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

namespace detail {

inline std::pair<std::size_t, std::size_t> line_and_column(std::string_view raw, std::size_t byte) {
    // nlohmann reports the 1-based byte index of the offending character.
    std::size_t line = 1;
    std::size_t column = 1;
    const std::size_t end = std::min(raw.size(), byte == 0 ? 0 : byte - 1);
    for (std::size_t i = 0; i < end; ++i) {
        if (raw[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

[[noreturn]] inline void malformed(const std::string& what) {
    throw CorpusError(CorpusError::Kind::malformed_format, what);
}

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) malformed(where + ": missing field '" + key + "'");
    return *it;
}

inline ParagraphKind parse_kind(const nlohmann::json& node, const std::string& where) {
    if (!node.is_string()) malformed(where + ": 'kind' must be a string");
    const auto& s = node.get_ref<const std::string&>();
    if (s == "prose") return ParagraphKind::prose;
    if (s == "list_item") return ParagraphKind::list_item;
    malformed(where + ": unknown paragraph kind '" + s + "'");
}

} // namespace detail

// Builds a Document from an already-parsed interchange object. A non-empty
// `id` overrides the object's own `id` field.
inline Document document_from_json(const nlohmann::json& root, std::string id = {}) {
    using detail::malformed;
    using detail::require_field;

    if (!root.is_object()) malformed("document: expected an object");

    Document doc;
    if (id.empty()) {
        const auto& node = require_field(root, "id", "document");
        if (!node.is_string() || node.get_ref<const std::string&>().empty())
            malformed("document: 'id' must be a non-empty string");
        doc.id = node.get<std::string>();
    } else {
        doc.id = std::move(id);
    }

    const auto& title = require_field(root, "title", "document");
    if (!title.is_string()) malformed("document: 'title' must be a string");
    doc.title = normalize_whitespace(title.get_ref<const std::string&>());
    if (doc.title.empty())
        throw CorpusError(CorpusError::Kind::empty_document, "document '" + doc.id + "' has no title");

    const auto& sections = require_field(root, "sections", "document");
    if (!sections.is_array()) malformed("document: 'sections' must be an array");

    for (std::size_t si = 0; si < sections.size(); ++si) {
        const auto& sec = sections[si];
        const std::string where = "sections[" + std::to_string(si) + "]";
        if (!sec.is_object()) malformed(where + ": expected an object");

        Section section;
        if (auto hp = sec.find("heading_path"); hp != sec.end()) {
            if (!hp->is_array()) malformed(where + ": 'heading_path' must be an array");
            for (const auto& h : *hp) {
                if (!h.is_string()) malformed(where + ": heading_path entries must be strings");
                auto heading = normalize_whitespace(h.get_ref<const std::string&>());
                if (heading.empty()) malformed(where + ": heading_path entries must be non-empty");
                section.heading_path.push_back(std::move(heading));
            }
        }

        const auto& paras = require_field(sec, "paragraphs", where);
        if (!paras.is_array()) malformed(where + ": 'paragraphs' must be an array");
        for (std::size_t pi = 0; pi < paras.size(); ++pi) {
            const auto& p = paras[pi];
            const std::string pwhere = where + ".paragraphs[" + std::to_string(pi) + "]";
            if (!p.is_object()) malformed(pwhere + ": expected an object");
            const auto& text = require_field(p, "text", pwhere);
            if (!text.is_string()) malformed(pwhere + ": 'text' must be a string");

            Paragraph para;
            para.text = normalize_whitespace(text.get_ref<const std::string&>());
            if (auto k = p.find("kind"); k != p.end()) para.kind = detail::parse_kind(*k, pwhere);
            // Whitespace-only payloads carry no text and are dropped.
            if (!para.text.empty()) section.paragraphs.push_back(std::move(para));
        }
        doc.sections.push_back(std::move(section));
    }
    return doc;
}

// Parses one document in the structured interchange format (see
// docs/formats.md). Throws CorpusError.
inline Document parse_structured_document(std::string_view raw, std::string id = {}) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error& e) {
        auto [line, column] = detail::line_and_column(raw, e.byte);
        throw CorpusError(CorpusError::Kind::malformed_format,
                          "syntax error at line " + std::to_string(line) + ", column " +
                              std::to_string(column) + ": " + e.what(),
                          line, column);
    }
    return document_from_json(root, std::move(id));
}

inline nlohmann::ordered_json to_json(const Document& doc) {
    nlohmann::ordered_json sections = nlohmann::ordered_json::array();
    for (const auto& s : doc.sections) {
        nlohmann::ordered_json paras = nlohmann::ordered_json::array();
        for (const auto& p : s.paragraphs)
            paras.push_back({{"text", p.text}, {"kind", to_string(p.kind)}});
        sections.push_back({{"heading_path", s.heading_path}, {"paragraphs", std::move(paras)}});
    }
    return {{"id", doc.id}, {"title", doc.title}, {"sections", std::move(sections)}};
}

inline std::string serialize_document(const Document& doc, int indent = 2) {
    return to_json(doc).dump(indent);
}

namespace detail {

constexpr std::size_t kHeadingMaxWords = 12;

inline std::size_t word_count(std::string_view text) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : text) {
        if (is_ascii_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

} // namespace detail

// Heading heuristic for unstructured text: a short line that is entirely
// upper-case, or starts with "Article N", "Part <roman>", or a dotted
// section number such as "2.1".
inline bool looks_like_heading(std::string_view line) {
    const std::string s = normalize_whitespace(line);
    if (s.empty() || detail::word_count(s) > detail::kHeadingMaxWords) return false;

    bool has_upper = false;
    bool has_lower = false;
    for (unsigned char c : s) {
        if (c >= 'A' && c <= 'Z') has_upper = true;
        if (c >= 'a' && c <= 'z') has_lower = true;
    }
    if (has_upper && !has_lower) return true;

    static const std::regex article(R"(^article\s+\d+[a-z]*\b.*)", std::regex::icase);
    static const std::regex part(R"(^part\s+[ivxlcdm]+\b.*)", std::regex::icase);
    static const std::regex numbered(R"(^\d+(\.\d+)+\.?\s+\S.*)");
    return std::regex_match(s, article) || std::regex_match(s, part) || std::regex_match(s, numbered);
}

inline bool looks_like_list_item(std::string_view text) {
    static const std::regex bullet(R"(^(?:[-*]|\xE2\x80\xA2|\([a-z0-9]{1,4}\))\s.*)");
    return std::regex_match(std::string(text), bullet);
}

// Fallback parser for plain text: blank-line separated blocks become
// paragraphs and heading-like lines open a new depth-1 section.
inline Document parse_plain_text(std::string_view raw, std::string title, std::string id) {
    if (normalize_whitespace(raw).empty())
        throw CorpusError(CorpusError::Kind::empty_document, "plain-text source '" + id + "' is empty");

    Document doc;
    doc.id = std::move(id);
    doc.title = normalize_whitespace(title);
    if (doc.title.empty())
        throw CorpusError(CorpusError::Kind::empty_document, "document '" + doc.id + "' has no title");

    std::vector<std::vector<std::string_view>> blocks;
    std::vector<std::string_view> current;
    std::size_t pos = 0;
    while (pos <= raw.size()) {
        std::size_t nl = raw.find('\n', pos);
        if (nl == std::string_view::npos) nl = raw.size();
        std::string_view line = raw.substr(pos, nl - pos);
        if (normalize_whitespace(line).empty()) {
            if (!current.empty()) blocks.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(line);
        }
        pos = nl + 1;
    }
    if (!current.empty()) blocks.push_back(std::move(current));

    auto add_paragraph = [&](std::string text) {
        if (doc.sections.empty()) doc.sections.emplace_back();
        Paragraph p;
        p.kind = looks_like_list_item(text) ? ParagraphKind::list_item : ParagraphKind::prose;
        p.text = std::move(text);
        doc.sections.back().paragraphs.push_back(std::move(p));
    };

    for (const auto& block : blocks) {
        std::size_t first_body_line = 0;
        if (looks_like_heading(block.front())) {
            Section s;
            s.heading_path.push_back(normalize_whitespace(block.front()));
            doc.sections.push_back(std::move(s));
            first_body_line = 1;
        }
        std::string body;
        for (std::size_t i = first_body_line; i < block.size(); ++i) {
            body.append(block[i]);
            body.push_back(' ');
        }
        body = normalize_whitespace(body);
        if (!body.empty()) add_paragraph(std::move(body));
    }
    return doc;
}

} // namespace ragqa
