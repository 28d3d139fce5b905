#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ragqa/detail/builtin_template.hpp"
#include "ragqa/error.hpp"
#include "ragqa/segmenter.hpp"

namespace ragqa {

enum class Role { system, user, assistant };

inline std::string_view to_string(Role role) {
    switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

class PromptError : public Error {
public:
    enum class Kind { empty_question, invalid_budget, invalid_template, question_too_long };

    PromptError(Kind kind, const std::string& message) : Error(code_for(kind), message), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

    static std::string code_for(Kind kind) {
        switch (kind) {
        case Kind::empty_question: return "empty_question";
        case Kind::invalid_budget: return "invalid_budget";
        case Kind::invalid_template: return "invalid_template";
        case Kind::question_too_long: return "question_too_long";
        }
        return "prompt_error";
    }

private:
    Kind kind_;
};

inline Role parse_role(std::string_view s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw PromptError(PromptError::Kind::invalid_template, "unknown role '" + std::string(s) + "'");
}

struct ChatMessage {
    Role role = Role::user;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct PromptBudget {
    std::size_t passage_budget = 3000;
    std::size_t context_limit = 4097;
    std::size_t answer_reserve = 512;

    void validate() const {
        if (passage_budget + answer_reserve >= context_limit)
            throw PromptError(PromptError::Kind::invalid_budget,
                              "passage_budget + answer_reserve must be below context_limit");
    }

    bool operator==(const PromptBudget&) const = default;
};

enum class PassageOrder { relevance, document };

inline std::string_view to_string(PassageOrder order) {
    return order == PassageOrder::document ? "document" : "relevance";
}

inline PassageOrder parse_passage_order(std::string_view s) {
    if (s == "relevance") return PassageOrder::relevance;
    if (s == "document") return PassageOrder::document;
    throw PromptError(PromptError::Kind::invalid_template, "passage order must be 'relevance' or 'document'");
}

// Message scaffold with {PASSAGES} and {QUESTION} placeholders. Text form:
//   === <role> ===
//   <content lines>
// The newline ending the last content line before a header (or EOF) is
// part of the delimiter, not the content.
class PromptTemplate {
public:
    static constexpr std::string_view kPassages = "{PASSAGES}";
    static constexpr std::string_view kQuestion = "{QUESTION}";

    static PromptTemplate parse(std::string_view text) {
        PromptTemplate t;
        std::size_t pos = 0;
        bool open = false;
        std::string content;
        Role role = Role::user;
        auto close = [&] {
            if (!open) return;
            if (!content.empty() && content.back() == '\n') content.pop_back();
            t.messages_.push_back({role, content});
            content.clear();
        };
        while (pos < text.size()) {
            std::size_t nl = text.find('\n', pos);
            const bool has_nl = nl != std::string_view::npos;
            std::string_view line = text.substr(pos, (has_nl ? nl : text.size()) - pos);
            if (line.size() > 8 && line.starts_with("=== ") && line.ends_with(" ===")) {
                close();
                role = parse_role(line.substr(4, line.size() - 8));
                open = true;
            } else {
                if (!open) throw PromptError(PromptError::Kind::invalid_template, "template text before first role header");
                content.append(line);
                if (has_nl) content.push_back('\n');
            }
            pos = has_nl ? nl + 1 : text.size();
        }
        close();

        std::size_t passages = 0, questions = 0;
        for (const auto& m : t.messages_) {
            passages += count_occurrences(m.content, kPassages);
            questions += count_occurrences(m.content, kQuestion);
        }
        if (passages != 1 || questions != 1)
            throw PromptError(PromptError::Kind::invalid_template,
                              "template needs exactly one {PASSAGES} and one {QUESTION} placeholder");
        return t;
    }

    // The compiled-in copy of templates/default.template.
    static const PromptTemplate& builtin() {
        static const PromptTemplate t = parse(detail::kBuiltinTemplate);
        return t;
    }

    const std::vector<ChatMessage>& messages() const noexcept { return messages_; }

    std::vector<ChatMessage> render(std::string_view passages, std::string_view question) const {
        std::vector<ChatMessage> out;
        out.reserve(messages_.size());
        for (const auto& m : messages_) {
            std::string c = replace_once(m.content, kPassages, passages);
            c = replace_once(c, kQuestion, question);
            out.push_back({m.role, std::move(c)});
        }
        return out;
    }

private:
    static std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
        std::size_t n = 0;
        for (auto p = hay.find(needle); p != std::string_view::npos; p = hay.find(needle, p + needle.size())) ++n;
        return n;
    }

    static std::string replace_once(const std::string& s, std::string_view needle, std::string_view with) {
        const auto p = s.find(needle);
        if (p == std::string::npos) return s;
        std::string out;
        out.reserve(s.size() + with.size());
        out.append(s, 0, p);
        out.append(with);
        out.append(s, p + needle.size());
        return out;
    }

    std::vector<ChatMessage> messages_;
};

// `From document "<title>":` line, optional `A > B:` heading line, the
// passage text, then a blank line.
inline std::string flatten_passage(const Passage& passage) {
    std::string out = "From document \"" + passage.document_title + "\":\n";
    if (!passage.heading_path.empty()) {
        for (std::size_t i = 0; i < passage.heading_path.size(); ++i) {
            if (i) out += " > ";
            out += passage.heading_path[i];
        }
        out += ":\n";
    }
    out += passage.text;
    out += "\n\n";
    return out;
}

struct RetrievedPassage {
    Passage passage;
    double distance = 0.0;
};

struct PackedPassage {
    std::string passage_id;
    std::string document_id;
    double distance = 0.0;
    std::string flattened;
    std::size_t tokens = 0;
};

struct PromptBundle {
    std::vector<ChatMessage> messages;
    std::vector<PackedPassage> packed;  // in prompt order
    std::size_t passage_tokens_used = 0;
    std::size_t prompt_tokens = 0;
    std::size_t offered = 0;
    PromptBudget budget;
    bool no_passages_fit = false;

    std::vector<std::string> included_passage_ids() const {
        std::vector<std::string> ids;
        ids.reserve(packed.size());
        for (const auto& p : packed) ids.push_back(p.passage_id);
        return ids;
    }

    std::size_t skipped_count() const { return offered - packed.size(); }

    std::string passage_block() const {
        std::string out;
        for (const auto& p : packed) out += p.flattened;
        return out;
    }
};

struct AssemblyOptions {
    PassageOrder order = PassageOrder::relevance;
    const PromptTemplate* prompt_template = nullptr;  // defaults to builtin()
};

inline std::size_t count_prompt_tokens(const std::vector<ChatMessage>& messages, const TokenCounter& counter) {
    std::size_t n = 0;
    for (const auto& m : messages) n += counter(m.content);
    return n;
}

// Packs hits greedily in the given order, skipping any passage that no
// longer fits the remaining budget and continuing with the next one.
inline PromptBundle assemble_prompt(std::string_view question, const std::vector<RetrievedPassage>& hits,
                                    const PromptBudget& budget = {}, const TokenCounter& counter = TokenCounter::word_ratio(),
                                    const AssemblyOptions& options = {}) {
    budget.validate();
    if (normalize_whitespace(question).empty())
        throw PromptError(PromptError::Kind::empty_question, "question is empty");
    const PromptTemplate& tmpl = options.prompt_template ? *options.prompt_template : PromptTemplate::builtin();

    const std::size_t fixed = count_prompt_tokens(tmpl.render("", question), counter);
    if (fixed + budget.answer_reserve >= budget.context_limit)
        throw PromptError(PromptError::Kind::question_too_long,
                          "question leaves no room in the context window (" + std::to_string(fixed) + " tokens)");
    const std::size_t room = budget.context_limit - budget.answer_reserve - fixed;
    const std::size_t limit = std::min(budget.passage_budget, room);

    PromptBundle bundle;
    bundle.budget = budget;
    bundle.offered = hits.size();

    std::size_t remaining = limit;
    std::vector<std::size_t> order_keys;
    for (const auto& hit : hits) {
        std::string flat = flatten_passage(hit.passage);
        const std::size_t cost = counter(flat);
        if (cost > remaining) continue;
        remaining -= cost;
        bundle.passage_tokens_used += cost;
        bundle.packed.push_back({hit.passage.id, hit.passage.document_id, hit.distance, std::move(flat), cost});
        order_keys.push_back(hit.passage.ordinal);
    }

    if (options.order == PassageOrder::document && bundle.packed.size() > 1) {
        // Documents keep the rank of their best hit; passages within a
        // document follow their source position.
        std::map<std::string, std::size_t> doc_rank;
        for (const auto& p : bundle.packed) doc_rank.emplace(p.document_id, doc_rank.size());
        std::vector<std::size_t> idx(bundle.packed.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const auto ra = doc_rank[bundle.packed[a].document_id];
            const auto rb = doc_rank[bundle.packed[b].document_id];
            return ra != rb ? ra < rb : order_keys[a] < order_keys[b];
        });
        std::vector<PackedPassage> sorted;
        sorted.reserve(idx.size());
        for (auto i : idx) sorted.push_back(std::move(bundle.packed[i]));
        bundle.packed = std::move(sorted);
    }

    bundle.messages = tmpl.render(bundle.passage_block(), question);
    bundle.prompt_tokens = count_prompt_tokens(bundle.messages, counter);
    // Counters that are not sub-additive over concatenation can overshoot;
    // shed the last packed passages until the window holds.
    while (!bundle.packed.empty() && bundle.prompt_tokens + budget.answer_reserve > budget.context_limit) {
        bundle.passage_tokens_used -= bundle.packed.back().tokens;
        bundle.packed.pop_back();
        bundle.messages = tmpl.render(bundle.passage_block(), question);
        bundle.prompt_tokens = count_prompt_tokens(bundle.messages, counter);
    }
    bundle.no_passages_fit = bundle.packed.empty();
    return bundle;
}

// Same text form as the template file, with placeholders filled.
inline std::string render_bundle(const PromptBundle& bundle) {
    std::string out;
    for (const auto& m : bundle.messages) {
        out += "=== ";
        out += to_string(m.role);
        out += " ===\n";
        out += m.content;
        out += '\n';
    }
    return out;
}

} // namespace ragqa
