#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ragqa/error.hpp"
#include "ragqa/promptkit.hpp"
#include "ragqa/segmenter.hpp"

namespace ragqa {

inline constexpr double kDefaultTemperature = 0.3;
inline constexpr std::string_view kDefaultModel = "gpt-3.5-turbo";

class LlmError : public Error {
public:
    enum class Kind { auth_failure, rate_limited, transport_failure, context_overflow, invalid_request, bad_response };

    LlmError(Kind kind, const std::string& message) : Error(code_for(kind), message), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

    static std::string code_for(Kind kind) {
        switch (kind) {
        case Kind::auth_failure: return "auth_failure";
        case Kind::rate_limited: return "rate_limited";
        case Kind::transport_failure: return "transport_failure";
        case Kind::context_overflow: return "context_overflow";
        case Kind::invalid_request: return "invalid_request";
        case Kind::bad_response: return "bad_response";
        }
        return "llm_error";
    }

private:
    Kind kind_;
};

struct CompletionRequest {
    std::vector<ChatMessage> messages;
    double temperature = kDefaultTemperature;
    std::string model_name{kDefaultModel};
    std::size_t max_answer_tokens = 512;

    void validate() const {
        if (messages.empty()) throw LlmError(LlmError::Kind::invalid_request, "completion request has no messages");
        if (!std::isfinite(temperature) || temperature < 0.0 || temperature > 2.0)
            throw LlmError(LlmError::Kind::invalid_request, "temperature must be within [0, 2]");
    }
};

enum class FinishReason { stop, length, error };

inline std::string_view to_string(FinishReason r) {
    switch (r) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
    }
    return "error";
}

struct TokenUsage {
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;

    bool operator==(const TokenUsage&) const = default;
};

struct CompletionResult {
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
    std::optional<TokenUsage> usage;

    bool operator==(const CompletionResult&) const = default;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string name() const = 0;
    virtual CompletionResult complete(const CompletionRequest& request) const = 0;
};

inline const ChatMessage* final_user_message(const std::vector<ChatMessage>& messages) {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it)
        if (it->role == Role::user) return &*it;
    return nullptr;
}

// Unique document titles named by `From document "<title>":` lines, in
// order of first appearance.
inline std::vector<std::string> titles_in_prompt(const std::vector<ChatMessage>& messages) {
    static constexpr std::string_view prefix = "From document \"";
    static constexpr std::string_view suffix = "\":";
    std::vector<std::string> titles;
    for (const auto& m : messages) {
        std::size_t pos = 0;
        const std::string_view c = m.content;
        while (pos < c.size()) {
            std::size_t nl = c.find('\n', pos);
            if (nl == std::string_view::npos) nl = c.size();
            std::string_view line = c.substr(pos, nl - pos);
            if (line.starts_with(prefix) && line.ends_with(suffix) && line.size() >= prefix.size() + suffix.size()) {
                std::string title(line.substr(prefix.size(), line.size() - prefix.size() - suffix.size()));
                if (std::find(titles.begin(), titles.end(), title) == titles.end()) titles.push_back(std::move(title));
            }
            pos = nl + 1;
        }
    }
    return titles;
}

// Deterministic backend for tests and offline runs. Rules are tried in
// order against the final user message; the first match answers. When no
// rule matches, the fallback template answers with {SOURCES} replaced by
// the "; "-joined titles of the documents quoted in the prompt.
class ScriptedMock final : public ChatBackend {
public:
    enum class Match { contains, exact };

    struct Rule {
        Match match = Match::contains;
        std::string pattern;
        std::string response;
    };

    // Makes the mock reject prompts the same way a real backend with this
    // context window would.
    struct ContextCheck {
        std::size_t context_limit = 4097;
        TokenCounter counter = TokenCounter::word_ratio();
    };

    static constexpr std::string_view kDefaultFallback = "No scripted answer matched. Sources consulted: {SOURCES}.";

    ScriptedMock() = default;
    explicit ScriptedMock(std::vector<Rule> rules, std::string fallback = std::string(kDefaultFallback))
        : rules_(std::move(rules)), fallback_(std::move(fallback)) {}

    void add_rule(Match match, std::string pattern, std::string response) {
        rules_.push_back({match, std::move(pattern), std::move(response)});
    }
    void set_fallback(std::string fallback) { fallback_ = std::move(fallback); }
    void set_context_check(std::optional<ContextCheck> check) { check_ = std::move(check); }

    const std::vector<Rule>& rules() const noexcept { return rules_; }
    const std::string& fallback() const noexcept { return fallback_; }

    std::string name() const override { return "mock"; }

    CompletionResult complete(const CompletionRequest& request) const override {
        request.validate();
        const TokenCounter counter = check_ ? check_->counter : TokenCounter::word_ratio();
        const std::size_t prompt_tokens = count_prompt_tokens(request.messages, counter);
        if (check_ && prompt_tokens + request.max_answer_tokens > check_->context_limit)
            throw LlmError(LlmError::Kind::context_overflow,
                           "prompt of " + std::to_string(prompt_tokens) + " tokens plus " +
                               std::to_string(request.max_answer_tokens) + " answer tokens exceeds the context limit");

        CompletionResult result;
        const ChatMessage* last = final_user_message(request.messages);
        const std::string_view target = last ? std::string_view(last->content) : std::string_view();
        const Rule* hit = nullptr;
        for (const auto& r : rules_) {
            const bool ok = r.match == Match::exact ? target == r.pattern : target.find(r.pattern) != std::string_view::npos;
            if (ok) {
                hit = &r;
                break;
            }
        }
        if (hit) {
            result.text = hit->response;
        } else {
            const auto titles = titles_in_prompt(request.messages);
            std::string sources;
            for (std::size_t i = 0; i < titles.size(); ++i) {
                if (i) sources += "; ";
                sources += titles[i];
            }
            if (sources.empty()) sources = "none";
            result.text = fallback_;
            if (auto p = result.text.find("{SOURCES}"); p != std::string::npos) result.text.replace(p, 9, sources);
        }
        result.finish_reason = FinishReason::stop;
        result.usage = TokenUsage{prompt_tokens, counter(result.text)};
        return result;
    }

private:
    std::vector<Rule> rules_;
    std::string fallback_{kDefaultFallback};
    std::optional<ContextCheck> check_;
};

namespace detail {

inline std::string unescape_script(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            const char n = s[++i];
            out.push_back(n == 'n' ? '\n' : n == 't' ? '\t' : n);
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_ascii_space(s[b])) ++b;
    while (e > b && is_ascii_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

} // namespace detail

class ScriptError : public Error {
public:
    ScriptError(const std::string& message, std::size_t line) : Error("invalid_script", message), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Mock script grammar, one directive per line:
//   # comment
//   contains: <needle> => <response>
//   exact: <message> => <response>
//   fallback: <template with optional {SOURCES}>
// Backslash escapes \n, \t and \\ are honored on both sides of "=>".
inline ScriptedMock parse_mock_script(std::string_view text) {
    ScriptedMock mock;
    std::size_t pos = 0, line_no = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        ++line_no;
        const std::string line = detail::trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        if (line.empty() || line.front() == '#') continue;

        const auto colon = line.find(':');
        if (colon == std::string::npos) throw ScriptError("line " + std::to_string(line_no) + ": expected '<directive>:'", line_no);
        const std::string directive = detail::trim(std::string_view(line).substr(0, colon));
        const std::string rest = detail::trim(std::string_view(line).substr(colon + 1));

        if (directive == "fallback") {
            mock.set_fallback(detail::unescape_script(rest));
            continue;
        }
        ScriptedMock::Match match;
        if (directive == "contains") {
            match = ScriptedMock::Match::contains;
        } else if (directive == "exact") {
            match = ScriptedMock::Match::exact;
        } else {
            throw ScriptError("line " + std::to_string(line_no) + ": unknown directive '" + directive + "'", line_no);
        }
        const auto arrow = rest.find("=>");
        if (arrow == std::string::npos) throw ScriptError("line " + std::to_string(line_no) + ": missing '=>'", line_no);
        std::string pattern = detail::unescape_script(detail::trim(std::string_view(rest).substr(0, arrow)));
        std::string response = detail::unescape_script(detail::trim(std::string_view(rest).substr(arrow + 2)));
        if (pattern.empty()) throw ScriptError("line " + std::to_string(line_no) + ": empty pattern", line_no);
        if (response.empty()) throw ScriptError("line " + std::to_string(line_no) + ": empty response", line_no);
        mock.add_rule(match, std::move(pattern), std::move(response));
    }
    return mock;
}

} // namespace ragqa
