#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "ragqa/http_client.hpp"
#include "ragqa/llm_client.hpp"

namespace ragqa {

struct RemoteChatConfig {
    HttpEndpoint endpoint{"https://api.openai.com", "/v1/chat/completions", {}};
    int max_in_flight = 4;
    RetryPolicy retry;

    // Reads the bearer token from LLM_API_KEY.
    static RemoteChatConfig from_environment() {
        RemoteChatConfig c;
        c.endpoint.api_key = env_or_empty("LLM_API_KEY");
        if (auto url = env_or_empty("LLM_BASE_URL"); !url.empty()) c.endpoint.base_url = url;
        return c;
    }
};

// Chat-completions client:
//   request  {"model", "messages": [{"role", "content"}], "temperature", "max_tokens"}
//   response {"choices": [{"message": {"content"}, "finish_reason"}], "usage": {...}}
class RemoteChatBackend final : public ChatBackend {
public:
    explicit RemoteChatBackend(RemoteChatConfig config)
        : config_(std::move(config)), limiter_(std::make_unique<InFlightLimiter>(config_.max_in_flight)) {}

    std::string name() const override { return "remote"; }

    CompletionResult complete(const CompletionRequest& request) const override {
        request.validate();
        nlohmann::json body{{"model", request.model_name},
                            {"temperature", request.temperature},
                            {"max_tokens", request.max_answer_tokens},
                            {"messages", nlohmann::json::array()}};
        for (const auto& m : request.messages)
            body["messages"].push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});

        HttpOutcome res;
        {
            auto slot = limiter_->acquire();
            res = post_json(config_.endpoint, body.dump(), config_.retry);
        }
        using K = LlmError::Kind;
        switch (res.status) {
        case HttpOutcome::Status::ok: break;
        case HttpOutcome::Status::auth_failure: throw LlmError(K::auth_failure, res.message);
        case HttpOutcome::Status::rate_limited: throw LlmError(K::rate_limited, res.message);
        case HttpOutcome::Status::transport_failure: throw LlmError(K::transport_failure, res.message);
        case HttpOutcome::Status::client_error:
            if (is_context_overflow(res.body)) throw LlmError(K::context_overflow, "backend reports the prompt exceeds its context window");
            throw LlmError(K::invalid_request, res.message + ": " + res.body);
        }

        const auto parsed = nlohmann::json::parse(res.body, nullptr, false);
        if (parsed.is_discarded() || !parsed.contains("choices") || !parsed["choices"].is_array() || parsed["choices"].empty())
            throw LlmError(K::bad_response, "completion response lacks choices");
        const auto& choice = parsed["choices"][0];
        CompletionResult out;
        if (choice.contains("message") && choice["message"].contains("content") && choice["message"]["content"].is_string())
            out.text = choice["message"]["content"].get<std::string>();
        const std::string reason = choice.value("finish_reason", std::string("stop"));
        out.finish_reason = reason == "length" ? FinishReason::length : reason == "stop" ? FinishReason::stop : FinishReason::error;
        if (out.text.empty() && out.finish_reason != FinishReason::error) out.finish_reason = FinishReason::error;
        if (auto u = parsed.find("usage"); u != parsed.end() && u->is_object())
            out.usage = TokenUsage{u->value("prompt_tokens", std::size_t{0}), u->value("completion_tokens", std::size_t{0})};
        return out;
    }

private:
    static bool is_context_overflow(const std::string& body) {
        const auto j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded() || !j.contains("error") || !j["error"].is_object()) return false;
        return j["error"].value("code", std::string()) == "context_length_exceeded";
    }

    RemoteChatConfig config_;
    std::unique_ptr<InFlightLimiter> limiter_;
};

} // namespace ragqa
