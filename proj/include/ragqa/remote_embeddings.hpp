#pragma once

#include <algorithm>
#include <cstddef>
#include <future>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragqa/embeddings.hpp"
#include "ragqa/http_client.hpp"

namespace ragqa {

struct RemoteEmbeddingConfig {
    HttpEndpoint endpoint{"https://api.openai.com", "/v1/embeddings", {}};
    std::string model = "text-embedding-ada-002";
    std::size_t dim = 1536;
    std::size_t batch_size = 100;
    int max_in_flight = 4;
    RetryPolicy retry;

    // Reads the bearer token from EMBED_API_KEY.
    static RemoteEmbeddingConfig from_environment() {
        RemoteEmbeddingConfig c;
        c.endpoint.api_key = env_or_empty("EMBED_API_KEY");
        if (auto url = env_or_empty("EMBED_BASE_URL"); !url.empty()) c.endpoint.base_url = url;
        return c;
    }
};

// Client for the common embeddings wire shape:
//   request  {"model": ..., "input": [texts...]}
//   response {"data": [{"embedding": [...], "index": i}, ...]}
class RemoteEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit RemoteEmbeddingProvider(RemoteEmbeddingConfig config)
        : config_(std::move(config)), limiter_(std::make_unique<InFlightLimiter>(config_.max_in_flight)) {
        if (config_.batch_size == 0) config_.batch_size = 1;
    }

    std::string name() const override { return "remote:" + config_.model; }
    std::size_t dim() const override { return config_.dim; }

    EmbeddingVector embed(std::string_view text) const override {
        std::vector<std::string> one{std::string(text)};
        return embed_batch(one).front();
    }

    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const override {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        if (texts.empty()) return out;

        std::vector<std::future<std::vector<EmbeddingVector>>> pending;
        for (std::size_t first = 0; first < texts.size(); first += config_.batch_size) {
            const std::size_t n = std::min(config_.batch_size, texts.size() - first);
            auto batch = texts.subspan(first, n);
            pending.push_back(std::async(std::launch::async, [this, batch] { return request_batch(batch); }));
        }
        for (auto& f : pending) {
            auto part = f.get();
            for (auto& v : part) out.push_back(std::move(v));
        }
        return out;
    }

private:
    std::vector<EmbeddingVector> request_batch(std::span<const std::string> batch) const {
        nlohmann::json body{{"model", config_.model}, {"input", nlohmann::json::array()}};
        for (const auto& t : batch) body["input"].push_back(t);

        HttpOutcome res;
        {
            auto slot = limiter_->acquire();
            res = post_json(config_.endpoint, body.dump(), config_.retry);
        }
        using K = EmbeddingError::Kind;
        switch (res.status) {
        case HttpOutcome::Status::ok: break;
        case HttpOutcome::Status::auth_failure: throw EmbeddingError(K::auth_failure, res.message);
        case HttpOutcome::Status::rate_limited: throw EmbeddingError(K::rate_limited, res.message);
        case HttpOutcome::Status::transport_failure: throw EmbeddingError(K::transport_failure, res.message);
        case HttpOutcome::Status::client_error: throw EmbeddingError(K::bad_response, res.message + ": " + res.body);
        }

        nlohmann::json parsed = nlohmann::json::parse(res.body, nullptr, false);
        if (parsed.is_discarded() || !parsed.contains("data") || !parsed["data"].is_array())
            throw EmbeddingError(K::bad_response, "embedding response lacks a 'data' array");
        const auto& data = parsed["data"];
        if (data.size() != batch.size())
            throw EmbeddingError(K::bad_response, "embedding response has " + std::to_string(data.size()) +
                                                      " vectors for " + std::to_string(batch.size()) + " inputs");

        std::vector<EmbeddingVector> out(batch.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto& item = data[i];
            const std::size_t slot = item.contains("index") ? item["index"].get<std::size_t>() : i;
            if (slot >= out.size() || !item.contains("embedding") || !item["embedding"].is_array())
                throw EmbeddingError(K::bad_response, "malformed embedding item");
            auto values = item["embedding"].get<std::vector<double>>();
            if (values.size() != config_.dim)
                throw EmbeddingError(K::dimension_mismatch, "expected dimension " + std::to_string(config_.dim) +
                                                                ", backend returned " + std::to_string(values.size()));
            EmbeddingVector v(std::move(values));
            if (v.norm() == 0.0) throw EmbeddingError(K::zero_vector, "backend returned a zero vector");
            out[slot] = v.normalized();
        }
        return out;
    }

    RemoteEmbeddingConfig config_;
    std::unique_ptr<InFlightLimiter> limiter_;
};

} // namespace ragqa
