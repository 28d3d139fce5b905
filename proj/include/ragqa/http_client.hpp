#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <string>
#include <thread>

#include <httplib.h>

namespace ragqa {

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{250};
    double multiplier = 2.0;
};

// Where a JSON-over-HTTP backend lives. `base_url` is scheme://host[:port].
struct HttpEndpoint {
    std::string base_url;
    std::string path;
    std::string api_key;
    std::chrono::seconds connect_timeout{10};
    std::chrono::seconds read_timeout{120};
};

inline std::string env_or_empty(const char* name) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
}

struct HttpOutcome {
    enum class Status { ok, auth_failure, rate_limited, transport_failure, client_error };

    Status status = Status::transport_failure;
    int http_status = 0;
    std::string body;
    std::string message;
    int attempts = 0;
};

// Bounds the number of requests a backend has in flight at once.
class InFlightLimiter {
public:
    explicit InFlightLimiter(int limit) : slots_(limit < 1 ? 1 : limit) {}

    class Slot {
    public:
        explicit Slot(std::counting_semaphore<>& s) : sem_(s) { sem_.acquire(); }
        ~Slot() { sem_.release(); }
        Slot(const Slot&) = delete;
        Slot& operator=(const Slot&) = delete;

    private:
        std::counting_semaphore<>& sem_;
    };

    Slot acquire() { return Slot(slots_); }

private:
    std::counting_semaphore<> slots_;
};

// POSTs a JSON body, retrying transport errors, 429 and 5xx with
// exponential backoff up to policy.max_attempts.
inline HttpOutcome post_json(const HttpEndpoint& endpoint, const std::string& body, const RetryPolicy& policy) {
    HttpOutcome out;
    auto backoff = policy.initial_backoff;
    for (int attempt = 1; attempt <= std::max(1, policy.max_attempts); ++attempt) {
        out.attempts = attempt;
        httplib::Client client(endpoint.base_url);
        client.set_connection_timeout(endpoint.connect_timeout);
        client.set_read_timeout(endpoint.read_timeout);
        httplib::Headers headers;
        if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

        auto res = client.Post(endpoint.path, headers, body, "application/json");
        bool transient = false;
        if (!res) {
            out.status = HttpOutcome::Status::transport_failure;
            out.http_status = 0;
            out.message = "transport error: " + httplib::to_string(res.error());
            transient = true;
        } else {
            out.http_status = res->status;
            out.body = res->body;
            if (res->status >= 200 && res->status < 300) {
                out.status = HttpOutcome::Status::ok;
                return out;
            }
            if (res->status == 401 || res->status == 403) {
                out.status = HttpOutcome::Status::auth_failure;
                out.message = "backend rejected credentials (HTTP " + std::to_string(res->status) + ")";
                return out;
            }
            if (res->status == 429) {
                out.status = HttpOutcome::Status::rate_limited;
                out.message = "backend rate limited the request";
                transient = true;
            } else if (res->status >= 500) {
                out.status = HttpOutcome::Status::transport_failure;
                out.message = "backend error (HTTP " + std::to_string(res->status) + ")";
                transient = true;
            } else {
                out.status = HttpOutcome::Status::client_error;
                out.message = "backend refused the request (HTTP " + std::to_string(res->status) + ")";
                return out;
            }
        }
        if (transient && attempt < policy.max_attempts) {
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::duration_cast<std::chrono::milliseconds>(backoff * policy.multiplier);
        }
    }
    return out;
}

} // namespace ragqa
