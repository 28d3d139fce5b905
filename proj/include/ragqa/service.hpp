#pragma once

#include <algorithm>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ragqa/corpus.hpp"
#include "ragqa/probe.hpp"
#include "ragqa/promptkit.hpp"
#include "ragqa/qa.hpp"
#include "ragqa/runtime.hpp"

namespace ragqa {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::vector<std::filesystem::path> corpus_paths;
    std::filesystem::path index_path;
    std::string backend = "mock";
    std::filesystem::path mock_script;
    std::string embedder = "hash:256";
    QueryOptions default_options;
    std::vector<std::string> cors_allowlist;  // "*" allows any origin
};

// Loads `index_path` when it exists, then ingests any corpus document not
// already present.
inline std::shared_ptr<Engine> build_engine(const ServiceConfig& config, EngineConfig engine_config = {}) {
    auto backend = make_backend(config.backend, config.mock_script);
    std::shared_ptr<Engine> engine;
    if (!config.index_path.empty() && std::filesystem::exists(config.index_path)) {
        auto embedder = make_embedder(Engine::recorded_embedder(config.index_path));
        engine = Engine::load(config.index_path, std::move(embedder), std::move(backend), std::move(engine_config));
    } else {
        engine = std::make_shared<Engine>(make_embedder(config.embedder), std::move(backend), std::move(engine_config));
    }
    for (const auto& doc : load_corpus(config.corpus_paths))
        if (!engine->document(doc.id)) engine->ingest(doc);
    return engine;
}

// JSON-over-HTTP front end for an Engine. All routes live under /v1; error
// bodies are {"error": {"code", "message", "stage"?, "variant"?}}.
class Service {
public:
    Service(std::shared_ptr<Engine> engine, ServiceConfig config) : engine_(std::move(engine)), config_(std::move(config)) {
        register_routes();
    }

    httplib::Server& server() noexcept { return server_; }

    bool listen() { return server_.listen(config_.host, config_.port); }

    // Binds an ephemeral port on `host` and serves from a background
    // thread. Returns the port, or -1 on failure.
    int start_background(const std::string& host = "127.0.0.1") {
        const int port = server_.bind_to_any_port(host);
        if (port < 0) return -1;
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port;
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    ~Service() { stop(); }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    static int status_for(const std::string& code) {
        if (code == "empty_corpus_selection" || code == "empty_corpus") return 422;
        if (code == "empty_question" || code == "invalid_options" || code == "invalid_question" ||
            code == "question_too_long" || code == "invalid_probe_spec" || code == "malformed_request" ||
            code == "malformed_format" || code == "empty_document")
            return 400;
        if (code == "duplicate_document") return 409;
        if (code == "not_found") return 404;
        return 502;
    }

private:
    using json = nlohmann::ordered_json;

    static void send(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json; charset=utf-8");
    }

    static void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                           const std::string& stage = {}, const std::string& variant = {}) {
        json err{{"code", code}, {"message", message}};
        if (!stage.empty()) err["stage"] = stage;
        if (!variant.empty()) err["variant"] = variant;
        send(res, status, json{{"error", std::move(err)}});
    }

    static bool parse_body(const httplib::Request& req, httplib::Response& res, nlohmann::json& out) {
        out = nlohmann::json::parse(req.body, nullptr, false);
        if (out.is_discarded() || !out.is_object()) {
            send_error(res, 400, "malformed_request", "request body must be a JSON object");
            return false;
        }
        return true;
    }

    void register_routes() {
        server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
            send(res, 200,
                 json{{"status", "ok"},
                      {"corpus_size", engine_->document_count()},
                      {"passage_count", engine_->passage_count()},
                      {"backend", engine_->backend().name()},
                      {"embedder", engine_->embedder().name()}});
        });

        server_.Get("/v1/documents", [this](const httplib::Request&, httplib::Response& res) {
            json list = json::array();
            for (const auto& d : engine_->documents())
                list.push_back({{"document_id", d.document_id}, {"title", d.title}, {"passage_count", d.passage_count}});
            send(res, 200, list);
        });

        server_.Post("/v1/documents", [this](const httplib::Request& req, httplib::Response& res) {
            Document doc;
            try {
                doc = parse_structured_document(req.body);
            } catch (const CorpusError& e) {
                json err{{"code", e.code()}, {"message", e.what()}};
                if (e.line()) err["line"] = e.line(), err["column"] = e.column();
                send(res, 400, json{{"error", std::move(err)}});
                return;
            }
            try {
                const auto report = engine_->ingest(doc);
                send(res, 201, json{{"document_id", report.document_id}, {"passage_count", report.passage_count}});
            } catch (const QaError& e) {
                send_error(res, status_for(e.code()), e.code(), e.what(), std::string(to_string(e.stage())));
            }
        });

        server_.Post("/v1/query", [this](const httplib::Request& req, httplib::Response& res) {
            nlohmann::json body;
            if (!parse_body(req, res, body)) return;
            auto q = body.find("question");
            if (q == body.end() || !q->is_string()) {
                send_error(res, 400, "empty_question", "body needs a string 'question'", "validate");
                return;
            }
            try {
                const QueryOptions options = query_options_from_json(body, config_.default_options);
                const QueryResult result = engine_->answer_question(q->get<std::string>(), options);
                send(res, 200, to_json(result));
            } catch (const QaError& e) {
                send_error(res, status_for(e.code()), e.code(), e.what(), std::string(to_string(e.stage())));
            }
        });

        server_.Get(R"(/v1/passages/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            const auto passage = engine_->passage(id);
            if (!passage) {
                send_error(res, 404, "not_found", "no passage with id '" + id + "'");
                return;
            }
            json body = to_json(*passage);
            body["flattened_text"] = flatten_passage(*passage);
            send(res, 200, body);
        });

        server_.Post("/v1/probes", [this](const httplib::Request& req, httplib::Response& res) {
            nlohmann::json body;
            if (!parse_body(req, res, body)) return;
            try {
                const ProbeSpec spec = probe_spec_from_json(body);
                send(res, 200, to_json(run_probe(*engine_, spec)));
            } catch (const ProbeError& e) {
                const int status = e.kind() == ProbeError::Kind::invalid_spec ? 400 : status_for(e.code());
                send_error(res, status, e.code(), e.what(), {}, e.variant());
            }
        });

        server_.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
            res.status = 204;
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
        });

        server_.set_post_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_header("Origin")) return;
            const auto origin = req.get_header_value("Origin");
            const auto& allow = config_.cors_allowlist;
            if (std::find(allow.begin(), allow.end(), "*") != allow.end() ||
                std::find(allow.begin(), allow.end(), origin) != allow.end()) {
                res.set_header("Access-Control-Allow-Origin", origin);
                res.set_header("Vary", "Origin");
            }
        });

        server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string message = "internal error";
            std::string code = "internal_error";
            try {
                std::rethrow_exception(ep);
            } catch (const Error& e) {
                message = e.what();
                code = e.code();
            } catch (const std::exception& e) {
                message = e.what();
            } catch (...) {
            }
            send_error(res, 500, code, message);
        });
    }

    std::shared_ptr<Engine> engine_;
    ServiceConfig config_;
    httplib::Server server_;
    std::thread thread_;
};

} // namespace ragqa
