#pragma once

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>

#include "ragqa/probe.hpp"
#include "ragqa/qa.hpp"
#include "ragqa/runtime.hpp"
#include "ragqa/service.hpp"

namespace ragqa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

inline constexpr std::string_view kSynopsis =
    "usage:\n"
    "  ragqa ingest <paths...> --out index.bin [--embedder hash:256]\n"
    "  ragqa ask \"<question>\" --index index.bin [--docs id,id] [--temperature T] [--top-k N]\n"
    "            [--backend mock|remote] [--mock-script FILE] [--show-sources] [--format text|json]\n"
    "  ragqa probe <spec-file> --index index.bin --out report [--format text|json]\n"
    "  ragqa serve --port N --backend mock|remote --corpus PATH [--index PATH]\n";

inline std::string format_distance(double d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", d);
    return buf;
}

inline void print_result_text(const QueryResult& r, bool show_sources, std::ostream& out) {
    out << r.answer << '\n';
    if (!show_sources) return;
    out << "\nSources (" << r.included_passages.size() << " of " << r.bundle_stats.total_hits << " hits, "
        << r.bundle_stats.passage_tokens_used << " passage tokens):\n";
    for (std::size_t i = 0; i < r.included_passages.size(); ++i) {
        const auto& p = r.included_passages[i];
        out << "  " << (i + 1) << ". [" << format_distance(p.distance) << "] " << p.passage_id << "  " << p.document_title;
        for (const auto& h : p.heading_path) out << " > " << h;
        out << '\n';
    }
}

namespace detail {

inline Service*& active_service() {
    static Service* s = nullptr;
    return s;
}

inline void stop_active_service(int) {
    if (auto* s = active_service()) s->server().stop();
}

inline std::shared_ptr<Engine> load_engine(const std::string& index, const std::string& backend, const std::string& mock_script) {
    auto embedder = make_embedder(Engine::recorded_embedder(index));
    return Engine::load(index, std::move(embedder), make_backend(backend, mock_script));
}

} // namespace detail

// Runs one command line. Usage errors exit 1, runtime failures exit 2.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Corpus-grounded question answering over policy documents", "ragqa"};
    app.require_subcommand(1);

    std::vector<std::string> ingest_paths;
    std::string ingest_out;
    std::string embedder = "hash:256";
    auto* ingest = app.add_subcommand("ingest", "Parse, segment, embed and index documents");
    ingest->add_option("paths", ingest_paths, "Interchange .json files, .txt files, or directories")->required();
    ingest->add_option("--out", ingest_out, "Index file to write")->required();
    ingest->add_option("--embedder", embedder, "hash[:dim] or remote[:model]");

    std::string question, index_path, docs, backend = "mock", mock_script, format = "text", order = "relevance";
    double temperature = kDefaultTemperature;
    std::size_t top_k = 24;
    bool show_sources = false;
    auto* ask = app.add_subcommand("ask", "Answer one question against an index");
    ask->add_option("question", question, "The question")->required();
    ask->add_option("--index", index_path, "Index file written by ingest")->required();
    ask->add_option("--docs", docs, "Comma-separated document ids to search (default: all)");
    ask->add_option("--temperature", temperature, "Sampling temperature")->check(CLI::Range(0.0, 2.0));
    ask->add_option("--top-k", top_k, "Passages retrieved before budget packing")->check(CLI::PositiveNumber);
    ask->add_option("--order", order, "Passage order in the prompt")->check(CLI::IsMember({"relevance", "document"}));
    ask->add_option("--backend", backend, "Chat backend")->check(CLI::IsMember({"mock", "remote"}));
    ask->add_option("--mock-script", mock_script, "Rules file for the mock backend");
    ask->add_flag("--show-sources", show_sources, "Print the passages used, with distances");
    ask->add_option("--format", format, "Output format")->check(CLI::IsMember({"text", "json"}));

    std::string spec_path, report_out, probe_index, probe_backend = "mock", probe_script, probe_format = "text";
    auto* probe = app.add_subcommand("probe", "Run a family of question variants and compare the answers");
    probe->add_option("spec", spec_path, "Probe spec file")->required();
    probe->add_option("--index", probe_index, "Index file written by ingest")->required();
    probe->add_option("--out", report_out, "Report file to write")->required();
    probe->add_option("--backend", probe_backend, "Chat backend")->check(CLI::IsMember({"mock", "remote"}));
    probe->add_option("--mock-script", probe_script, "Rules file for the mock backend");
    probe->add_option("--format", probe_format, "Report format")->check(CLI::IsMember({"text", "json"}));

    ServiceConfig serve_cfg;
    std::vector<std::string> corpus_paths;
    std::string serve_index;
    auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
    serve->add_option("--port", serve_cfg.port, "Port to listen on")->check(CLI::Range(0, 65535));
    serve->add_option("--host", serve_cfg.host, "Address to bind");
    serve->add_option("--backend", serve_cfg.backend, "Chat backend")->check(CLI::IsMember({"mock", "remote"}));
    serve->add_option("--corpus", corpus_paths, "Corpus files or directories to ingest at startup");
    serve->add_option("--index", serve_index, "Index file to load first");
    serve->add_option("--mock-script", mock_script, "Rules file for the mock backend");
    serve->add_option("--embedder", serve_cfg.embedder, "Embedder for a fresh index");
    serve->add_option("--cors", serve_cfg.cors_allowlist, "Allowed CORS origins");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        err << kSynopsis;
        return kExitUsage;
    }

    try {
        if (*ingest) {
            auto engine = std::make_shared<Engine>(make_embedder(embedder), make_backend("mock"));
            std::size_t passages = 0, documents = 0;
            for (const auto& doc : load_corpus({ingest_paths.begin(), ingest_paths.end()})) {
                passages += engine->ingest(doc).passage_count;
                ++documents;
            }
            engine->save(ingest_out);
            out << "indexed " << documents << " documents, " << passages << " passages -> " << ingest_out << '\n';
            return kExitOk;
        }

        if (*ask) {
            if (normalize_whitespace(question).empty()) {
                err << "error: the question is empty\n" << kSynopsis;
                return kExitUsage;
            }
            QueryOptions options;
            options.temperature = temperature;
            options.top_k = top_k;
            options.passage_order = parse_passage_order(order);
            if (!docs.empty()) {
                std::unordered_set<std::string> ids;
                std::stringstream ss(docs);
                for (std::string id; std::getline(ss, id, ',');) {
                    id = normalize_whitespace(id);
                    if (!id.empty()) ids.insert(id);
                }
                options.allowed_documents = std::move(ids);
            }
            auto engine = detail::load_engine(index_path, backend, mock_script);
            const QueryResult result = engine->answer_question(question, options);
            if (format == "json") {
                out << to_json(result).dump(2) << '\n';
            } else {
                print_result_text(result, show_sources, out);
            }
            return kExitOk;
        }

        if (*probe) {
            const ProbeSpec spec = load_probe_spec(spec_path);
            auto engine = detail::load_engine(probe_index, probe_backend, probe_script);
            const ProbeReport report = run_probe(*engine, spec);
            export_report(report, report_out, probe_format == "json" ? ReportFormat::json : ReportFormat::text);
            out << "probe '" << report.name << "': " << report.variants.size() << " variants, " << report.pairs.size()
                << " pairs -> " << report_out << '\n';
            return kExitOk;
        }

        if (*serve) {
            for (const auto& p : corpus_paths) serve_cfg.corpus_paths.emplace_back(p);
            serve_cfg.index_path = serve_index;
            serve_cfg.mock_script = mock_script;
            auto engine = build_engine(serve_cfg);
            Service service(engine, serve_cfg);
            detail::active_service() = &service;
            std::signal(SIGINT, detail::stop_active_service);
            std::signal(SIGTERM, detail::stop_active_service);
            err << "serving " << engine->document_count() << " documents on http://" << serve_cfg.host << ':'
                << serve_cfg.port << "/v1\n";
            const bool ok = service.listen();
            detail::active_service() = nullptr;
            if (!ok) {
                err << "error: could not listen on " << serve_cfg.host << ':' << serve_cfg.port << '\n';
                return kExitRuntime;
            }
            return kExitOk;
        }
    } catch (const Error& e) {
        err << "error [" << e.code() << "]: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    err << kSynopsis;
    return kExitUsage;
}

} // namespace ragqa::cli
