#pragma once

#include <array>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

#include "ragqa/corpus.hpp"
#include "ragqa/embeddings.hpp"
#include "ragqa/llm_client.hpp"
#include "ragqa/qa.hpp"
#include "ragqa/runtime.hpp"

namespace testsupport {

inline const std::filesystem::path kFixtures = RAGQA_FIXTURE_DIR;
inline const std::filesystem::path kGolden = RAGQA_GOLDEN_DIR;
inline const std::filesystem::path kCli = RAGQA_CLI_PATH;

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string fixture_question() {
    std::string q = slurp(kFixtures / "question.txt");
    while (!q.empty() && (q.back() == '\n' || q.back() == '\r')) q.pop_back();
    return q;
}

inline std::vector<ragqa::Document> fixture_documents() {
    return ragqa::load_corpus({kFixtures / "corpus"});
}

inline std::shared_ptr<const ragqa::ChatBackend> fixture_mock() {
    return ragqa::make_backend("mock", kFixtures / "mock_script.txt");
}

inline std::shared_ptr<ragqa::Engine> fixture_engine(std::shared_ptr<const ragqa::ChatBackend> backend = fixture_mock()) {
    auto engine = std::make_shared<ragqa::Engine>(std::make_shared<ragqa::HashEmbeddingProvider>(256), std::move(backend));
    for (const auto& d : fixture_documents()) engine->ingest(d);
    return engine;
}

// Per-test scratch directory, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("ragqa-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

// --- random generators -------------------------------------------------

inline const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> words = {
        "marine",    "genetic",    "resources", "benefit",   "sharing",   "access",     "committee", "parties",
        "conference", "developing", "states",    "capacity",  "transfer",  "technology", "ocean",     "area",
        "protected", "management", "tools",     "impact",    "assessment", "screening", "scoping",  "report",
        "monetary",  "fund",       "special",   "equity",    "principle", "precaution", "ecosystem", "science",
        "island",    "small",      "least",     "landlocked", "vessel",   "warship",    "decision", "consensus",
        "vote",      "majority",   "article",   "part",      "draft",     "agreement",  "delegates", "bulletin",
        "proposal",  "rationale",  "sample",    "sequence",  "digital",   "data",       "traceability", "notify",
        "high",      "seas",       "jurisdiction", "national", "beyond",  "cumulative", "climate",  "acidification"};
    return words;
}

inline std::string random_words(std::mt19937_64& rng, std::size_t n) {
    const auto& v = vocabulary();
    std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += v[pick(rng)];
    }
    return out;
}

inline std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Sections mix short paragraphs, long paragraphs and sizes straddling the
// whole-section threshold.
inline ragqa::Section random_section(std::mt19937_64& rng, std::size_t index) {
    ragqa::Section s;
    const std::size_t depth = uniform(rng, 0, 2);
    for (std::size_t d = 0; d < depth; ++d) s.heading_path.push_back("Part " + std::to_string(index) + "." + std::to_string(d));
    const std::size_t paras = uniform(rng, 1, 9);
    for (std::size_t i = 0; i < paras; ++i) {
        std::size_t words;
        switch (uniform(rng, 0, 3)) {
        case 0: words = uniform(rng, 1, 20); break;
        case 1: words = uniform(rng, 20, 80); break;
        case 2: words = uniform(rng, 70, 160); break;
        default: words = uniform(rng, 140, 260); break;
        }
        s.paragraphs.push_back({random_words(rng, words),
                                uniform(rng, 0, 4) == 0 ? ragqa::ParagraphKind::list_item : ragqa::ParagraphKind::prose});
    }
    return s;
}

inline ragqa::Document random_document(std::mt19937_64& rng, const std::string& id) {
    ragqa::Document d;
    d.id = id;
    d.title = "Document " + id + " " + random_words(rng, 3);
    const std::size_t sections = uniform(rng, 1, 6);
    for (std::size_t i = 0; i < sections; ++i) d.sections.push_back(random_section(rng, i));
    return d;
}

inline std::vector<double> gaussian_vector(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(dim);
    for (auto& x : v) x = n(rng);
    return v;
}

// --- local stub HTTP server --------------------------------------------

// Runs an httplib server on an ephemeral localhost port for the lifetime of
// the object.
class StubServer {
public:
    explicit StubServer(const std::function<void(httplib::Server&)>& setup) {
        setup(server_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }
    StubServer(const StubServer&) = delete;
    StubServer& operator=(const StubServer&) = delete;

    int port() const { return port_; }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = -1;
};

// --- subprocess ----------------------------------------------------------

struct ProcessResult {
    int exit_code = -1;
    std::string out;
};

// Runs a shell command and captures its stdout.
inline ProcessResult run_command(const std::string& cmd) {
    ProcessResult r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

} // namespace testsupport
