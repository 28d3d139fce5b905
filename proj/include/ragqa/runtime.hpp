#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "ragqa/corpus.hpp"
#include "ragqa/embeddings.hpp"
#include "ragqa/llm_client.hpp"
#include "ragqa/qa.hpp"
#include "ragqa/remote_chat.hpp"
#include "ragqa/remote_embeddings.hpp"

// Wiring shared by the CLI and the service: backend selection, corpus
// loading from disk, engine construction.
namespace ragqa {

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("invalid_configuration", message) {}
};

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// "hash" or "hash:<dim>" selects the local feature-hash provider;
// "remote" or "remote:<model>" the embeddings API configured from the
// environment (EMBED_API_KEY, optional EMBED_BASE_URL).
inline std::shared_ptr<const EmbeddingProvider> make_embedder(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string arg = colon == std::string::npos ? std::string() : spec.substr(colon + 1);
    if (kind == "hash") {
        std::size_t dim = 256;
        if (!arg.empty()) {
            try {
                dim = static_cast<std::size_t>(std::stoul(arg));
            } catch (const std::logic_error&) {
                throw ConfigError("bad hash embedder dimension '" + arg + "'");
            }
        }
        return std::make_shared<HashEmbeddingProvider>(dim);
    }
    if (kind == "remote") {
        auto cfg = RemoteEmbeddingConfig::from_environment();
        if (!arg.empty()) cfg.model = arg;
        return std::make_shared<RemoteEmbeddingProvider>(std::move(cfg));
    }
    throw ConfigError("unknown embedder '" + spec + "' (expected hash[:dim] or remote[:model])");
}

// "mock" (optionally scripted from `mock_script`) or "remote".
inline std::shared_ptr<const ChatBackend> make_backend(const std::string& kind, const std::filesystem::path& mock_script = {}) {
    if (kind == "mock") {
        if (mock_script.empty()) return std::make_shared<ScriptedMock>();
        return std::make_shared<ScriptedMock>(parse_mock_script(read_text_file(mock_script)));
    }
    if (kind == "remote") return std::make_shared<RemoteChatBackend>(RemoteChatConfig::from_environment());
    throw ConfigError("unknown backend '" + kind + "' (expected mock or remote)");
}

// Interchange files (*.json) parse as structured documents; anything else
// is read as plain text titled and identified by the file stem.
inline Document load_document_file(const std::filesystem::path& path) {
    const std::string raw = read_text_file(path);
    if (path.extension() == ".json") return parse_structured_document(raw);
    const std::string stem = path.stem().string();
    return parse_plain_text(raw, stem, stem);
}

// Expands directories (non-recursive, *.json and *.txt, sorted by name).
inline std::vector<std::filesystem::path> expand_corpus_paths(const std::vector<std::filesystem::path>& inputs) {
    std::vector<std::filesystem::path> out;
    for (const auto& p : inputs) {
        if (std::filesystem::is_directory(p)) {
            std::vector<std::filesystem::path> files;
            for (const auto& e : std::filesystem::directory_iterator(p)) {
                const auto ext = e.path().extension();
                if (e.is_regular_file() && (ext == ".json" || ext == ".txt")) files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
            out.insert(out.end(), files.begin(), files.end());
        } else if (std::filesystem::exists(p)) {
            out.push_back(p);
        } else {
            throw ConfigError("no such file or directory: '" + p.string() + "'");
        }
    }
    return out;
}

inline std::vector<Document> load_corpus(const std::vector<std::filesystem::path>& inputs) {
    std::vector<Document> docs;
    for (const auto& p : expand_corpus_paths(inputs)) docs.push_back(load_document_file(p));
    return docs;
}

} // namespace ragqa
