#pragma once

// HTTP adapters for the backend interfaces, plus an in-process server that
// exposes any set of backends over the same wire contract (used by the
// loopback tests and handy for demos).
//
// Endpoints (all POST, JSON bodies):
//   /generate  GenerationRequest            -> GenerationResponse
//   /judge     {prompt: ChatPrompt, seed}   -> {text}
//   /score     QaRequest                    -> {scores: [number]}
//   /embed     {text}                       -> {vector: [number]}
//   /grammar   {text}                       -> {findings: [...]}

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "clozegen/backends.hpp"

namespace clozegen::http {

struct Endpoint {
    std::string host = "127.0.0.1";
    int port = 0;
    int timeout_seconds = 30;
};

class HttpGenerationBackend : public GenerationBackend {
public:
    HttpGenerationBackend(Endpoint endpoint, std::string tag, bool attention_capable);
    GenerationResponse generate(const GenerationRequest& req) override;
    bool supports_attention() const override { return attention_capable_; }
    std::string name() const override { return tag_; }

private:
    Endpoint endpoint_;
    std::string tag_;
    bool attention_capable_;
};

class HttpJudgeClient : public JudgeClient {
public:
    HttpJudgeClient(Endpoint endpoint, std::string tag);
    std::string complete(const ChatPrompt& prompt, std::uint64_t seed) override;
    std::string name() const override { return tag_; }

private:
    Endpoint endpoint_;
    std::string tag_;
};

class HttpQaScorer : public QaScorer {
public:
    HttpQaScorer(Endpoint endpoint, std::string tag);
    std::vector<double> score_options(const QaRequest& req) override;
    std::string name() const override { return tag_; }

private:
    Endpoint endpoint_;
    std::string tag_;
};

class HttpEmbeddingBackend : public EmbeddingBackend {
public:
    HttpEmbeddingBackend(Endpoint endpoint, std::string tag);
    std::vector<double> embed(const std::string& text) override;
    std::string name() const override { return tag_; }

private:
    Endpoint endpoint_;
    std::string tag_;
};

class HttpGrammarClient : public GrammarClient {
public:
    HttpGrammarClient(Endpoint endpoint, std::string tag);
    std::vector<GrammarFinding> check(const std::string& text) override;
    std::string name() const override { return tag_; }

private:
    Endpoint endpoint_;
    std::string tag_;
};

// In-process server over the same contract. Backends are borrowed; they must
// outlive the server. Null members simply leave their endpoint unregistered.
struct ServedBackends {
    GenerationBackend* generation = nullptr;
    JudgeClient* judge = nullptr;
    QaScorer* scorer = nullptr;
    EmbeddingBackend* embedder = nullptr;
    GrammarClient* grammar = nullptr;
};

class BackendServer {
public:
    ~BackendServer();
    BackendServer(BackendServer&&) noexcept;
    BackendServer& operator=(BackendServer&&) noexcept;

    int port() const;
    void stop();

    // Binds to an ephemeral port on 127.0.0.1 and serves on a background
    // thread until stop() or destruction.
    static BackendServer start(ServedBackends backends);

private:
    BackendServer();
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace clozegen::http
