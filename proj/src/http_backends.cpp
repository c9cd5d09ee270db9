#include "clozegen/http_backends.hpp"

#include <thread>

#include <httplib.h>

#include "clozegen/util.hpp"
#include "clozegen/wire.hpp"

namespace clozegen::http {

namespace {

using wire::ordered_json;

std::string post_json(const Endpoint& endpoint, const std::string& path,
                      const ordered_json& body, const std::string& what) {
    httplib::Client client(endpoint.host, endpoint.port);
    client.set_connection_timeout(endpoint.timeout_seconds);
    client.set_read_timeout(endpoint.timeout_seconds);
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) {
        throw BackendError(what + ": no response from " + endpoint.host + ":" +
                           std::to_string(endpoint.port) + path);
    }
    if (res->status != 200) {
        throw BackendError(what + ": HTTP " + std::to_string(res->status) + " from " +
                           path + ": " + res->body);
    }
    return res->body;
}

}  // namespace

HttpGenerationBackend::HttpGenerationBackend(Endpoint endpoint, std::string tag,
                                             bool attention_capable)
    : endpoint_(std::move(endpoint)), tag_(std::move(tag)),
      attention_capable_(attention_capable) {}

GenerationResponse HttpGenerationBackend::generate(const GenerationRequest& req) {
    std::string body = post_json(endpoint_, "/generate",
                                 wire::generation_request_to_json(req), name());
    return wire::generation_response_from_json(wire::parse_json(body, "generation response"));
}

HttpJudgeClient::HttpJudgeClient(Endpoint endpoint, std::string tag)
    : endpoint_(std::move(endpoint)), tag_(std::move(tag)) {}

std::string HttpJudgeClient::complete(const ChatPrompt& prompt, std::uint64_t seed) {
    ordered_json body;
    body["prompt"] = wire::chat_prompt_to_json(prompt);
    body["seed"] = seed;
    std::string reply = post_json(endpoint_, "/judge", body, name());
    return wire::parse_json(reply, "judge response").at("text").get<std::string>();
}

HttpQaScorer::HttpQaScorer(Endpoint endpoint, std::string tag)
    : endpoint_(std::move(endpoint)), tag_(std::move(tag)) {}

std::vector<double> HttpQaScorer::score_options(const QaRequest& req) {
    std::string body = post_json(endpoint_, "/score", wire::qa_request_to_json(req), name());
    return wire::parse_json(body, "score response")
        .at("scores")
        .get<std::vector<double>>();
}

HttpEmbeddingBackend::HttpEmbeddingBackend(Endpoint endpoint, std::string tag)
    : endpoint_(std::move(endpoint)), tag_(std::move(tag)) {}

std::vector<double> HttpEmbeddingBackend::embed(const std::string& text) {
    ordered_json body;
    body["text"] = text;
    std::string reply = post_json(endpoint_, "/embed", body, name());
    return wire::parse_json(reply, "embed response")
        .at("vector")
        .get<std::vector<double>>();
}

HttpGrammarClient::HttpGrammarClient(Endpoint endpoint, std::string tag)
    : endpoint_(std::move(endpoint)), tag_(std::move(tag)) {}

std::vector<GrammarFinding> HttpGrammarClient::check(const std::string& text) {
    ordered_json body;
    body["text"] = text;
    std::string reply = post_json(endpoint_, "/grammar", body, name());
    return wire::grammar_findings_from_json(
        wire::parse_json(reply, "grammar response").at("findings"));
}

// ---------------------------------------------------------------------------
// BackendServer

struct BackendServer::Impl {
    httplib::Server server;
    std::thread worker;
    int port = 0;
};

BackendServer::BackendServer() : impl_(std::make_unique<Impl>()) {}
BackendServer::BackendServer(BackendServer&&) noexcept = default;
BackendServer& BackendServer::operator=(BackendServer&&) noexcept = default;

BackendServer::~BackendServer() { stop(); }

int BackendServer::port() const { return impl_ ? impl_->port : 0; }

void BackendServer::stop() {
    if (!impl_) return;
    if (impl_->server.is_running()) impl_->server.stop();
    if (impl_->worker.joinable()) impl_->worker.join();
}

BackendServer BackendServer::start(ServedBackends backends) {
    BackendServer handle;
    auto* impl = handle.impl_.get();

    auto guard = [](httplib::Response& res, const std::function<std::string()>& fn) {
        try {
            res.set_content(fn(), "application/json");
        } catch (const std::exception& e) {
            res.status = 500;
            ordered_json err;
            err["error"] = e.what();
            res.set_content(err.dump(), "application/json");
        }
    };

    if (backends.generation) {
        auto* gen = backends.generation;
        impl->server.Post("/generate", [gen, guard](const httplib::Request& req,
                                                    httplib::Response& res) {
            guard(res, [&] {
                auto parsed = wire::generation_request_from_json(
                    wire::parse_json(req.body, "generation request"));
                return wire::generation_response_to_json(gen->generate(parsed)).dump();
            });
        });
    }
    if (backends.judge) {
        auto* judge = backends.judge;
        impl->server.Post("/judge", [judge, guard](const httplib::Request& req,
                                                   httplib::Response& res) {
            guard(res, [&] {
                auto body = wire::parse_json(req.body, "judge request");
                auto prompt = wire::chat_prompt_from_json(body.at("prompt"));
                auto seed = body.at("seed").get<std::uint64_t>();
                ordered_json reply;
                reply["text"] = judge->complete(prompt, seed);
                return reply.dump();
            });
        });
    }
    if (backends.scorer) {
        auto* scorer = backends.scorer;
        impl->server.Post("/score", [scorer, guard](const httplib::Request& req,
                                                    httplib::Response& res) {
            guard(res, [&] {
                auto parsed = wire::qa_request_from_json(
                    wire::parse_json(req.body, "score request"));
                ordered_json reply;
                reply["scores"] = scorer->score_options(parsed);
                return reply.dump();
            });
        });
    }
    if (backends.embedder) {
        auto* embedder = backends.embedder;
        impl->server.Post("/embed", [embedder, guard](const httplib::Request& req,
                                                      httplib::Response& res) {
            guard(res, [&] {
                auto body = wire::parse_json(req.body, "embed request");
                ordered_json reply;
                reply["vector"] = embedder->embed(body.at("text").get<std::string>());
                return reply.dump();
            });
        });
    }
    if (backends.grammar) {
        auto* grammar = backends.grammar;
        impl->server.Post("/grammar", [grammar, guard](const httplib::Request& req,
                                                       httplib::Response& res) {
            guard(res, [&] {
                auto body = wire::parse_json(req.body, "grammar request");
                ordered_json reply;
                reply["findings"] = wire::grammar_findings_to_json(
                    grammar->check(body.at("text").get<std::string>()));
                return reply.dump();
            });
        });
    }

    impl->port = impl->server.bind_to_any_port("127.0.0.1");
    if (impl->port <= 0) throw BackendError("backend server could not bind a port");
    impl->worker = std::thread([impl] { impl->server.listen_after_bind(); });
    impl->server.wait_until_ready();
    return handle;
}

}  // namespace clozegen::http
