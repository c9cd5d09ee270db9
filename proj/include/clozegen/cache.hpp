#pragma once

// Content-addressed cache of model calls plus caching wrappers for each
// backend interface. Keys are SHA-256 digests of the full request material
// (backend name, payload, seed), values are the serialized responses, one
// file per entry.

#include <atomic>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>

#include "clozegen/backends.hpp"

namespace clozegen::cache {

class CallCache {
public:
    explicit CallCache(std::filesystem::path dir);

    // Returns the cached response for the digest of `key_material`, or runs
    // `compute`, stores its result, and returns it.
    std::string get_or_compute(const std::string& key_material,
                               const std::function<std::string()>& compute);

    std::size_t hits() const { return hits_.load(); }
    std::size_t misses() const { return misses_.load(); }

    // Removes every entry; returns how many were deleted. Eviction only ever
    // happens through this call.
    std::size_t purge();

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path entry_path(const std::string& digest) const;

    std::filesystem::path dir_;
    std::mutex mu_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

// ---------------------------------------------------------------------------
// Caching wrappers. Each delegates to `inner` on a miss and replays the
// stored response on a hit; `name()` passes through so provenance stays with
// the real backend.

class CachedGenerationBackend : public GenerationBackend {
public:
    CachedGenerationBackend(GenerationBackend& inner, CallCache& cache)
        : inner_(inner), cache_(cache) {}
    GenerationResponse generate(const GenerationRequest& req) override;
    bool supports_attention() const override { return inner_.supports_attention(); }
    std::string name() const override { return inner_.name(); }

private:
    GenerationBackend& inner_;
    CallCache& cache_;
};

class CachedJudgeClient : public JudgeClient {
public:
    CachedJudgeClient(JudgeClient& inner, CallCache& cache)
        : inner_(inner), cache_(cache) {}
    std::string complete(const ChatPrompt& prompt, std::uint64_t seed) override;
    std::string name() const override { return inner_.name(); }

private:
    JudgeClient& inner_;
    CallCache& cache_;
};

class CachedQaScorer : public QaScorer {
public:
    CachedQaScorer(QaScorer& inner, CallCache& cache) : inner_(inner), cache_(cache) {}
    std::vector<double> score_options(const QaRequest& req) override;
    std::string name() const override { return inner_.name(); }

private:
    QaScorer& inner_;
    CallCache& cache_;
};

class CachedEmbeddingBackend : public EmbeddingBackend {
public:
    CachedEmbeddingBackend(EmbeddingBackend& inner, CallCache& cache)
        : inner_(inner), cache_(cache) {}
    std::vector<double> embed(const std::string& text) override;
    std::string name() const override { return inner_.name(); }

private:
    EmbeddingBackend& inner_;
    CallCache& cache_;
};

class CachedGrammarClient : public GrammarClient {
public:
    CachedGrammarClient(GrammarClient& inner, CallCache& cache)
        : inner_(inner), cache_(cache) {}
    std::vector<GrammarFinding> check(const std::string& text) override;
    std::string name() const override { return inner_.name(); }

private:
    GrammarClient& inner_;
    CallCache& cache_;
};

}  // namespace clozegen::cache
