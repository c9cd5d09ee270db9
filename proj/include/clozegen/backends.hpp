#pragma once

// Abstract interfaces for the model-facing side of the pipeline.  Everything
// downstream (generation, filtering, scoring, evaluation) talks to these;
// concrete implementations are either HTTP adapters or deterministic stubs.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace clozegen {

// ---------------------------------------------------------------------------
// Generation

// Attention at the final generated token.  Either pre-aggregated per-word
// scores (aligned with whitespace tokenization of the context) or the raw
// [layer][head][position] tensor, with an optional position-to-word map when
// positions are subword units.
struct RawAttention {
    std::vector<double> word_scores;
    std::vector<std::vector<std::vector<double>>> tensor;
    std::vector<std::size_t> position_to_word;
};

struct GenerationRequest {
    std::string context;          // passage text with the blank marker in place
    int max_candidates = 10;
    std::uint64_t seed = 0;
    bool want_attention = false;
};

struct GenerationResponse {
    std::vector<std::string> candidates;  // ranked, most probable first
    std::optional<RawAttention> attention;
};

class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;
    virtual GenerationResponse generate(const GenerationRequest& req) = 0;
    // Whether generate() can populate attention when asked.
    virtual bool supports_attention() const { return false; }
    virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Judge (chat-style instruction follower)

struct ChatShot {
    std::string user;
    std::string assistant;
};

struct ChatPrompt {
    std::string system;
    std::vector<ChatShot> shots;
    std::string user;

    // Canonical flat rendering, used for cache keys and transcript dumps.
    std::string render_text() const;
};

class JudgeClient {
public:
    virtual ~JudgeClient() = default;
    virtual std::string complete(const ChatPrompt& prompt, std::uint64_t seed) = 0;
    virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// QA scorer: probability-like score per option for a cloze question

struct QaRequest {
    std::string context;
    std::vector<std::string> options;
};

class QaScorer {
public:
    virtual ~QaScorer() = default;
    // One non-negative score per option, same order as the request.
    virtual std::vector<double> score_options(const QaRequest& req) = 0;
    virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Embeddings (semantic similarity)

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::vector<double> embed(const std::string& text) = 0;
    virtual std::string name() const = 0;
};

// Cosine similarity; zero vectors yield 0.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------------------
// Grammar checker

struct GrammarFinding {
    std::size_t offset = 0;   // byte offset into the checked text
    std::size_t length = 0;
    std::string rule_id;
    std::string message;
};

class GrammarClient {
public:
    virtual ~GrammarClient() = default;
    virtual std::vector<GrammarFinding> check(const std::string& text) = 0;
    virtual std::string name() const = 0;
};

}  // namespace clozegen
