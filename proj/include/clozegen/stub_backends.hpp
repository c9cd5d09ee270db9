#pragma once

// Deterministic in-process backends. They serve two purposes: table-driven
// fakes for unit tests, and the synthetic answer-generator family that lets
// the full pipeline run offline with reproducible outputs.

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clozegen/backends.hpp"
#include "clozegen/corpus.hpp"

namespace clozegen::stubs {

// Deterministic pseudo-word (lowercase letters) derived from a hash state.
std::string pseudo_word(std::uint64_t state, std::size_t len = 6);

// ---------------------------------------------------------------------------
// Generation

// Exact-context lookup table with an optional default response.
class TableGenerationBackend : public GenerationBackend {
public:
    void set_response(const std::string& context, GenerationResponse resp);
    void set_default(GenerationResponse resp);

    GenerationResponse generate(const GenerationRequest& req) override;
    bool supports_attention() const override { return attention_capable_; }
    void set_attention_capable(bool v) { attention_capable_ = v; }
    std::string name() const override { return "table-gen"; }
    int calls() const { return calls_.load(); }

private:
    std::map<std::string, GenerationResponse> table_;
    std::optional<GenerationResponse> default_;
    bool attention_capable_ = false;
    std::atomic<int> calls_{0};
};

// Emits pseudo-words deterministic in (context, seed). Stands in for the
// fine-tuned distractor generator.
class HashGenerationBackend : public GenerationBackend {
public:
    explicit HashGenerationBackend(std::string tag = "hash-dg") : tag_(std::move(tag)) {}
    GenerationResponse generate(const GenerationRequest& req) override;
    std::string name() const override { return tag_; }
    int calls() const { return calls_.load(); }

private:
    std::string tag_;
    std::atomic<int> calls_{0};
};

// Synthetic answer generator with attention scores.
//
// Conventions (documented for test oracles):
//  - per-word attention weight = u^4 where u = hash(surface) mapped to [0,1);
//    the blank marker weighs 0. Heavy tail: a few words carry most mass.
//  - answer-reproduction probability p = surviving weight mass / full-context
//    weight mass for the question owning the context.
//  - a request for n candidates reproduces the answer at quantile draws
//    u_j = (j+0.5)/n, i.e. exactly #{j : u_j < p} answer copies, the rest
//    pseudo-word fillers. Deleting more mass strictly lowers p, so answer
//    duplication falls as context shrinks.
//
// Questions are recognized by the words adjacent to the blank (the protected
// window survives every deletion plan), so pruned contexts still resolve.
class SyntheticBackend : public GenerationBackend {
public:
    SyntheticBackend(std::vector<corpus::ClozeQuestion> questions, int window);

    GenerationResponse generate(const GenerationRequest& req) override;
    bool supports_attention() const override { return true; }
    std::string name() const override { return "synthetic-answer-gen"; }
    int calls() const { return calls_.load(); }

    static double word_weight(std::string_view surface);

private:
    struct Entry {
        std::string answer;
        double total_mass = 0.0;
    };
    std::string signature(const std::vector<std::string>& tokens) const;
    const Entry& resolve(const std::vector<std::string>& tokens) const;

    int window_;
    std::map<std::string, Entry> by_signature_;
    std::atomic<int> calls_{0};
};

// ---------------------------------------------------------------------------
// Judges

// Always returns the same text.
class ConstantJudgeClient : public JudgeClient {
public:
    explicit ConstantJudgeClient(std::string response, std::string tag = "const-judge")
        : response_(std::move(response)), tag_(std::move(tag)) {}
    std::string complete(const ChatPrompt&, std::uint64_t) override {
        ++calls_;
        return response_;
    }
    std::string name() const override { return tag_; }
    int calls() const { return calls_.load(); }

private:
    std::string response_;
    std::string tag_;
    std::atomic<int> calls_{0};
};

// Returns scripted responses in call order; repeats the last one when
// exhausted.
class SequenceJudgeClient : public JudgeClient {
public:
    explicit SequenceJudgeClient(std::vector<std::string> responses)
        : responses_(std::move(responses)) {}
    std::string complete(const ChatPrompt&, std::uint64_t) override;
    std::string name() const override { return "sequence-judge"; }

private:
    std::vector<std::string> responses_;
    std::atomic<std::size_t> next_{0};
};

// Validity judge: flags a deterministic hash-selected fraction of the
// candidates listed in the prompt as appropriate answers.
class HashValidityJudge : public JudgeClient {
public:
    explicit HashValidityJudge(int percent = 21, std::uint64_t salt = 0)
        : percent_(percent), salt_(salt) {}
    std::string complete(const ChatPrompt& prompt, std::uint64_t seed) override;
    std::string name() const override { return "hash-validity-judge"; }
    bool would_flag(const std::string& candidate) const;
    int calls() const { return calls_.load(); }

private:
    int percent_;
    std::uint64_t salt_;
    std::atomic<int> calls_{0};
};

// Relative-difficulty judge: ranks the incorrect options by surface hash.
class HashRelativeJudge : public JudgeClient {
public:
    explicit HashRelativeJudge(std::uint64_t salt = 0) : salt_(salt) {}
    std::string complete(const ChatPrompt& prompt, std::uint64_t seed) override;
    std::string name() const override { return "hash-relative-judge"; }

private:
    std::uint64_t salt_;
};

// Invalid-ratio judge: flags a hash-selected fraction of listed options.
class HashInvalidJudge : public JudgeClient {
public:
    explicit HashInvalidJudge(int percent = 10, std::uint64_t salt = 0)
        : percent_(percent), salt_(salt) {}
    std::string complete(const ChatPrompt& prompt, std::uint64_t seed) override;
    std::string name() const override { return "hash-invalid-judge"; }
    bool would_flag(const std::string& option) const;

private:
    int percent_;
    std::uint64_t salt_;
};

// Extracts the newline-separated block following `header` from a rendered
// prompt user body (stub-side convention; blocks end at a blank line).
std::vector<std::string> block_after_header(const std::string& user_body,
                                            const std::string& header);
// Extracts the remainder of the line starting with `prefix`, if present.
std::optional<std::string> line_after_prefix(const std::string& user_body,
                                             const std::string& prefix);

// ---------------------------------------------------------------------------
// QA scorers

// Positive right-skewed score deterministic in (context, option).
class HashQaScorer : public QaScorer {
public:
    explicit HashQaScorer(std::string tag = "hash-qa", std::uint64_t salt = 0)
        : tag_(std::move(tag)), salt_(salt) {}
    std::vector<double> score_options(const QaRequest& req) override;
    std::string name() const override { return tag_; }
    int calls() const { return calls_.load(); }

private:
    std::string tag_;
    std::uint64_t salt_;
    std::atomic<int> calls_{0};
};

// Explicit per-option table: score(option) with optional default.
class TableQaScorer : public QaScorer {
public:
    explicit TableQaScorer(std::string tag = "table-qa") : tag_(std::move(tag)) {}
    void set_score(const std::string& option, double score) { table_[option] = score; }
    void set_default(double score) { default_ = score; }
    std::vector<double> score_options(const QaRequest& req) override;
    std::string name() const override { return tag_; }

private:
    std::string tag_;
    std::map<std::string, double> table_;
    std::optional<double> default_;
};

// ---------------------------------------------------------------------------
// Embeddings

// Unit vector deterministic in the exact string.
class HashEmbeddingBackend : public EmbeddingBackend {
public:
    explicit HashEmbeddingBackend(std::size_t dim = 16, std::uint64_t salt = 0)
        : dim_(dim), salt_(salt) {}
    std::vector<double> embed(const std::string& text) override;
    std::string name() const override { return "hash-embed"; }
    int calls() const { return calls_.load(); }

private:
    std::size_t dim_;
    std::uint64_t salt_;
    std::atomic<int> calls_{0};
};

// Explicit vector table with optional hash fallback.
class TableEmbeddingBackend : public EmbeddingBackend {
public:
    void set_vector(const std::string& text, std::vector<double> v) {
        table_[text] = std::move(v);
    }
    void set_fallback_dim(std::size_t dim) { fallback_dim_ = dim; }
    std::vector<double> embed(const std::string& text) override;
    std::string name() const override { return "table-embed"; }

private:
    std::map<std::string, std::vector<double>> table_;
    std::optional<std::size_t> fallback_dim_;
};

// ---------------------------------------------------------------------------
// Grammar

// Never reports findings.
class PermissiveGrammarClient : public GrammarClient {
public:
    std::vector<GrammarFinding> check(const std::string&) override { ++calls_; return {}; }
    std::string name() const override { return "permissive-grammar"; }
    int calls() const { return calls_.load(); }

private:
    std::atomic<int> calls_{0};
};

// Reports one finding per occurrence of any listed word (whitespace tokens,
// case-insensitive).
class WordListGrammarClient : public GrammarClient {
public:
    explicit WordListGrammarClient(std::set<std::string> bad_words);
    std::vector<GrammarFinding> check(const std::string& text) override;
    std::string name() const override { return "wordlist-grammar"; }

private:
    std::set<std::string> bad_words_;  // lowercase
};

}  // namespace clozegen::stubs
