#pragma once

// Two-way candidate generation: a distractor-generator path and an
// answer-generator path under information restriction (delete the passage
// words the model attends to most, then regenerate).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "clozegen/backends.hpp"
#include "clozegen/corpus.hpp"

namespace clozegen::genkit {

struct AttentionProfile {
    std::vector<std::string> words;   // whitespace tokens of the context
    std::vector<double> scores;       // non-negative, one per word
    std::string query_anchor = "last generated token";
};

// Half-open word-index range [begin, end).
struct WordRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool contains(std::size_t i) const { return i >= begin && i < end; }
};

struct DeletionPlan {
    double ratio = 0.0;
    std::size_t n_deleted = 0;
    std::vector<WordRange> protected_spans;
    std::vector<std::size_t> deleted_indices;  // ascending
};

enum class CandidateSource { distractor_generator, answer_generator_ir };

std::string to_string(CandidateSource s);
CandidateSource candidate_source_from_string(std::string_view tag);

struct DistractorCandidate {
    std::string surface;
    CandidateSource source = CandidateSource::distractor_generator;
    std::optional<double> deletion_ratio;  // present iff source is answer_generator_ir
    corpus::QuestionRef question_ref;
    bool answer_duplicate = false;  // case-insensitively equal to the gold answer
};

// Thrown when generation dies mid-question; carries what was produced.
class CandidateGenerationError : public BackendError {
public:
    CandidateGenerationError(const std::string& what, std::vector<DistractorCandidate> got)
        : BackendError(what), partial(std::move(got)) {}
    std::vector<DistractorCandidate> partial;
};

// Index of the blank marker among `words`; throws IntegrityError when the
// marker is missing or duplicated.
std::size_t blank_word_index(const std::vector<std::string>& words);

// Symmetric window of `window` words on each side of the blank (clamped to
// the passage bounds); always includes the blank itself.
WordRange protected_window(const std::vector<std::string>& words, int window);

// Sums a [layer][head][position] tensor over layers and heads, then merges
// positions into words via `position_to_word` (identity when empty).
std::vector<double> aggregate_attention(
    const std::vector<std::vector<std::vector<double>>>& tensor,
    const std::vector<std::size_t>& position_to_word, std::size_t n_words);

// Queries the backend with attention requested and aligns scores to the
// question's words. Throws CapabilityError when the backend cannot comply.
AttentionProfile attention_profile(GenerationBackend& backend,
                                   const corpus::ClozeQuestion& question,
                                   std::uint64_t seed);

// Top-floor(ratio * |eligible|) eligible words by (score desc, position asc).
// Eligible = outside every protected span and not the blank marker itself.
// Throws ConfigError for ratio outside [0,1] or an empty eligible set with
// ratio > 0.
DeletionPlan plan_deletion(const AttentionProfile& profile, double ratio,
                           std::vector<WordRange> protected_spans);

// Removes planned words; survivors keep their original order.
corpus::ClozeQuestion apply_deletion(const corpus::ClozeQuestion& question,
                                     const DeletionPlan& plan);

struct GenOptions {
    int n_per_ratio = 8;
    int protect_window = 3;
    int max_retries = 2;
};

// Answer-generator path: one profile per question, one deletion plan and one
// generation call per ratio. Candidates are deduplicated case-insensitively
// (first occurrence wins) except answer-equal ones, which are all retained
// and flagged so duplication-rate analysis sees them.
std::vector<DistractorCandidate> generate_via_ir(GenerationBackend& backend,
                                                 const corpus::ClozeQuestion& question,
                                                 const std::vector<double>& ratios,
                                                 const GenOptions& opts,
                                                 std::uint64_t seed);

// Distractor-generator path: single call on the intact context.
std::vector<DistractorCandidate> generate_via_dg(GenerationBackend& backend,
                                                 const corpus::ClozeQuestion& question,
                                                 int n, int max_retries,
                                                 std::uint64_t seed);

}  // namespace clozegen::genkit
