#pragma once

// Evaluation protocols: judge-based relative difficulty and invalid ratio,
// exact-match F1@K, and the distractor statistics (diversity, plausibility,
// overlap, duplication).

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clozegen/backends.hpp"
#include "clozegen/corpus.hpp"

namespace clozegen::evalkit {

enum class OptionType { original, easy, hard };
enum class Slot { hardest, middle, easiest };

std::string to_string(OptionType t);
std::string to_string(Slot s);

struct JudgeProtocolConfig {
    int shots = 1;
    int reasks = 1;  // extra judge attempts on unparseable/invalid output
};

// One judged question; `ranking` lists the three incorrect option types from
// most to least confusable. Abstained rows carry no ranking.
struct RelativeDifficultyRow {
    corpus::QuestionRef ref;
    bool abstained = false;
    std::vector<OptionType> ranking;
};

// Presents {answer, original, easy, hard} (in that fixed order) and parses
// the judged ordering of the three incorrect options. Unparseable or
// non-permutation output is re-asked, then recorded as an abstention.
RelativeDifficultyRow judge_relative_difficulty(JudgeClient& judge,
                                                const corpus::ClozeQuestion& question,
                                                const std::string& original,
                                                const std::string& easy,
                                                const std::string& hard,
                                                const JudgeProtocolConfig& cfg,
                                                std::uint64_t seed);

struct RelativeDifficultyTable {
    // percent[type][slot] over judged (non-abstained) rows.
    std::map<OptionType, std::map<Slot, double>> percent;
    std::size_t judged = 0;
    std::size_t abstained = 0;

    std::string render_text() const;
};

RelativeDifficultyTable aggregate_relative_difficulty(
    const std::vector<RelativeDifficultyRow>& rows);

// One judged question for the invalid-ratio protocol; a distractor is
// invalid when the judge lists it as suiting the blank at least as well as
// the answer.
struct InvalidRatioRow {
    corpus::QuestionRef ref;
    bool abstained = false;
    std::vector<std::pair<std::string, bool>> invalid;  // (distractor, is_invalid)
};

InvalidRatioRow judge_invalid_ratio(JudgeClient& judge,
                                    const corpus::ClozeQuestion& question,
                                    const std::vector<std::string>& distractors,
                                    const std::string& answer,
                                    const JudgeProtocolConfig& cfg, std::uint64_t seed);

struct InvalidRatioSummary {
    double ratio = 0.0;  // invalid distractors / judged distractors
    std::size_t judged_questions = 0;
    std::size_t abstained = 0;
};

InvalidRatioSummary aggregate_invalid_ratio(const std::vector<InvalidRatioRow>& rows);

// ---------------------------------------------------------------------------
// Metrics

// Case-insensitive exact-match F1 over the top-k generated distractors
// (deduplicated before truncation). Throws MetricError on an empty
// reference, ConfigError on k < 1.
double f1_at_k(const std::vector<std::string>& generated,
               const std::vector<std::string>& reference, int k);

// 1 - mean pairwise STS; nullopt for fewer than 2 distractors.
std::optional<double> semantic_diversity(const std::vector<std::string>& distractors,
                                         EmbeddingBackend& embedder);

// STS between a distractor and the gold answer.
double plausibility(const std::string& distractor, const std::string& answer,
                    EmbeddingBackend& embedder);

struct OverlapStats {
    double jaccard = 0.0;           // case-folded exact-match sets
    double semantic_overlap = 0.0;  // mean cross-set pairwise STS
};

// Throws MetricError when either side is empty.
OverlapStats overlap_stats(const std::vector<std::string>& set_a,
                           const std::vector<std::string>& set_b,
                           EmbeddingBackend& embedder);

// Fraction of candidates case-insensitively equal to the answer; throws
// MetricError on an empty candidate list.
double duplication_rate(const std::vector<std::string>& candidates,
                        const std::string& answer);

}  // namespace clozegen::evalkit
