#pragma once

// Difficulty annotation: ensemble QA scoring, per-(passage, scorer) Box-Cox
// normalization, tertile clustering with an STS diversity gate, and the
// balanced-accuracy separation metric used to pick the scorer ensemble.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clozegen/backends.hpp"
#include "clozegen/corpus.hpp"

namespace clozegen::difficulty {

// ---------------------------------------------------------------------------
// Box-Cox

// (x^λ − 1)/λ for λ ≠ 0, ln x for λ = 0; throws std::domain_error on x <= 0.
double boxcox_transform(double x, double lambda);
std::vector<double> boxcox_transform(std::span<const double> x, double lambda);

// Profile log-likelihood ℓ(λ) = −(N/2)·ln σ̂²(λ) + (λ−1)·Σ ln xᵢ with the
// MLE (population) variance of the transformed sample.
double boxcox_log_likelihood(std::span<const double> x, double lambda);

inline constexpr double kBoxcoxLambdaLo = -5.0;
inline constexpr double kBoxcoxLambdaHi = 5.0;
inline constexpr double kBoxcoxTol = 1e-6;

// Maximizer of ℓ over [−5, 5]: coarse scan then golden-section refinement to
// kBoxcoxTol. Requires >= 3 positive values; throws DegenerateSampleError on
// constant or too-small samples.
double boxcox_lambda_mle(std::span<const double> x);

// ---------------------------------------------------------------------------
// Score normalization

struct ScoreColumn {
    std::string scorer_tag;
    std::vector<double> raw;         // clamped positive copy of the input
    double lambda = 0.0;
    bool degenerate = false;         // constant or too small to fit; normalized all 0
    std::vector<double> normalized;  // Box-Cox (or rank) then z-standardized
};

struct EnsembleScoreMatrix {
    std::vector<std::string> surfaces;  // candidate rows
    std::vector<ScoreColumn> columns;
    std::vector<double> aggregate;      // per-row mean over columns
};

enum class Normalization { box_cox, ranking };

// Raw scores below kScoreFloor (including zeros) are clamped up to it before
// fitting; Box-Cox needs positivity.
inline constexpr double kScoreFloor = 1e-9;

// One column per scorer, values aligned with `surfaces`. Fits λ per column,
// transforms, z-standardizes within the question, and aggregates by
// arithmetic mean. Degenerate columns normalize to zeros and are flagged.
EnsembleScoreMatrix normalize_matrix(
    const std::vector<std::string>& surfaces,
    const std::vector<std::pair<std::string, std::vector<double>>>& raw_columns,
    Normalization norm = Normalization::box_cox);

// ---------------------------------------------------------------------------
// Tertile clustering

struct DifficultyAnnotatedQuestion {
    corpus::QuestionRef question_ref;
    std::vector<std::string> easy;
    std::vector<std::string> hard;
    std::vector<std::string> excluded_middle;  // middle tertile + gate rejects
};

// Contiguous index slices of the descending-aggregate order. When the pool
// size is not divisible by 3, the extra elements go to hard first, then
// middle.
struct TertileSplit {
    std::vector<std::size_t> hard;    // rows, aggregate descending
    std::vector<std::size_t> middle;
    std::vector<std::size_t> easy;
};

TertileSplit split_tertiles(std::span<const std::size_t> order_desc);

struct ClusterOutcome {
    DifficultyAnnotatedQuestion annotated;
    TertileSplit split;
};

// Sorts by (aggregate desc, surface asc), splits into tertiles, then admits
// greedily within the hard and easy sets by extremity, rejecting candidates
// with STS >= threshold against an already-admitted one or when the set is
// full. Returns nullopt (with reason) for pools smaller than 3. A non-null
// gold_answer re-asserts the filter guarantee that it left the pool.
std::optional<ClusterOutcome> cluster_by_tertiles(const corpus::QuestionRef& ref,
                                                  const EnsembleScoreMatrix& matrix,
                                                  EmbeddingBackend& embedder,
                                                  double sts_threshold,
                                                  std::size_t max_per_set,
                                                  const std::string* gold_answer = nullptr,
                                                  std::string* skip_reason = nullptr);

// Clamped-to-[0,1] cosine similarity of the two surfaces' embeddings.
double sts_similarity(EmbeddingBackend& embedder, const std::string& a,
                      const std::string& b);

// ---------------------------------------------------------------------------
// Separation metric and ensemble selection

struct LabeledScore {
    double score = 0.0;
    bool hard = false;  // positive class
};

struct SeparationReport {
    std::vector<std::string> model_subset;
    double balanced_accuracy = 0.0;
    double threshold_star = 0.0;  // +-infinity allowed
    double std_across_folds = 0.0;
};

// Best 0.5*(TPR+TNR) over thresholds t (midpoints of adjacent distinct
// sorted scores plus +-infinity), predicting hard when score >= t. Throws
// MetricError when either class is empty.
SeparationReport separation_metric(std::span<const LabeledScore> points);

// One question of the labeled dev set: human-labeled candidates plus raw
// scores from every candidate scorer.
struct LabeledQuestion {
    corpus::QuestionRef ref;
    int fold = 0;
    std::vector<std::string> surfaces;
    std::vector<bool> hard_label;                       // aligned with surfaces
    std::map<std::string, std::vector<double>> raw_scores;  // scorer tag -> per-surface
};

struct EnsembleSelection {
    SeparationReport best;                 // chosen subset
    std::vector<SeparationReport> ranked;  // all evaluated subsets, mean BA desc
    bool stability_satisfied = false;      // best passed the std cap
};

// Evaluates every non-empty subset of `scorer_tags` up to max_subset_size:
// normalizes per (question, scorer), aggregates, computes balanced accuracy
// per fold, ranks subsets by mean, and returns the best subset with fold std
// below stability_cap (or the best overall when none qualifies).
EnsembleSelection select_ensemble(const std::vector<std::string>& scorer_tags,
                                  const std::vector<LabeledQuestion>& dev,
                                  Normalization norm, double stability_cap,
                                  std::size_t max_subset_size);

}  // namespace clozegen::difficulty
