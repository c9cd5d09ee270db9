#include "clozegen/difficulty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "clozegen/util.hpp"

namespace clozegen::difficulty {

namespace {

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_variance(std::span<const double> v, double mean) {
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Box-Cox

double boxcox_transform(double x, double lambda) {
    if (!(x > 0.0)) throw std::domain_error("Box-Cox input must be positive");
    if (lambda == 0.0) return std::log(x);
    // expm1 keeps the transform continuous through lambda -> 0.
    return std::expm1(lambda * std::log(x)) / lambda;
}

std::vector<double> boxcox_transform(std::span<const double> x, double lambda) {
    std::vector<double> out;
    out.reserve(x.size());
    for (double v : x) out.push_back(boxcox_transform(v, lambda));
    return out;
}

double boxcox_log_likelihood(std::span<const double> x, double lambda) {
    double log_sum = 0.0;
    for (double v : x) {
        if (!(v > 0.0)) throw std::domain_error("Box-Cox input must be positive");
        log_sum += std::log(v);
    }
    auto y = boxcox_transform(x, lambda);
    double var = population_variance(y, mean_of(y));
    if (var <= 0.0 || !std::isfinite(var)) {
        return -std::numeric_limits<double>::infinity();
    }
    double n = static_cast<double>(x.size());
    return -(n / 2.0) * std::log(var) + (lambda - 1.0) * log_sum;
}

double boxcox_lambda_mle(std::span<const double> x) {
    if (x.size() < 3) {
        throw DegenerateSampleError("Box-Cox fit needs at least 3 values");
    }
    double lo = *std::min_element(x.begin(), x.end());
    double hi = *std::max_element(x.begin(), x.end());
    if (!(lo > 0.0)) throw std::domain_error("Box-Cox input must be positive");
    if (lo == hi) throw DegenerateSampleError("Box-Cox fit on a constant sample");

    // Coarse scan pins the basin (the profile likelihood is near-unimodal but
    // a direct golden-section over the whole range is not safe), then
    // golden-section refines to tolerance.
    const double step = 0.01;
    double best_lambda = kBoxcoxLambdaLo;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (double l = kBoxcoxLambdaLo; l <= kBoxcoxLambdaHi + 1e-12; l += step) {
        double ll = boxcox_log_likelihood(x, l);
        if (ll > best_ll) {
            best_ll = ll;
            best_lambda = l;
        }
    }

    double a = std::max(kBoxcoxLambdaLo, best_lambda - step);
    double b = std::min(kBoxcoxLambdaHi, best_lambda + step);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = boxcox_log_likelihood(x, c);
    double fd = boxcox_log_likelihood(x, d);
    while (b - a > kBoxcoxTol) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = boxcox_log_likelihood(x, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = boxcox_log_likelihood(x, d);
        }
    }
    return (a + b) / 2.0;
}

// ---------------------------------------------------------------------------
// Normalization

namespace {

// Ascending ranks with ties averaged.
std::vector<double> rank_values(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

// Zero mean, unit variance; returns false (all zeros) for degenerate input.
bool z_standardize(std::vector<double>& v) {
    double mean = mean_of(v);
    double var = population_variance(v, mean);
    if (var <= 0.0 || !std::isfinite(var)) {
        std::fill(v.begin(), v.end(), 0.0);
        return false;
    }
    double sd = std::sqrt(var);
    for (auto& x : v) x = (x - mean) / sd;
    return true;
}

}  // namespace

EnsembleScoreMatrix normalize_matrix(
    const std::vector<std::string>& surfaces,
    const std::vector<std::pair<std::string, std::vector<double>>>& raw_columns,
    Normalization norm) {
    EnsembleScoreMatrix matrix;
    matrix.surfaces = surfaces;
    matrix.aggregate.assign(surfaces.size(), 0.0);

    for (const auto& [tag, raw] : raw_columns) {
        if (raw.size() != surfaces.size()) {
            throw IntegrityError("score column '" + tag + "' does not match candidate count");
        }
        ScoreColumn col;
        col.scorer_tag = tag;
        col.raw.reserve(raw.size());
        for (double v : raw) {
            if (!std::isfinite(v)) {
                throw IntegrityError("score column '" + tag + "' contains a non-finite value");
            }
            col.raw.push_back(std::max(v, kScoreFloor));
        }

        if (norm == Normalization::box_cox) {
            try {
                col.lambda = boxcox_lambda_mle(col.raw);
                col.normalized = boxcox_transform(col.raw, col.lambda);
            } catch (const DegenerateSampleError&) {
                col.degenerate = true;
                col.normalized.assign(col.raw.size(), 0.0);
            }
        } else {
            col.normalized = rank_values(col.raw);
        }
        if (!col.degenerate && !z_standardize(col.normalized)) {
            col.degenerate = true;
        }
        matrix.columns.push_back(std::move(col));
    }

    if (!matrix.columns.empty()) {
        for (std::size_t r = 0; r < surfaces.size(); ++r) {
            double acc = 0.0;
            for (const auto& col : matrix.columns) acc += col.normalized[r];
            matrix.aggregate[r] = acc / static_cast<double>(matrix.columns.size());
        }
    }
    return matrix;
}

// ---------------------------------------------------------------------------
// Tertile clustering

TertileSplit split_tertiles(std::span<const std::size_t> order_desc) {
    std::size_t n = order_desc.size();
    std::size_t base = n / 3;
    std::size_t rem = n % 3;
    std::size_t hard_n = base + (rem >= 1 ? 1 : 0);
    std::size_t middle_n = base + (rem >= 2 ? 1 : 0);

    TertileSplit split;
    split.hard.assign(order_desc.begin(),
                      order_desc.begin() + static_cast<std::ptrdiff_t>(hard_n));
    split.middle.assign(order_desc.begin() + static_cast<std::ptrdiff_t>(hard_n),
                        order_desc.begin() + static_cast<std::ptrdiff_t>(hard_n + middle_n));
    split.easy.assign(order_desc.begin() + static_cast<std::ptrdiff_t>(hard_n + middle_n),
                      order_desc.end());
    return split;
}

double sts_similarity(EmbeddingBackend& embedder, const std::string& a,
                      const std::string& b) {
    double sim = cosine_similarity(embedder.embed(a), embedder.embed(b));
    return std::clamp(sim, 0.0, 1.0);
}

namespace {

// Greedy diversity gate: walk the tertile in extremity order, admit while the
// set stays under max_per_set and every pairwise STS stays below threshold.
std::vector<std::string> admit_diverse(const std::vector<std::size_t>& tertile,
                                       const std::vector<std::string>& surfaces,
                                       EmbeddingBackend& embedder, double threshold,
                                       std::size_t max_per_set,
                                       std::vector<std::string>& rejects) {
    std::vector<std::string> admitted;
    for (std::size_t idx : tertile) {
        const std::string& surface = surfaces[idx];
        if (admitted.size() >= max_per_set) {
            rejects.push_back(surface);
            continue;
        }
        bool ok = true;
        for (const auto& other : admitted) {
            if (sts_similarity(embedder, surface, other) >= threshold) {
                ok = false;
                break;
            }
        }
        if (ok) {
            admitted.push_back(surface);
        } else {
            rejects.push_back(surface);
        }
    }
    return admitted;
}

}  // namespace

std::optional<ClusterOutcome> cluster_by_tertiles(const corpus::QuestionRef& ref,
                                                  const EnsembleScoreMatrix& matrix,
                                                  EmbeddingBackend& embedder,
                                                  double sts_threshold,
                                                  std::size_t max_per_set,
                                                  const std::string* gold_answer,
                                                  std::string* skip_reason) {
    std::size_t n = matrix.surfaces.size();
    if (matrix.aggregate.size() != n) {
        throw IntegrityError("score matrix aggregate is misaligned");
    }
    if (gold_answer) {
        for (const auto& surface : matrix.surfaces) {
            if (iequals(surface, *gold_answer)) {
                throw IntegrityError("gold answer reached the clustering pool for " +
                                     ref.key());
            }
        }
    }
    if (n < 3) {
        if (skip_reason) {
            *skip_reason = "pool of " + std::to_string(n) + " candidates cannot form tertiles";
        }
        return std::nullopt;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (matrix.aggregate[a] != matrix.aggregate[b]) {
            return matrix.aggregate[a] > matrix.aggregate[b];
        }
        return matrix.surfaces[a] < matrix.surfaces[b];
    });

    ClusterOutcome outcome;
    outcome.split = split_tertiles(order);
    outcome.annotated.question_ref = ref;
    for (std::size_t idx : outcome.split.middle) {
        outcome.annotated.excluded_middle.push_back(matrix.surfaces[idx]);
    }

    // Hard is already in extremity order (highest first); easy is walked from
    // the lowest aggregate upward.
    std::vector<std::size_t> easy_order(outcome.split.easy.rbegin(),
                                        outcome.split.easy.rend());
    std::vector<std::string> rejects;
    outcome.annotated.hard = admit_diverse(outcome.split.hard, matrix.surfaces, embedder,
                                           sts_threshold, max_per_set, rejects);
    outcome.annotated.easy = admit_diverse(easy_order, matrix.surfaces, embedder,
                                           sts_threshold, max_per_set, rejects);
    // Gate rejects stay in the audit trail alongside the middle tertile.
    for (auto& r : rejects) outcome.annotated.excluded_middle.push_back(std::move(r));
    return outcome;
}

// ---------------------------------------------------------------------------
// Separation metric

SeparationReport separation_metric(std::span<const LabeledScore> points) {
    std::size_t n_hard = 0;
    for (const auto& p : points) n_hard += p.hard ? 1 : 0;
    std::size_t n_easy = points.size() - n_hard;
    if (n_hard == 0 || n_easy == 0) {
        throw MetricError("separation metric needs both an easy and a hard class");
    }

    std::vector<LabeledScore> sorted(points.begin(), points.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const LabeledScore& a, const LabeledScore& b) {
                         return a.score < b.score;
                     });

    const double inf = std::numeric_limits<double>::infinity();
    SeparationReport report;
    report.balanced_accuracy = 0.5;  // t = -infinity: everything predicted hard
    report.threshold_star = -inf;

    // Sweep cut positions left to right; below the cut everything is
    // predicted easy. Cuts exist only between distinct adjacent scores, plus
    // the all-easy cut at +infinity.
    std::size_t hard_below = 0;
    std::size_t easy_below = 0;
    auto consider = [&](double threshold) {
        double tpr = static_cast<double>(n_hard - hard_below) / static_cast<double>(n_hard);
        double tnr = static_cast<double>(easy_below) / static_cast<double>(n_easy);
        double ba = 0.5 * (tpr + tnr);
        if (ba > report.balanced_accuracy + 1e-15) {
            report.balanced_accuracy = ba;
            report.threshold_star = threshold;
        }
    };
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i].hard) {
            ++hard_below;
        } else {
            ++easy_below;
        }
        if (i + 1 < sorted.size()) {
            if (sorted[i + 1].score > sorted[i].score) {
                consider((sorted[i].score + sorted[i + 1].score) / 2.0);
            }
        } else {
            consider(inf);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Ensemble selection

EnsembleSelection select_ensemble(const std::vector<std::string>& scorer_tags,
                                  const std::vector<LabeledQuestion>& dev,
                                  Normalization norm, double stability_cap,
                                  std::size_t max_subset_size) {
    if (scorer_tags.empty()) throw ConfigError("ensemble selection needs at least one scorer");
    if (dev.empty()) throw ConfigError("ensemble selection needs a labeled dev set");
    if (scorer_tags.size() > 20) {
        throw ConfigError("subset enumeration capped at 20 scorers");
    }

    // Per-column normalization is independent of the subset, so normalize
    // each (question, scorer) once up front.
    struct PreparedQuestion {
        int fold;
        std::vector<bool> hard_label;
        std::vector<std::vector<double>> z_columns;  // per scorer tag order
    };
    std::vector<PreparedQuestion> prepared;
    prepared.reserve(dev.size());
    std::set<int> folds;
    for (const auto& q : dev) {
        if (q.surfaces.size() != q.hard_label.size()) {
            throw IntegrityError("labeled question '" + q.ref.key() + "' is misaligned");
        }
        PreparedQuestion pq;
        pq.fold = q.fold;
        pq.hard_label = q.hard_label;
        std::vector<std::pair<std::string, std::vector<double>>> cols;
        for (const auto& tag : scorer_tags) {
            auto it = q.raw_scores.find(tag);
            if (it == q.raw_scores.end()) {
                throw IntegrityError("labeled question '" + q.ref.key() +
                                     "' has no scores from '" + tag + "'");
            }
            cols.emplace_back(tag, it->second);
        }
        auto matrix = normalize_matrix(q.surfaces, cols, norm);
        for (auto& col : matrix.columns) pq.z_columns.push_back(std::move(col.normalized));
        prepared.push_back(std::move(pq));
        folds.insert(q.fold);
    }

    EnsembleSelection selection;
    std::size_t m = scorer_tags.size();
    std::uint32_t full = static_cast<std::uint32_t>((1u << m) - 1u);
    for (std::uint32_t mask = 1; mask <= full; ++mask) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < m; ++i) {
            if (mask & (1u << i)) members.push_back(i);
        }
        if (members.size() > max_subset_size) continue;

        std::vector<double> fold_ba;
        for (int fold : folds) {
            std::vector<LabeledScore> points;
            for (const auto& pq : prepared) {
                if (pq.fold != fold) continue;
                for (std::size_t r = 0; r < pq.hard_label.size(); ++r) {
                    double acc = 0.0;
                    for (std::size_t ci : members) acc += pq.z_columns[ci][r];
                    points.push_back(
                        {acc / static_cast<double>(members.size()), pq.hard_label[r]});
                }
            }
            bool has_hard = std::any_of(points.begin(), points.end(),
                                        [](const LabeledScore& p) { return p.hard; });
            bool has_easy = std::any_of(points.begin(), points.end(),
                                        [](const LabeledScore& p) { return !p.hard; });
            if (!has_hard || !has_easy) continue;
            fold_ba.push_back(separation_metric(points).balanced_accuracy);
        }
        if (fold_ba.empty()) continue;

        SeparationReport report;
        for (std::size_t ci : members) report.model_subset.push_back(scorer_tags[ci]);
        report.balanced_accuracy = mean_of(fold_ba);
        report.std_across_folds =
            std::sqrt(population_variance(fold_ba, report.balanced_accuracy));
        selection.ranked.push_back(std::move(report));
    }
    if (selection.ranked.empty()) {
        throw MetricError("no scorer subset produced a valid two-class fold");
    }

    std::stable_sort(selection.ranked.begin(), selection.ranked.end(),
                     [](const SeparationReport& a, const SeparationReport& b) {
                         return a.balanced_accuracy > b.balanced_accuracy;
                     });
    for (const auto& report : selection.ranked) {
        if (report.std_across_folds < stability_cap) {
            selection.best = report;
            selection.stability_satisfied = true;
            return selection;
        }
    }
    selection.best = selection.ranked.front();
    selection.stability_satisfied = false;
    return selection;
}

}  // namespace clozegen::difficulty
