#pragma once

// Shared test fixtures: toy questions, synthetic corpora, and independent
// reference implementations (oracles) of the frozen deterministic contracts.
// Oracles are written from the documented semantics, not by calling the
// library, so they catch drift in the production code.

#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "clozegen/corpus.hpp"
#include "clozegen/util.hpp"

namespace testsupport {

inline std::filesystem::path data_dir() { return std::filesystem::path(TEST_DATA_DIR); }

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() /
               ("clozegen-test-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// A handcrafted three-sentence question with one blank.
inline clozegen::corpus::ClozeQuestion toy_question() {
    clozegen::corpus::ClozeQuestion q;
    q.passage_id = "toy";
    q.blank_index = 0;
    q.context =
        "The museum opened a new wing last spring . Visitors were _____ to see the "
        "ancient murals inside . The curator gave a short speech about restoration .";
    q.answer = "excited";
    q.original_distractors = {"bored", "forbidden", "unable"};
    return q;
}

// Synthetic questions with globally unique vocabulary around each blank, so
// the window-signature resolver of the synthetic backend never collides.
// `filler` words per side pad the context for deletion plans.
inline std::vector<clozegen::corpus::ClozeQuestion> synthetic_questions(std::size_t n,
                                                                        std::size_t filler = 10) {
    std::vector<clozegen::corpus::ClozeQuestion> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::string tag = "q" + std::to_string(i);
        std::vector<std::string> words;
        for (std::size_t f = 0; f < filler; ++f) words.push_back("pre" + tag + "w" + std::to_string(f));
        words.push_back("left3" + tag);
        words.push_back("left2" + tag);
        words.push_back("left1" + tag);
        words.push_back(std::string(clozegen::kBlankMarker));
        words.push_back("right1" + tag);
        words.push_back("right2" + tag);
        words.push_back("right3" + tag);
        for (std::size_t f = 0; f < filler; ++f) words.push_back("post" + tag + "w" + std::to_string(f));
        clozegen::corpus::ClozeQuestion q;
        q.passage_id = "synth-" + std::to_string(i);
        q.blank_index = 0;
        q.context = clozegen::join(words, " ");
        q.answer = "answer" + tag;
        q.original_distractors = {"orig" + tag + "a", "orig" + tag + "b", "orig" + tag + "c"};
        out.push_back(std::move(q));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reference RNG oracles (independent restatements of the frozen contracts).

inline std::uint64_t ref_splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t ref_bounded_rand(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        std::uint64_t r = rng();
        if (r >= threshold) return r % bound;
    }
}

template <typename T>
void ref_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(ref_bounded_rand(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

inline std::vector<std::size_t> ref_sample_indices(std::size_t n, std::size_t k,
                                                   std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(ref_bounded_rand(rng, n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

// The documented sampler contract used by task formatting: partial
// Fisher-Yates over pool indices in selection order.
inline std::vector<std::string> ref_sample_surfaces(const std::vector<std::string>& pool,
                                                    std::size_t k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto picks = ref_sample_indices(pool.size(), std::min(k, pool.size()), rng);
    std::vector<std::string> out;
    for (auto i : picks) out.push_back(pool[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Statistics oracles

// Average-rank vector with ties averaged, 1-based.
inline std::vector<double> ref_ranks(const std::vector<double>& xs) {
    std::vector<std::size_t> order(xs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(xs.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
        double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

// Brute-force best balanced accuracy: tries a threshold between every pair of
// adjacent distinct sorted scores plus sentinels, predicting hard at >= t.
struct RefLabeled {
    double score;
    bool hard;
};
inline double ref_best_balanced_accuracy(const std::vector<RefLabeled>& pts) {
    std::vector<double> scores;
    for (const auto& p : pts) scores.push_back(p.score);
    std::sort(scores.begin(), scores.end());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
    std::vector<double> cuts;
    cuts.push_back(-1e300);
    for (std::size_t i = 0; i + 1 < scores.size(); ++i)
        cuts.push_back((scores[i] + scores[i + 1]) / 2.0);
    cuts.push_back(1e300);
    double best = 0.0;
    for (double t : cuts) {
        std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
        for (const auto& p : pts) {
            bool pred = p.score >= t;
            if (p.hard && pred) ++tp;
            if (p.hard && !pred) ++fn;
            if (!p.hard && !pred) ++tn;
            if (!p.hard && pred) ++fp;
        }
        double tpr = static_cast<double>(tp) / static_cast<double>(tp + fn);
        double tnr = static_cast<double>(tn) / static_cast<double>(tn + fp);
        best = std::max(best, 0.5 * (tpr + tnr));
    }
    return best;
}

}  // namespace testsupport
