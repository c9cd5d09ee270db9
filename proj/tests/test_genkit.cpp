#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "clozegen/genkit.hpp"
#include "clozegen/stub_backends.hpp"
#include "support.hpp"

using namespace clozegen;
using namespace clozegen::genkit;

namespace {

AttentionProfile make_profile(std::vector<std::string> words, std::vector<double> scores) {
    AttentionProfile p;
    p.words = std::move(words);
    p.scores = std::move(scores);
    return p;
}

// Reference top-n selection: score descending, earlier position first on ties.
std::vector<std::size_t> oracle_top_n(const std::vector<double>& scores,
                                      const std::vector<bool>& eligible, std::size_t n) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (eligible[i]) idx.push_back(i);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

TEST_CASE("blank_word_index finds exactly one marker") {
    CHECK(blank_word_index({"a", "_____", "b"}) == 1);
    CHECK_THROWS_AS(blank_word_index({"a", "b"}), IntegrityError);
    CHECK_THROWS_AS(blank_word_index({"_____", "_____"}), IntegrityError);
}

TEST_CASE("protected_window clamps to passage bounds") {
    std::vector<std::string> words = {"a", "b", "_____", "c", "d", "e"};
    auto w = protected_window(words, 3);
    CHECK(w.begin == 0);
    CHECK(w.end == 6);
    w = protected_window(words, 1);
    CHECK(w.begin == 1);
    CHECK(w.end == 4);
    w = protected_window(words, 0);
    CHECK(w.begin == 2);
    CHECK(w.end == 3);
}

TEST_CASE("aggregate_attention sums layers and heads, then merges subwords") {
    // 2 layers x 2 heads x 4 positions, summed exhaustively by hand.
    std::vector<std::vector<std::vector<double>>> tensor = {
        {{0.1, 0.2, 0.3, 0.4}, {0.0, 0.1, 0.0, 0.9}},
        {{0.5, 0.0, 0.5, 0.0}, {0.2, 0.2, 0.2, 0.4}},
    };
    double p0 = 0.1 + 0.0 + 0.5 + 0.2;
    double p1 = 0.2 + 0.1 + 0.0 + 0.2;
    double p2 = 0.3 + 0.0 + 0.5 + 0.2;
    double p3 = 0.4 + 0.9 + 0.0 + 0.4;

    auto identity = aggregate_attention(tensor, {}, 4);
    REQUIRE(identity.size() == 4);
    CHECK(identity[0] == doctest::Approx(p0).epsilon(1e-12));
    CHECK(identity[3] == doctest::Approx(p3).epsilon(1e-12));

    // Positions 1 and 2 are subword pieces of word 1.
    auto merged = aggregate_attention(tensor, {0, 1, 1, 2}, 3);
    REQUIRE(merged.size() == 3);
    CHECK(merged[0] == doctest::Approx(p0).epsilon(1e-12));
    CHECK(merged[1] == doctest::Approx(p1 + p2).epsilon(1e-12));
    CHECK(merged[2] == doctest::Approx(p3).epsilon(1e-12));
}

TEST_CASE("plan_deletion matches the sort oracle on fuzzed inputs") {
    Rng rng(777);
    for (int trial = 0; trial < 500; ++trial) {
        std::size_t n_words = 9 + bounded_rand(rng, 40);
        std::size_t blank = 1 + bounded_rand(rng, n_words - 2);
        std::vector<std::string> words(n_words);
        std::vector<double> scores(n_words);
        for (std::size_t i = 0; i < n_words; ++i) {
            words[i] = "w" + std::to_string(i);
            // Coarse grid forces plenty of score ties.
            scores[i] = static_cast<double>(bounded_rand(rng, 5)) / 4.0;
        }
        words[blank] = std::string(kBlankMarker);
        scores[blank] = 0.0;
        int window = static_cast<int>(bounded_rand(rng, 4));
        double ratio = static_cast<double>(bounded_rand(rng, 101)) / 100.0;

        auto profile = make_profile(words, scores);
        auto span = protected_window(words, window);
        std::vector<bool> eligible(n_words, false);
        std::size_t n_eligible = 0;
        for (std::size_t i = 0; i < n_words; ++i) {
            eligible[i] = !span.contains(i) && words[i] != kBlankMarker;
            if (eligible[i]) ++n_eligible;
        }
        if (n_eligible == 0) continue;

        auto plan = plan_deletion(profile, ratio, {span});
        std::size_t want_n = static_cast<std::size_t>(ratio * static_cast<double>(n_eligible));
        CHECK(plan.n_deleted == want_n);
        CHECK(plan.deleted_indices.size() == want_n);
        CHECK(plan.deleted_indices == oracle_top_n(scores, eligible, want_n));
        for (std::size_t d : plan.deleted_indices) {
            CHECK_FALSE(span.contains(d));
            CHECK(words[d] != kBlankMarker);
        }
    }
}

TEST_CASE("plan_deletion rejects bad ratios and empty eligible sets") {
    auto profile = make_profile({"a", "_____", "b"}, {1.0, 0.0, 2.0});
    CHECK_THROWS_AS(plan_deletion(profile, -0.1, {}), ConfigError);
    CHECK_THROWS_AS(plan_deletion(profile, 1.1, {}), ConfigError);
    auto everything = WordRange{0, 3};
    CHECK_THROWS_AS(plan_deletion(profile, 0.5, {everything}), ConfigError);
    auto plan = plan_deletion(profile, 0.0, {everything});
    CHECK(plan.n_deleted == 0);
}

TEST_CASE("apply_deletion removes planned words in order") {
    auto q = testsupport::toy_question();
    auto words = split_ws(q.context);
    auto profile = make_profile(words, std::vector<double>(words.size(), 0.0));
    DeletionPlan plan;
    plan.ratio = 0.1;
    plan.deleted_indices = {0, 2, 5};
    plan.n_deleted = 3;
    auto pruned = apply_deletion(q, plan);
    auto got = split_ws(pruned.context);
    REQUIRE(got.size() == words.size() - 3);
    std::size_t gi = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i == 0 || i == 2 || i == 5) continue;
        CHECK(got[gi++] == words[i]);
    }
}

TEST_CASE("attention_profile validates capability and alignment") {
    auto q = testsupport::toy_question();
    stubs::TableGenerationBackend table;
    CHECK_THROWS_AS(attention_profile(table, q, 1), CapabilityError);

    table.set_attention_capable(true);
    GenerationResponse resp;
    resp.candidates = {"x"};
    table.set_default(resp);  // attention_capable but no scores in the response
    CHECK_THROWS_AS(attention_profile(table, q, 1), CapabilityError);

    stubs::SyntheticBackend synth({q}, 3);
    auto profile = attention_profile(synth, q, 1);
    auto words = split_ws(q.context);
    REQUIRE(profile.words == words);
    REQUIRE(profile.scores.size() == words.size());
    CHECK(profile.scores[blank_word_index(words)] == 0.0);
    for (double s : profile.scores) CHECK(s >= 0.0);
}

TEST_CASE("generate_via_ir emits per-ratio candidates with dedup and answer flags") {
    auto questions = testsupport::synthetic_questions(3);
    stubs::SyntheticBackend synth(questions, 3);
    GenOptions opts;
    opts.n_per_ratio = 8;
    opts.protect_window = 3;
    const std::vector<double> ratios = {0.1, 0.2, 0.4};

    auto cands = generate_via_ir(synth, questions[0], ratios, opts, 99);
    CHECK_FALSE(cands.empty());
    std::set<std::string> seen_lower;
    for (const auto& c : cands) {
        CHECK(c.source == CandidateSource::answer_generator_ir);
        REQUIRE(c.deletion_ratio.has_value());
        CHECK(std::count(ratios.begin(), ratios.end(), *c.deletion_ratio) == 1);
        CHECK(c.question_ref.key() == corpus::ref_of(questions[0]).key());
        CHECK(c.answer_duplicate == iequals(c.surface, questions[0].answer));
        if (!c.answer_duplicate) {
            // non-answer candidates are case-insensitively unique
            CHECK(seen_lower.insert(to_lower_ascii(c.surface)).second);
        }
    }
    // determinism
    auto again = generate_via_ir(synth, questions[0], ratios, opts, 99);
    REQUIRE(again.size() == cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) CHECK(again[i].surface == cands[i].surface);
}

TEST_CASE("generate_via_dg labels candidates and retries transient failures") {
    auto q = testsupport::toy_question();
    stubs::HashGenerationBackend dg("dg-test");
    auto cands = generate_via_dg(dg, q, 10, 2, 5);
    CHECK(cands.size() <= 10);
    CHECK_FALSE(cands.empty());
    for (const auto& c : cands) {
        CHECK(c.source == CandidateSource::distractor_generator);
        CHECK_FALSE(c.deletion_ratio.has_value());
    }
    auto again = generate_via_dg(dg, q, 10, 2, 5);
    CHECK(again.size() == cands.size());
}

TEST_CASE("candidate source tags round-trip") {
    CHECK(candidate_source_from_string(to_string(CandidateSource::distractor_generator)) ==
          CandidateSource::distractor_generator);
    CHECK(candidate_source_from_string(to_string(CandidateSource::answer_generator_ir)) ==
          CandidateSource::answer_generator_ir);
    CHECK_THROWS_AS(candidate_source_from_string("nonsense"), ParseError);
}
