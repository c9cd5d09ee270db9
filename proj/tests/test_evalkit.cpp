#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "clozegen/evalkit.hpp"
#include "clozegen/stub_backends.hpp"
#include "support.hpp"

using namespace clozegen;
using namespace clozegen::evalkit;

namespace {

RelativeDifficultyRow judged_row(const char* id, OptionType a, OptionType b, OptionType c) {
    RelativeDifficultyRow row;
    row.ref = {id, 0};
    row.ranking = {a, b, c};
    return row;
}

}  // namespace

TEST_CASE("relative difficulty maps the listed order onto slots") {
    auto q = testsupport::toy_question();
    stubs::SequenceJudgeClient judge({"Results: thrilled\nbored\ncalm"});
    auto row = judge_relative_difficulty(judge, q, "bored", "calm", "thrilled", {}, 1);
    CHECK_FALSE(row.abstained);
    REQUIRE(row.ranking.size() == 3);
    CHECK(row.ranking[0] == OptionType::hard);
    CHECK(row.ranking[1] == OptionType::original);
    CHECK(row.ranking[2] == OptionType::easy);
    CHECK(row.ref.key() == corpus::ref_of(q).key());
}

TEST_CASE("judged surfaces match options case-insensitively") {
    auto q = testsupport::toy_question();
    stubs::SequenceJudgeClient judge({"Results: CALM\nTHRILLED\nBored"});
    auto row = judge_relative_difficulty(judge, q, "bored", "calm", "thrilled", {}, 1);
    REQUIRE_FALSE(row.abstained);
    CHECK(row.ranking[0] == OptionType::easy);
    CHECK(row.ranking[1] == OptionType::hard);
    CHECK(row.ranking[2] == OptionType::original);
}

TEST_CASE("non-permutations are re-asked before abstaining") {
    auto q = testsupport::toy_question();
    // answer listed, duplicate type, too short, then a clean ranking
    stubs::SequenceJudgeClient judge({
        "Results: excited\nbored\ncalm",
        "Results: bored\nBored\ncalm",
        "Results: bored\ncalm",
        "Results: bored\ncalm\nthrilled",
    });
    JudgeProtocolConfig cfg;
    cfg.reasks = 3;
    auto row = judge_relative_difficulty(judge, q, "bored", "calm", "thrilled", cfg, 1);
    REQUIRE_FALSE(row.abstained);
    CHECK(row.ranking[0] == OptionType::original);

    stubs::ConstantJudgeClient hopeless("no results block here");
    auto gone = judge_relative_difficulty(hopeless, q, "bored", "calm", "thrilled", cfg, 1);
    CHECK(gone.abstained);
    CHECK(gone.ranking.empty());
    CHECK(hopeless.calls() == 4);
}

TEST_CASE("option collisions with the answer are rejected up front") {
    auto q = testsupport::toy_question();
    stubs::ConstantJudgeClient judge("Results: None");
    CHECK_THROWS_AS(
        judge_relative_difficulty(judge, q, "bored", "Excited", "thrilled", {}, 1),
        ConfigError);
    CHECK_THROWS_AS(judge_relative_difficulty(judge, q, "bored", "bored", "thrilled", {}, 1),
                    ConfigError);
    CHECK(judge.calls() == 0);
}

TEST_CASE("the relative difficulty table aggregates judged rows only") {
    RelativeDifficultyRow abstained;
    abstained.ref = {"p0", 0};
    abstained.abstained = true;
    std::vector<RelativeDifficultyRow> rows = {
        abstained,
        judged_row("p1", OptionType::hard, OptionType::original, OptionType::easy),
        judged_row("p2", OptionType::original, OptionType::easy, OptionType::hard),
    };
    auto table = aggregate_relative_difficulty(rows);
    CHECK(table.judged == 2);
    CHECK(table.abstained == 1);
    CHECK(table.percent.at(OptionType::hard).at(Slot::hardest) == doctest::Approx(50.0));
    CHECK(table.percent.at(OptionType::original).at(Slot::hardest) == doctest::Approx(50.0));
    CHECK(table.percent.at(OptionType::original).at(Slot::middle) == doctest::Approx(50.0));
    CHECK(table.percent.at(OptionType::easy).at(Slot::middle) == doctest::Approx(50.0));
    CHECK(table.percent.at(OptionType::easy).at(Slot::easiest) == doctest::Approx(50.0));
    CHECK(table.percent.at(OptionType::hard).at(Slot::easiest) == doctest::Approx(50.0));
    CHECK(table.percent.at(OptionType::easy).at(Slot::hardest) == doctest::Approx(0.0));

    auto text = table.render_text();
    CHECK(text.find("judged: 2, abstained: 1") != std::string::npos);
    CHECK(text.find("Hardest") != std::string::npos);
    CHECK(text.find("50.00") != std::string::npos);

    RelativeDifficultyRow bad;
    bad.ref = {"p3", 0};
    bad.ranking = {OptionType::easy, OptionType::hard};
    CHECK_THROWS_AS(aggregate_relative_difficulty({bad}), IntegrityError);

    auto empty = aggregate_relative_difficulty({});
    CHECK(empty.judged == 0);
    CHECK(empty.percent.at(OptionType::hard).at(Slot::hardest) == 0.0);
}

TEST_CASE("invalid ratio flags listed distractors and treats None as all valid") {
    auto q = testsupport::toy_question();
    std::vector<std::string> distractors = {"bored", "calm", "thrilled"};

    stubs::SequenceJudgeClient none_judge({"Results: None"});
    auto row = judge_invalid_ratio(none_judge, q, distractors, q.answer, {}, 1);
    REQUIRE_FALSE(row.abstained);
    REQUIRE(row.invalid.size() == 3);
    for (const auto& [surface, flagged] : row.invalid) CHECK_FALSE(flagged);

    stubs::SequenceJudgeClient flag_judge({"Results: Bored\ncalm"});
    row = judge_invalid_ratio(flag_judge, q, distractors, q.answer, {}, 1);
    REQUIRE_FALSE(row.abstained);
    CHECK(row.invalid[0] == std::pair<std::string, bool>{"bored", true});
    CHECK(row.invalid[1] == std::pair<std::string, bool>{"calm", true});
    CHECK(row.invalid[2] == std::pair<std::string, bool>{"thrilled", false});
}

TEST_CASE("unknown judged items trigger a re-ask, then an abstention") {
    auto q = testsupport::toy_question();
    std::vector<std::string> distractors = {"bored", "calm"};
    stubs::SequenceJudgeClient recovers({"Results: zebra", "Results: None"});
    JudgeProtocolConfig cfg;
    cfg.reasks = 1;
    auto row = judge_invalid_ratio(recovers, q, distractors, q.answer, cfg, 1);
    CHECK_FALSE(row.abstained);

    stubs::ConstantJudgeClient stuck("Results: zebra");
    row = judge_invalid_ratio(stuck, q, distractors, q.answer, cfg, 1);
    CHECK(row.abstained);
    CHECK(row.invalid.empty());
    CHECK(stuck.calls() == 2);

    CHECK_THROWS_AS(
        judge_invalid_ratio(stuck, q, {"bored", "Excited"}, q.answer, cfg, 1),
        ConfigError);
}

TEST_CASE("invalid ratio aggregates across judged distractors") {
    InvalidRatioRow r1;
    r1.ref = {"p1", 0};
    r1.invalid = {{"a", true}, {"b", true}, {"c", false}};
    InvalidRatioRow r2;
    r2.ref = {"p2", 0};
    r2.abstained = true;
    InvalidRatioRow r3;
    r3.ref = {"p3", 0};
    r3.invalid = {{"d", true}, {"e", false}};

    auto summary = aggregate_invalid_ratio({r1, r2, r3});
    CHECK(summary.judged_questions == 2);
    CHECK(summary.abstained == 1);
    CHECK(summary.ratio == doctest::Approx(3.0 / 5.0).epsilon(1e-12));

    auto empty = aggregate_invalid_ratio({});
    CHECK(empty.ratio == 0.0);
    CHECK(empty.judged_questions == 0);
}

TEST_CASE("f1 at k matches hand-computed fixtures") {
    std::vector<std::string> refs = {"alpha", "beta", "gamma"};
    std::vector<std::string> gen = {"alpha", "w1", "w2", "beta", "w3",
                                    "w4",    "w5", "w6", "w7", "w8"};
    // 2 hits, 10 generated, 3 references: p = 1/5, r = 2/3, f1 = 4/13
    CHECK(std::abs(f1_at_k(gen, refs, 10) - 4.0 / 13.0) <= 1e-9);

    // perfect top-k
    CHECK(f1_at_k({"alpha", "beta", "gamma"}, refs, 3) == doctest::Approx(1.0));

    // no hits
    CHECK(f1_at_k({"x", "y"}, refs, 5) == 0.0);

    // fewer distinct candidates than k: precision uses the deduped count
    CHECK(f1_at_k({"alpha", "beta"}, {"alpha", "beta", "gamma", "delta"}, 10) ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("f1 deduplicates case-insensitively before truncation") {
    std::vector<std::string> refs = {"cat", "dog"};
    // raw top-3 would be {fox, Fox, cat}; deduped top-3 is {fox, cat, dog}
    std::vector<std::string> gen = {"fox", "Fox", "cat", "dog"};
    CHECK(f1_at_k(gen, refs, 3) == doctest::Approx(0.8).epsilon(1e-12));

    CHECK(f1_at_k({" Cat ", "CAT"}, {"cat"}, 1) == doctest::Approx(1.0));
    CHECK(f1_at_k({"", "   "}, {"cat"}, 3) == 0.0);

    CHECK_THROWS_AS(f1_at_k({"a"}, {"ref"}, 0), ConfigError);
    CHECK_THROWS_AS(f1_at_k({"a"}, {}, 3), MetricError);
}

TEST_CASE("semantic diversity is one minus the mean pairwise similarity") {
    stubs::TableEmbeddingBackend embedder;
    embedder.set_vector("a", {1.0, 0.0});
    embedder.set_vector("b", {0.0, 1.0});
    embedder.set_vector("c", {1.0, 0.0});
    auto d = semantic_diversity({"a", "b", "c"}, embedder);
    REQUIRE(d.has_value());
    CHECK(*d == doctest::Approx(1.0 - 1.0 / 3.0).epsilon(1e-12));

    CHECK_FALSE(semantic_diversity({"a"}, embedder).has_value());
    CHECK_FALSE(semantic_diversity({}, embedder).has_value());

    // negative cosine clamps to zero
    embedder.set_vector("anti", {-1.0, 0.0});
    auto clamped = semantic_diversity({"a", "anti"}, embedder);
    CHECK(*clamped == doctest::Approx(1.0));
}

TEST_CASE("plausibility is the clamped answer similarity") {
    stubs::TableEmbeddingBackend embedder;
    embedder.set_vector("gold", {1.0, 0.0});
    embedder.set_vector("near", {1.0, 1.0});
    embedder.set_vector("anti", {-1.0, 0.0});
    CHECK(plausibility("near", "gold", embedder) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(plausibility("anti", "gold", embedder) == 0.0);
    CHECK(plausibility("gold", "gold", embedder) == doctest::Approx(1.0));
}

TEST_CASE("overlap stats pair jaccard with mean cross similarity") {
    stubs::TableEmbeddingBackend embedder;
    embedder.set_vector("cat", {1.0, 0.0});
    embedder.set_vector("Dog", {0.0, 1.0});
    embedder.set_vector("dog", {0.0, 1.0});
    embedder.set_vector("fox", {1.0, 0.0});

    auto stats = overlap_stats({"cat", "Dog"}, {"dog", "fox", "cat"}, embedder);
    CHECK(stats.jaccard == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    // pairs: cat-dog 0, cat-fox 1, cat-cat 1, Dog-dog 1, Dog-fox 0, Dog-cat 0
    CHECK(stats.semantic_overlap == doctest::Approx(0.5).epsilon(1e-12));

    auto disjoint = overlap_stats({"cat"}, {"dog"}, embedder);
    CHECK(disjoint.jaccard == 0.0);

    CHECK_THROWS_AS(overlap_stats({}, {"dog"}, embedder), MetricError);
    CHECK_THROWS_AS(overlap_stats({"cat"}, {}, embedder), MetricError);
}

TEST_CASE("duplication rate counts case-insensitive answer copies") {
    CHECK(duplication_rate({"a", "B", "b"}, "b") == doctest::Approx(2.0 / 3.0));
    CHECK(duplication_rate({"x", "y"}, "z") == 0.0);
    CHECK(duplication_rate({"Z"}, "z") == 1.0);
    CHECK_THROWS_AS(duplication_rate({}, "z"), MetricError);
}
