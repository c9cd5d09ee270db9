#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "clozegen/taskforge.hpp"
#include "clozegen/templates.hpp"
#include "support.hpp"

using namespace clozegen;
using namespace clozegen::taskforge;

namespace {

difficulty::DifficultyAnnotatedQuestion toy_annotation(const corpus::ClozeQuestion& q) {
    difficulty::DifficultyAnnotatedQuestion a;
    a.question_ref = corpus::ref_of(q);
    a.easy = {"bored", "sleepy", "calm"};
    a.hard = {"thrilled", "delighted"};
    a.excluded_middle = {"curious"};
    return a;
}

}  // namespace

TEST_CASE("task tags round-trip and reject junk") {
    for (Task t : {Task::dcdg, Task::asde, Task::ddde}) {
        CHECK(task_from_string(to_string(t)) == t);
    }
    CHECK(to_string(Task::asde) == "ASDE");
    CHECK_THROWS_AS(task_from_string("dcdg"), ParseError);
}

TEST_CASE("sample_surfaces matches the reference sampler") {
    std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f", "g"};
    for (std::uint64_t seed : {1ULL, 77ULL, 900100ULL}) {
        for (std::size_t k : {std::size_t{1}, std::size_t{3}, std::size_t{7}}) {
            auto got = sample_surfaces(pool, k, seed);
            CHECK(got == testsupport::ref_sample_surfaces(pool, k, seed));
        }
    }
    auto all = sample_surfaces(pool, pool.size(), 5);
    CHECK(std::set<std::string>(all.begin(), all.end()) ==
          std::set<std::string>(pool.begin(), pool.end()));
    CHECK_THROWS_AS(sample_surfaces(pool, 8, 1), ConfigError);
}

TEST_CASE("DCDG examples sample the requested set with a derived seed") {
    auto q = testsupport::toy_question();
    auto ann = toy_annotation(q);
    std::string key = corpus::ref_of(q).key();

    auto e = make_dcdg(q, templates::kLabelEasy, 2, ann, 424242);
    REQUIRE(e.has_value());
    CHECK(e->task == Task::dcdg);
    CHECK(e->input_text ==
          templates::dcdg_input(q.context, 2, templates::kLabelEasy, q.answer));

    std::uint64_t sub = derive_seed(424242, {"dcdg", key, templates::kLabelEasy});
    auto want = testsupport::ref_sample_surfaces(ann.easy, 2, sub);
    CHECK(e->target_text == templates::dcdg_target(want));
    auto parsed = templates::parse_dcdg_target(e->target_text);
    REQUIRE(parsed.has_value());
    CHECK(*parsed == want);

    CHECK(e->provenance.question_ref.passage_id == q.passage_id);
    CHECK(e->provenance.difficulty == templates::kLabelEasy);
    CHECK(e->provenance.seed == sub);
}

TEST_CASE("DCDG skips sets smaller than the request and rejects bad counts") {
    auto q = testsupport::toy_question();
    auto ann = toy_annotation(q);
    std::string reason;
    auto e = make_dcdg(q, templates::kLabelHard, 3, ann, 1, &reason);
    CHECK_FALSE(e.has_value());
    CHECK(reason == "only 2 hard distractors for a request of 3");
    CHECK_THROWS_AS(make_dcdg(q, templates::kLabelHard, 0, ann, 1), ConfigError);
    CHECK_THROWS_AS(make_dcdg(q, "medium", 1, ann, 1), ConfigError);
}

TEST_CASE("ASDE permutes answer plus sampled distractors and labels them") {
    auto q = testsupport::toy_question();
    auto ann = toy_annotation(q);
    std::string key = corpus::ref_of(q).key();
    const std::uint64_t seed = 31007;

    auto e = make_asde(q, ann, 3, seed);
    REQUIRE(e.has_value());

    // n=3 -> hard floor(3/2)=1, easy 2
    auto easy = testsupport::ref_sample_surfaces(ann.easy, 2,
                                                 derive_seed(seed, {"asde-easy", key}));
    auto hard = testsupport::ref_sample_surfaces(ann.hard, 1,
                                                 derive_seed(seed, {"asde-hard", key}));
    std::vector<std::pair<std::string, std::string>> labeled;
    labeled.emplace_back(q.answer, templates::kLabelAnswer);
    for (const auto& s : easy) labeled.emplace_back(s, templates::kLabelEasy);
    for (const auto& s : hard) labeled.emplace_back(s, templates::kLabelHard);
    std::uint64_t perm_seed = derive_seed(seed, {"asde-perm", key});
    std::mt19937_64 perm_rng(perm_seed);
    testsupport::ref_shuffle(labeled, perm_rng);

    CHECK(e->target_text == templates::asde_target(labeled));
    std::vector<std::string> options;
    for (const auto& [s, l] : labeled) options.push_back(s);
    CHECK(e->input_text == templates::asde_input(q.context, options));

    auto parsed = templates::parse_asde_target(e->target_text);
    REQUIRE(parsed.has_value());
    CHECK(*parsed == labeled);
    std::size_t n_answer = 0;
    for (const auto& [s, l] : *parsed) n_answer += l == templates::kLabelAnswer;
    CHECK(n_answer == 1);

    CHECK(e->provenance.difficulty == "");
    CHECK(e->provenance.seed == perm_seed);
}

TEST_CASE("ASDE clamps the request to the pools and skips empty ones") {
    auto q = testsupport::toy_question();
    auto ann = toy_annotation(q);

    // n=9 -> want hard 4 clamped to 2, easy 5 clamped to 3
    auto e = make_asde(q, ann, 9, 7);
    REQUIRE(e.has_value());
    auto parsed = templates::parse_asde_target(e->target_text);
    REQUIRE(parsed.has_value());
    CHECK(parsed->size() == 6);

    auto no_hard = ann;
    no_hard.hard.clear();
    std::string reason;
    CHECK_FALSE(make_asde(q, no_hard, 3, 7, &reason).has_value());
    CHECK(reason == "needs at least one easy and one hard distractor");
    CHECK_THROWS_AS(make_asde(q, ann, 1, 7), ConfigError);
}

TEST_CASE("DDDE fills the blank with one annotated distractor") {
    auto q = testsupport::toy_question();
    auto ann = toy_annotation(q);
    std::string key = corpus::ref_of(q).key();
    const std::uint64_t seed = 90210;

    auto e = make_ddde(q, ann, seed);
    REQUIRE(e.has_value());

    std::vector<std::pair<std::string, std::string>> pool;
    for (const auto& s : ann.easy) pool.emplace_back(s, templates::kLabelEasy);
    for (const auto& s : ann.hard) pool.emplace_back(s, templates::kLabelHard);
    std::uint64_t sub = derive_seed(seed, {"ddde", key});
    std::mt19937_64 rng(sub);
    const auto& [surface, label] = pool[testsupport::ref_bounded_rand(rng, pool.size())];

    CHECK(e->target_text == templates::ddde_target(surface, label));
    auto pos = q.context.find(kBlankMarker);
    std::string filled = q.context.substr(0, pos) + surface +
                         q.context.substr(pos + std::string(kBlankMarker).size());
    CHECK(e->input_text == templates::ddde_input(filled));
    CHECK(e->input_text.find(kBlankMarker) == std::string::npos);
    CHECK(e->provenance.difficulty == label);

    auto parsed = templates::parse_ddde_target(e->target_text);
    REQUIRE(parsed.has_value());
    CHECK(parsed->first == surface);

    difficulty::DifficultyAnnotatedQuestion empty_ann;
    empty_ann.question_ref = corpus::ref_of(q);
    std::string reason;
    CHECK_FALSE(make_ddde(q, empty_ann, seed, &reason).has_value());
    CHECK(reason == "no annotated distractors");

    auto broken = q;
    broken.context = "no marker here at all .";
    CHECK_THROWS_AS(make_ddde(broken, ann, seed), IntegrityError);
}

TEST_CASE("the training mix walks questions in order and audits skips") {
    auto questions = testsupport::synthetic_questions(3);
    std::map<std::string, difficulty::DifficultyAnnotatedQuestion> annotations;
    // q0: full annotation; q1: none; q2: empty easy set
    auto a0 = toy_annotation(questions[0]);
    annotations[corpus::ref_of(questions[0]).key()] = a0;
    auto a2 = toy_annotation(questions[2]);
    a2.question_ref = corpus::ref_of(questions[2]);
    a2.easy.clear();
    annotations[corpus::ref_of(questions[2]).key()] = a2;

    TaskMixConfig cfg;
    cfg.dcdg_count = 3;
    MixAudit audit;
    auto mix = build_training_mix(questions, annotations, cfg, 5150, &audit);

    // q0: dcdg easy, dcdg hard (clamped to 2), asde, ddde
    // q2: dcdg easy skipped (empty), dcdg hard, asde skipped (no easy), ddde
    REQUIRE(mix.size() == 6);
    CHECK(mix[0].task == Task::dcdg);
    CHECK(mix[0].provenance.difficulty == templates::kLabelEasy);
    CHECK(mix[1].task == Task::dcdg);
    CHECK(mix[1].provenance.difficulty == templates::kLabelHard);
    CHECK(mix[2].task == Task::asde);
    CHECK(mix[3].task == Task::ddde);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(mix[i].provenance.question_ref.passage_id == questions[0].passage_id);
    }
    CHECK(mix[4].task == Task::dcdg);
    CHECK(mix[4].provenance.difficulty == templates::kLabelHard);
    CHECK(mix[5].task == Task::ddde);

    CHECK(audit.emitted.at(Task::dcdg) == 3);
    CHECK(audit.emitted.at(Task::asde) == 1);
    CHECK(audit.emitted.at(Task::ddde) == 2);
    REQUIRE(audit.skipped.size() == 3);
    CHECK(audit.skipped[0].reason == "no difficulty annotation");
    CHECK(audit.skipped[0].question_ref.passage_id == questions[1].passage_id);
    CHECK(audit.skipped[1].reason == "empty easy set");
    CHECK(audit.skipped[2].task == Task::asde);

    auto rerun = build_training_mix(questions, annotations, cfg, 5150);
    REQUIRE(rerun.size() == mix.size());
    for (std::size_t i = 0; i < mix.size(); ++i) {
        CHECK(rerun[i].input_text == mix[i].input_text);
        CHECK(rerun[i].target_text == mix[i].target_text);
    }
}

TEST_CASE("task switches and fractions prune the mix") {
    auto questions = testsupport::synthetic_questions(1);
    std::map<std::string, difficulty::DifficultyAnnotatedQuestion> annotations;
    annotations[corpus::ref_of(questions[0]).key()] = toy_annotation(questions[0]);

    TaskMixConfig cfg;
    cfg.asde = false;
    cfg.ddde_fraction = 0.0;
    auto mix = build_training_mix(questions, annotations, cfg, 1);
    REQUIRE(mix.size() == 2);
    CHECK(mix[0].task == Task::dcdg);
    CHECK(mix[1].task == Task::dcdg);

    cfg = TaskMixConfig{};
    cfg.dcdg = false;
    cfg.asde_fraction = 1.0;
    cfg.ddde_fraction = 1.0;
    mix = build_training_mix(questions, annotations, cfg, 1);
    REQUIRE(mix.size() == 2);
    CHECK(mix[0].task == Task::asde);
    CHECK(mix[1].task == Task::ddde);
}

TEST_CASE("unclamped DCDG requests skip short sets instead of shrinking") {
    auto questions = testsupport::synthetic_questions(1);
    std::map<std::string, difficulty::DifficultyAnnotatedQuestion> annotations;
    annotations[corpus::ref_of(questions[0]).key()] = toy_annotation(questions[0]);

    TaskMixConfig cfg;
    cfg.dcdg_count = 3;
    cfg.dcdg_clamp_count = false;
    cfg.asde = false;
    cfg.ddde = false;
    MixAudit audit;
    auto mix = build_training_mix(questions, annotations, cfg, 2, &audit);
    REQUIRE(mix.size() == 1);  // easy has 3, hard only 2
    CHECK(mix[0].provenance.difficulty == templates::kLabelEasy);
    REQUIRE(audit.skipped.size() == 1);
    CHECK(audit.skipped[0].reason == "only 2 hard distractors for a request of 3");
}

TEST_CASE("robustness corruption gates per question and stays deterministic") {
    auto questions = testsupport::synthetic_questions(40, 30);

    auto untouched = apply_robustness_corruption(questions, 0.0, 9);
    for (std::size_t i = 0; i < questions.size(); ++i) {
        CHECK(untouched[i].context == questions[i].context);
    }

    auto all = apply_robustness_corruption(questions, 1.0, 9);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < questions.size(); ++i) {
        CHECK(all[i].passage_id == questions[i].passage_id);
        CHECK(all[i].answer == questions[i].answer);
        CHECK(all[i].context.find(kBlankMarker) != std::string::npos);
        auto before = split_ws(questions[i].context);
        auto after = split_ws(all[i].context);
        CHECK(after.size() <= before.size());
        changed += all[i].context != questions[i].context;
    }
    CHECK(changed > questions.size() / 2);

    auto some = apply_robustness_corruption(questions, 0.5, 9);
    std::size_t gated = 0;
    for (std::size_t i = 0; i < questions.size(); ++i) {
        gated += some[i].context != questions[i].context;
    }
    CHECK(gated > 0);
    CHECK(gated < questions.size());

    auto rerun = apply_robustness_corruption(questions, 0.5, 9);
    for (std::size_t i = 0; i < questions.size(); ++i) {
        CHECK(rerun[i].context == some[i].context);
    }

    CHECK_THROWS_AS(apply_robustness_corruption(questions, 1.5, 9), ConfigError);
    CHECK_THROWS_AS(apply_robustness_corruption(questions, -0.1, 9), ConfigError);
}

TEST_CASE("a robustness share inside the mix still emits parseable examples") {
    auto questions = testsupport::synthetic_questions(6, 25);
    std::map<std::string, difficulty::DifficultyAnnotatedQuestion> annotations;
    for (const auto& q : questions) {
        auto a = toy_annotation(q);
        a.question_ref = corpus::ref_of(q);
        annotations[corpus::ref_of(q).key()] = a;
    }
    TaskMixConfig cfg;
    cfg.robustness_fraction = 1.0;
    cfg.asde = false;
    cfg.ddde = false;
    auto mix = build_training_mix(questions, annotations, cfg, 33);
    CHECK(mix.size() == 12);
    for (const auto& e : mix) {
        CHECK(templates::parse_dcdg_target(e.target_text).has_value());
    }
    auto clean_cfg = cfg;
    clean_cfg.robustness_fraction = 0.0;
    auto clean = build_training_mix(questions, annotations, clean_cfg, 33);
    REQUIRE(clean.size() == mix.size());
    bool any_corrupted = false;
    for (std::size_t i = 0; i < mix.size(); ++i) {
        any_corrupted = any_corrupted || mix[i].input_text != clean[i].input_text;
    }
    CHECK(any_corrupted);
    auto again = build_training_mix(questions, annotations, cfg, 33);
    for (std::size_t i = 0; i < mix.size(); ++i) {
        CHECK(again[i].input_text == mix[i].input_text);
    }
}

TEST_CASE("example JSONL round-trips and rejects foreign lines") {
    auto q = testsupport::toy_question();
    auto ann = toy_annotation(q);
    std::vector<MultitaskExample> examples;
    examples.push_back(*make_dcdg(q, templates::kLabelEasy, 2, ann, 7));
    examples.push_back(*make_asde(q, ann, 3, 7));
    examples.push_back(*make_ddde(q, ann, 7));

    auto dir = testsupport::fresh_temp_dir("taskforge-jsonl");
    auto path = dir / "train.jsonl";
    write_examples_jsonl(path, examples);
    auto back = read_examples_jsonl(path);
    REQUIRE(back.size() == examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        CHECK(back[i].task == examples[i].task);
        CHECK(back[i].input_text == examples[i].input_text);
        CHECK(back[i].target_text == examples[i].target_text);
        CHECK(back[i].provenance.question_ref.key() ==
              examples[i].provenance.question_ref.key());
        CHECK(back[i].provenance.difficulty == examples[i].provenance.difficulty);
        CHECK(back[i].provenance.seed == examples[i].provenance.seed);
    }

    std::string line = example_to_jsonl_line(examples[0]);
    CHECK(example_from_jsonl_line(line).task == Task::dcdg);
    CHECK_THROWS_AS(example_from_jsonl_line("{not json"), ParseError);
    CHECK_THROWS_AS(example_from_jsonl_line("{\"schema\":\"other/v1\"}"), ParseError);
    std::filesystem::remove_all(dir);
}
