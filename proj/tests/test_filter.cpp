#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "clozegen/filter.hpp"
#include "clozegen/stub_backends.hpp"
#include "support.hpp"

using namespace clozegen;
using namespace clozegen::filter;

TEST_CASE("sentence_around_blank isolates the marker's sentence") {
    auto q = testsupport::toy_question();
    auto [sentence, offset] = sentence_around_blank(q.context);
    CHECK(sentence == "Visitors were _____ to see the ancient murals inside .");
    CHECK(split_ws(sentence)[offset] == kBlankMarker);

    auto [s2, o2] = sentence_around_blank("_____ starts the text . Then more .");
    CHECK(s2 == "_____ starts the text .");
    CHECK(o2 == 0);

    auto [s3, o3] = sentence_around_blank("No terminal punctuation here _____ at all");
    CHECK(s3 == "No terminal punctuation here _____ at all");
    CHECK(o3 == 4);

    CHECK_THROWS_AS(sentence_around_blank("no marker . here ."), IntegrityError);
}

TEST_CASE("substitute_blank reports the exact byte span") {
    auto sub = substitute_blank("Visitors were _____ to see it .", "amazed");
    CHECK(sub.text == "Visitors were amazed to see it .");
    CHECK(sub.text.substr(sub.offset, sub.length) == "amazed");
    sub = substitute_blank("_____ leads", "Who");
    CHECK(sub.text == "Who leads");
    CHECK(sub.offset == 0);
    CHECK(sub.length == 3);
}

TEST_CASE("grammar gate passes unless a finding overlaps the substituted span") {
    auto q = testsupport::toy_question();
    // "murals" sits in the blank's sentence but outside the substituted span;
    // a finding on it must not reject the candidate.
    stubs::WordListGrammarClient flag_murals({"murals"});
    auto verdicts = grammar_gate(flag_murals, q, {"amazed", "bored"});
    REQUIRE(verdicts.size() == 2);
    CHECK(verdicts[0].second);
    CHECK(verdicts[1].second);

    // A finding on the candidate itself overlaps the span and rejects it.
    stubs::WordListGrammarClient flag_candidate({"amazed"});
    verdicts = grammar_gate(flag_candidate, q, {"amazed", "bored"});
    CHECK_FALSE(verdicts[0].second);
    CHECK(verdicts[1].second);
}

TEST_CASE("validity votes are per repetition and any vote removes") {
    auto q = testsupport::toy_question();
    FilterConfig cfg;
    cfg.repetitions = 3;

    // Rep 1 accepts "bored", reps 2..3 accept nothing.
    stubs::SequenceJudgeClient judge({
        "thinking\n\nAppropriate candidates:\nbored\n",
        "thinking\n\nAppropriate candidates: None\n",
        "thinking\n\nAppropriate candidates: None\n",
    });
    auto verdicts = validity_judge(judge, q, {"bored", "unable"}, cfg, 7);
    REQUIRE(verdicts.size() == 2);
    CHECK(verdicts[0].surface == "bored");
    CHECK(verdicts[0].validity_votes == std::vector<bool>{true, false, false});
    CHECK_FALSE(verdicts[0].final_keep);
    CHECK(verdicts[1].validity_votes == std::vector<bool>{false, false, false});
    CHECK(verdicts[1].final_keep);
}

TEST_CASE("unparseable judge output is re-asked then marked indeterminate") {
    auto q = testsupport::toy_question();
    FilterConfig cfg;
    cfg.repetitions = 1;
    cfg.judge_reasks = 1;

    stubs::SequenceJudgeClient recovers({
        "no marker at all",
        "Appropriate candidates: None\n",
    });
    auto verdicts = validity_judge(recovers, q, {"bored"}, cfg, 7);
    REQUIRE(verdicts.size() == 1);
    CHECK_FALSE(verdicts[0].indeterminate);
    CHECK(verdicts[0].final_keep);

    stubs::ConstantJudgeClient never_parses("still no marker");
    verdicts = validity_judge(never_parses, q, {"bored"}, cfg, 7);
    REQUIRE(verdicts.size() == 1);
    CHECK(verdicts[0].indeterminate);
    CHECK_FALSE(verdicts[0].final_keep);
}

TEST_CASE("the gold answer is filtered structurally, never kept") {
    auto q = testsupport::toy_question();
    FilterConfig cfg;
    // Judge accepts nothing, grammar accepts everything: only the structural
    // answer rule can remove the answer.
    stubs::ConstantJudgeClient judge("Appropriate candidates: None\n");
    stubs::PermissiveGrammarClient grammar;
    auto result = run_filter(judge, grammar, q, {"Excited", "bored", q.answer}, cfg, 3);
    REQUIRE(result.verdicts.size() == 3);
    for (const auto& v : result.verdicts) {
        if (iequals(v.surface, q.answer)) {
            CHECK_FALSE(v.final_keep);
        } else {
            CHECK(v.final_keep);
        }
    }
    CHECK(result.kept == std::vector<std::string>{"bored"});
}

TEST_CASE("run_filter preserves audit cardinality and input order") {
    auto q = testsupport::toy_question();
    FilterConfig cfg;
    stubs::HashValidityJudge judge(30, 42);
    stubs::WordListGrammarClient grammar({"zzglitch"});
    std::vector<std::string> candidates = {"alpha", "zzglitch", "beta", "alpha", "gamma"};
    auto result = run_filter(judge, grammar, q, candidates, cfg, 3);
    REQUIRE(result.verdicts.size() == candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
        CHECK(result.verdicts[i].surface == candidates[i]);
    CHECK_FALSE(result.verdicts[1].grammar_pass);
    CHECK_FALSE(result.verdicts[1].final_keep);
    // duplicate inputs share one verdict
    CHECK(result.verdicts[0].final_keep == result.verdicts[3].final_keep);
    // kept comes back in input order and only from grammar+judge survivors
    std::set<std::string> kept_set(result.kept.begin(), result.kept.end());
    for (const auto& v : result.verdicts) {
        CHECK(kept_set.count(v.surface) == (v.final_keep ? 1U : 0U));
    }
}

TEST_CASE("grammar wire failures retry then surface as BackendError") {
    class FlakyGrammar : public GrammarClient {
    public:
        explicit FlakyGrammar(int fail_first) : remaining_(fail_first) {}
        std::vector<GrammarFinding> check(const std::string&) override {
            if (remaining_-- > 0) throw BackendError("transient");
            return {};
        }
        std::string name() const override { return "flaky"; }

    private:
        int remaining_;
    };
    auto q = testsupport::toy_question();
    FlakyGrammar recovers(2);
    auto verdicts = grammar_gate(recovers, q, {"alpha"}, 2);
    CHECK(verdicts[0].second);

    FlakyGrammar hopeless(100);
    CHECK_THROWS_AS(grammar_gate(hopeless, q, {"alpha"}, 2), BackendError);
}
