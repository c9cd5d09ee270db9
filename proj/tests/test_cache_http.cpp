#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "clozegen/cache.hpp"
#include "clozegen/http_backends.hpp"
#include "clozegen/stub_backends.hpp"
#include "support.hpp"

using namespace clozegen;

TEST_CASE("the call cache computes once per key and replays afterwards") {
    auto dir = testsupport::fresh_temp_dir("cache-basic");
    cache::CallCache cache(dir / "cache");

    int computed = 0;
    auto expensive = [&] {
        ++computed;
        return std::string("value-1");
    };

    CHECK(cache.get_or_compute("key-a", expensive) == "value-1");
    CHECK(cache.get_or_compute("key-a", expensive) == "value-1");
    CHECK(computed == 1);
    CHECK(cache.hits() == 1);
    CHECK(cache.misses() == 1);

    CHECK(cache.get_or_compute("key-b", [] { return std::string("value-2"); }) ==
          "value-2");
    CHECK(cache.misses() == 2);

    // a fresh instance over the same directory sees the stored entries
    cache::CallCache warm(dir / "cache");
    int recomputed = 0;
    CHECK(warm.get_or_compute("key-a", [&] {
        ++recomputed;
        return std::string("other");
    }) == "value-1");
    CHECK(recomputed == 0);
    CHECK(warm.hits() == 1);

    std::filesystem::remove_all(dir);
}

TEST_CASE("purging the cache forces recomputation") {
    auto dir = testsupport::fresh_temp_dir("cache-purge");
    cache::CallCache cache(dir / "cache");
    cache.get_or_compute("k1", [] { return std::string("a"); });
    cache.get_or_compute("k2", [] { return std::string("b"); });
    CHECK(cache.purge() == 2);
    CHECK(cache.purge() == 0);

    int computed = 0;
    CHECK(cache.get_or_compute("k1", [&] {
        ++computed;
        return std::string("a2");
    }) == "a2");
    CHECK(computed == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("empty computed values replay as hits too") {
    auto dir = testsupport::fresh_temp_dir("cache-empty");
    cache::CallCache cache(dir / "cache");
    int computed = 0;
    auto compute = [&] {
        ++computed;
        return std::string();
    };
    CHECK(cache.get_or_compute("k", compute).empty());
    CHECK(cache.get_or_compute("k", compute).empty());
    CHECK(computed == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("the cached generation wrapper suppresses repeat backend calls") {
    auto dir = testsupport::fresh_temp_dir("cache-gen");
    cache::CallCache cache(dir / "cache");

    stubs::TableGenerationBackend inner;
    inner.set_attention_capable(true);
    GenerationResponse resp;
    resp.candidates = {"alpha", "beta"};
    RawAttention att;
    att.word_scores = {0.5, 0.0, 1.25};
    resp.attention = att;
    inner.set_default(resp);

    cache::CachedGenerationBackend cached(inner, cache);
    CHECK(cached.supports_attention());
    CHECK(cached.name() == inner.name());

    GenerationRequest req;
    req.context = "a _____ b .";
    req.max_candidates = 2;
    req.seed = 9;
    req.want_attention = true;

    auto first = cached.generate(req);
    auto second = cached.generate(req);
    CHECK(inner.calls() == 1);
    CHECK(second.candidates == first.candidates);
    REQUIRE(second.attention.has_value());
    CHECK(second.attention->word_scores == att.word_scores);

    req.seed = 10;
    cached.generate(req);
    CHECK(inner.calls() == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("the cached judge keys on prompt and seed") {
    auto dir = testsupport::fresh_temp_dir("cache-judge");
    cache::CallCache cache(dir / "cache");
    stubs::ConstantJudgeClient inner("Results: None");
    cache::CachedJudgeClient cached(inner, cache);

    ChatPrompt prompt;
    prompt.system = "sys";
    prompt.shots = {{"u", "a"}};
    prompt.user = "judge this";

    CHECK(cached.complete(prompt, 5) == "Results: None");
    CHECK(cached.complete(prompt, 5) == "Results: None");
    CHECK(inner.calls() == 1);
    cached.complete(prompt, 6);
    CHECK(inner.calls() == 2);
    prompt.user = "judge that";
    cached.complete(prompt, 5);
    CHECK(inner.calls() == 3);
    std::filesystem::remove_all(dir);
}

TEST_CASE("the cached scorer and embedder replay exact vectors") {
    auto dir = testsupport::fresh_temp_dir("cache-score-embed");
    cache::CallCache cache(dir / "cache");

    stubs::HashQaScorer scorer_inner("qa", 3);
    cache::CachedQaScorer scorer(scorer_inner, cache);
    QaRequest req;
    req.context = "the _____ sat .";
    req.options = {"cat", "dog"};
    auto s1 = scorer.score_options(req);
    auto s2 = scorer.score_options(req);
    CHECK(scorer_inner.calls() == 1);
    CHECK(s1 == s2);
    req.options = {"dog", "cat"};
    scorer.score_options(req);
    CHECK(scorer_inner.calls() == 2);

    stubs::HashEmbeddingBackend embed_inner(8, 1);
    cache::CachedEmbeddingBackend embedder(embed_inner, cache);
    auto v1 = embedder.embed("word");
    auto v2 = embedder.embed("word");
    CHECK(embed_inner.calls() == 1);
    CHECK(v1 == v2);
    embedder.embed("other");
    CHECK(embed_inner.calls() == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("the cached grammar client replays findings byte for byte") {
    auto dir = testsupport::fresh_temp_dir("cache-grammar");
    cache::CallCache cache(dir / "cache");
    stubs::WordListGrammarClient inner({"bad"});
    cache::CachedGrammarClient cached(inner, cache);

    auto f1 = cached.check("a bad day");
    auto f2 = cached.check("a bad day");
    REQUIRE(f1.size() == 1);
    REQUIRE(f2.size() == 1);
    CHECK(f2[0].offset == f1[0].offset);
    CHECK(f2[0].length == f1[0].length);
    CHECK(f2[0].rule_id == f1[0].rule_id);
    CHECK(cache.hits() == 1);

    CHECK(cached.check("all fine").empty());
    CHECK(cached.check("all fine").empty());
    CHECK(cache.hits() == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("backends round-trip over the loopback server") {
    stubs::TableGenerationBackend gen;
    gen.set_attention_capable(true);
    GenerationResponse resp;
    resp.candidates = {"one", "two", "three"};
    RawAttention att;
    att.word_scores = {1.0, 0.0, 0.25, 3.5};
    resp.attention = att;
    gen.set_default(resp);

    stubs::ConstantJudgeClient judge("Results: two");
    stubs::TableQaScorer scorer;
    scorer.set_default(0.125);
    scorer.set_score("two", 2.5);
    stubs::TableEmbeddingBackend embedder;
    embedder.set_vector("hello", {0.5, -0.5, 1.0});
    stubs::WordListGrammarClient grammar({"oops"});

    auto server = http::BackendServer::start(
        {&gen, &judge, &scorer, &embedder, &grammar});
    REQUIRE(server.port() > 0);
    http::Endpoint ep;
    ep.port = server.port();

    http::HttpGenerationBackend rgen(ep, "remote-gen", true);
    CHECK(rgen.supports_attention());
    GenerationRequest greq;
    greq.context = "x _____ y .";
    greq.max_candidates = 3;
    greq.seed = 77;
    greq.want_attention = true;
    auto gresp = rgen.generate(greq);
    CHECK(gresp.candidates == resp.candidates);
    REQUIRE(gresp.attention.has_value());
    CHECK(gresp.attention->word_scores == att.word_scores);
    CHECK(gen.calls() == 1);

    http::HttpJudgeClient rjudge(ep, "remote-judge");
    ChatPrompt prompt;
    prompt.system = "s";
    prompt.user = "u";
    CHECK(rjudge.complete(prompt, 5) == "Results: two");

    http::HttpQaScorer rscorer(ep, "remote-qa");
    QaRequest qreq;
    qreq.context = "x _____ y .";
    qreq.options = {"one", "two"};
    auto scores = rscorer.score_options(qreq);
    REQUIRE(scores.size() == 2);
    CHECK(scores[0] == doctest::Approx(0.125));
    CHECK(scores[1] == doctest::Approx(2.5));

    http::HttpEmbeddingBackend rembed(ep, "remote-embed");
    auto vec = rembed.embed("hello");
    REQUIRE(vec.size() == 3);
    CHECK(vec[1] == doctest::Approx(-0.5));

    http::HttpGrammarClient rgrammar(ep, "remote-grammar");
    auto findings = rgrammar.check("well oops indeed");
    REQUIRE(findings.size() == 1);
    CHECK(findings[0].offset == 5);
    CHECK(findings[0].length == 4);
    CHECK(rgrammar.check("all good").empty());

    server.stop();
}

TEST_CASE("clients surface connection failures as backend errors") {
    http::Endpoint dead;
    dead.port = 1;  // nothing listens there
    dead.timeout_seconds = 2;

    http::HttpGenerationBackend gen(dead, "gen", false);
    GenerationRequest req;
    req.context = "x _____ y .";
    CHECK_THROWS_AS(gen.generate(req), BackendError);

    http::HttpJudgeClient judge(dead, "judge");
    ChatPrompt prompt;
    prompt.user = "u";
    CHECK_THROWS_AS(judge.complete(prompt, 1), BackendError);

    http::HttpEmbeddingBackend embed(dead, "embed");
    CHECK_THROWS_AS(embed.embed("text"), BackendError);
}

TEST_CASE("a served backend without a judge rejects judge calls") {
    stubs::TableGenerationBackend gen;
    GenerationResponse resp;
    resp.candidates = {"only"};
    gen.set_default(resp);
    auto server = http::BackendServer::start({.generation = &gen});
    http::Endpoint ep;
    ep.port = server.port();

    http::HttpJudgeClient judge(ep, "judge");
    ChatPrompt prompt;
    prompt.user = "u";
    CHECK_THROWS_AS(judge.complete(prompt, 1), BackendError);

    http::HttpGenerationBackend rgen(ep, "gen", false);
    GenerationRequest req;
    req.context = "x _____ y .";
    CHECK(rgen.generate(req).candidates == std::vector<std::string>{"only"});
    server.stop();
}
