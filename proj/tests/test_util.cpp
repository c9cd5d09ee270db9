#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <set>

#include "clozegen/util.hpp"
#include "support.hpp"

using namespace clozegen;

TEST_CASE("split_ws and join round-trip canonical text") {
    CHECK(split_ws("  a  b\tc\n") == std::vector<std::string>{"a", "b", "c"});
    CHECK(split_ws("") == std::vector<std::string>{});
    std::vector<std::string> parts = {"a", "b", "c"};
    CHECK(join(parts, " ") == "a b c");
    CHECK(join(parts, "; ") == "a; b; c");
    CHECK(normalize_ws(" x   y \n z ") == "x y z");
}

TEST_CASE("trim, case folding, line splitting") {
    CHECK(trim("  hi \t") == "hi");
    CHECK(trim("") == "");
    CHECK(to_lower_ascii("AbC") == "abc");
    CHECK(iequals("Cat", "cAT"));
    CHECK_FALSE(iequals("cat", "cab"));
    CHECK(split_lines("a\nb\n") == std::vector<std::string>{"a", "b"});
    CHECK(split_lines("a\n\nb") == std::vector<std::string>{"a", "", "b"});
}

TEST_CASE("splitmix64 matches the reference constants") {
    for (std::uint64_t x : {0ULL, 1ULL, 42ULL, 0xDEADBEEFULL}) {
        CHECK(splitmix64(x) == testsupport::ref_splitmix64(x));
    }
}

TEST_CASE("bounded_rand agrees with the rejection oracle and stays in range") {
    Rng a(123);
    std::mt19937_64 b(123);
    for (std::uint64_t bound : {1ULL, 2ULL, 7ULL, 1000ULL, (1ULL << 63) + 5}) {
        for (int i = 0; i < 50; ++i) {
            std::uint64_t got = bounded_rand(a, bound);
            CHECK(got == testsupport::ref_bounded_rand(b, bound));
            CHECK(got < bound);
        }
    }
}

TEST_CASE("u01 lies in [0, 1) and is deterministic per seed") {
    Rng a(7), b(7);
    for (int i = 0; i < 1000; ++i) {
        double x = u01(a);
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        CHECK(x == u01(b));
    }
}

TEST_CASE("shuffle_in_place matches the Fisher-Yates oracle") {
    for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
        std::vector<int> got(20);
        for (int i = 0; i < 20; ++i) got[i] = i;
        std::vector<int> want = got;
        Rng a(seed);
        std::mt19937_64 b(seed);
        shuffle_in_place(got, a);
        testsupport::ref_shuffle(want, b);
        CHECK(got == want);
    }
}

TEST_CASE("sample_indices matches the partial Fisher-Yates oracle") {
    for (std::uint64_t seed : {3ULL, 17ULL}) {
        for (std::size_t k : {0UL, 1UL, 5UL, 10UL}) {
            Rng a(seed);
            std::mt19937_64 b(seed);
            auto got = sample_indices(10, k, a);
            auto want = testsupport::ref_sample_indices(10, k, b);
            CHECK(got == want);
            std::set<std::size_t> uniq(got.begin(), got.end());
            CHECK(uniq.size() == got.size());
        }
    }
    Rng r(1);
    CHECK_THROWS_AS(sample_indices(3, 4, r), ConfigError);
}

TEST_CASE("derive_seed separates part lists") {
    auto s1 = derive_seed(7, {"a", "b"});
    auto s2 = derive_seed(7, {"ab"});
    auto s3 = derive_seed(7, {"a", "b"});
    CHECK(s1 == s3);
    CHECK(s1 != s2);
    CHECK(derive_seed(7, {"a"}) != derive_seed(8, {"a"}));
}

TEST_CASE("atomic_write_file replaces content and creates parents") {
    auto dir = testsupport::fresh_temp_dir("util");
    auto path = dir / "nested" / "file.txt";
    atomic_write_file(path, "one");
    CHECK(read_file(path) == "one");
    atomic_write_file(path, "two");
    CHECK(read_file(path) == "two");
    CHECK_FALSE(std::filesystem::exists(dir / "nested" / "file.txt.tmp"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("parallel_map preserves input order at any thread count") {
    std::vector<int> items(200);
    for (int i = 0; i < 200; ++i) items[i] = i;
    for (std::size_t threads : {1UL, 4UL, 16UL}) {
        auto out = parallel_map(items, threads, [](int x) { return x * x; });
        for (int i = 0; i < 200; ++i) CHECK(out[static_cast<std::size_t>(i)] == i * i);
    }
}

TEST_CASE("parallel_for_each visits every index exactly once") {
    std::vector<std::atomic<int>> counts(500);
    parallel_for_each(500, 8, [&](std::size_t i) { counts[i]++; });
    for (auto& c : counts) CHECK(c.load() == 1);
}
