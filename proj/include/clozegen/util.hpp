#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace clozegen {

inline constexpr std::string_view kToolkitVersion = "0.1.0";

// The canonical blank marker used in every context string, prompt, and
// exported artifact. Corpus loaders normalize whatever the source format
// uses into this token.
inline constexpr std::string_view kBlankMarker = "_____";

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps these onto exit codes (see orchestrator).
// ---------------------------------------------------------------------------

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Backend does not expose a required capability (e.g. attention scores).
class CapabilityError : public BackendError {
public:
    using BackendError::BackendError;
};

class MetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Sample unusable for distribution fitting (constant, too small, ...).
class DegenerateSampleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A required upstream stage artifact is missing.
class DependencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// String helpers
// ---------------------------------------------------------------------------

std::vector<std::string> split_ws(std::string_view text);
std::string join(std::span<const std::string> parts, std::string_view sep);
std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

// Splits `text` into lines, dropping the trailing empty line if the text
// ends with '\n'.
std::vector<std::string> split_lines(std::string_view text);

// Canonical whitespace form: tokens joined by single spaces.
inline std::string normalize_ws(std::string_view text) {
    auto toks = split_ws(text);
    return join(toks, " ");
}

// ---------------------------------------------------------------------------
// Deterministic RNG primitives.
//
// std::uniform_int_distribution and std::shuffle are implementation-defined
// across standard libraries, so everything seeded goes through these
// instead. Semantics are frozen: test oracles re-derive them independently.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t fnv1a64(std::string_view s);

// Folds string parts into a sub-seed of `base`.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::string_view> parts);

// Unbiased draw in [0, bound) by rejection; bound must be >= 1.
std::uint64_t bounded_rand(Rng& rng, std::uint64_t bound);

// Uniform double in [0, 1) with 53 random bits.
double u01(Rng& rng);

// Fisher-Yates: for i = n-1 .. 1, swap(v[i], v[bounded_rand(rng, i+1)]).
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(bounded_rand(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// First k entries of a partial Fisher-Yates pass over 0..n-1, in selection
// order. k must be <= n.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng);

// ---------------------------------------------------------------------------
// Filesystem helpers
// ---------------------------------------------------------------------------

// Writes content to `path` atomically (temp file + rename).
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Bounded parallel map. Results come back in input order regardless of
// completion order; max_threads <= 1 runs inline.
// ---------------------------------------------------------------------------

void parallel_for_each(std::size_t n, std::size_t max_threads,
                       const std::function<void(std::size_t)>& body);

template <typename In, typename Fn>
auto parallel_map(const std::vector<In>& items, std::size_t max_threads, Fn fn)
    -> std::vector<decltype(fn(items.front()))> {
    using Out = decltype(fn(items.front()));
    std::vector<Out> out(items.size());
    parallel_for_each(items.size(), max_threads,
                      [&](std::size_t i) { out[i] = fn(items[i]); });
    return out;
}

}  // namespace clozegen
