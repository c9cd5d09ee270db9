#pragma once

// Converts difficulty-annotated questions into seq2seq multitask training
// examples (DCDG main task, ASDE and DDDE auxiliaries) and training-mix
// streams.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clozegen/corpus.hpp"
#include "clozegen/difficulty.hpp"

namespace clozegen::taskforge {

enum class Task { dcdg, asde, ddde };

std::string to_string(Task t);
Task task_from_string(std::string_view tag);

struct Provenance {
    corpus::QuestionRef question_ref;
    std::string difficulty;  // "easy", "hard", or "" when the task mixes both
    std::uint64_t seed = 0;
};

struct MultitaskExample {
    Task task = Task::dcdg;
    std::string input_text;
    std::string target_text;
    Provenance provenance;
};

// Seeded sampling without replacement (partial Fisher-Yates, selection
// order); the reference sampler oracle in the tests re-derives it.
std::vector<std::string> sample_surfaces(const std::vector<std::string>& pool,
                                         std::size_t k, std::uint64_t seed);

// DCDG: (passage, count, difficulty, answer) -> k sampled distractors.
// Returns nullopt (with reason) when the set holds fewer than k.
std::optional<MultitaskExample> make_dcdg(
    const corpus::ClozeQuestion& question, const std::string& difficulty, int k,
    const difficulty::DifficultyAnnotatedQuestion& annotated, std::uint64_t seed,
    std::string* skip_reason = nullptr);

// ASDE: permuted {answer} + sampled easy + sampled hard options -> per-option
// labels in presentation order. Requested distractor count splits hard =
// floor(n/2), easy = the rest, each clamped to its pool; skips when either
// pool is empty.
std::optional<MultitaskExample> make_asde(
    const corpus::ClozeQuestion& question,
    const difficulty::DifficultyAnnotatedQuestion& annotated, int n_distractors,
    std::uint64_t seed, std::string* skip_reason = nullptr);

// DDDE: one sampled distractor replaces the blank -> (surface, difficulty).
// Skips when no distractor is annotated.
std::optional<MultitaskExample> make_ddde(
    const corpus::ClozeQuestion& question,
    const difficulty::DifficultyAnnotatedQuestion& annotated, std::uint64_t seed,
    std::string* skip_reason = nullptr);

struct TaskMixConfig {
    bool dcdg = true;
    bool asde = true;
    bool ddde = true;
    int dcdg_count = 3;           // requested distractors per DCDG example
    bool dcdg_clamp_count = true; // shrink the request to the set size instead of skipping
    int asde_distractors = 3;
    double asde_fraction = 1.0;   // deterministic per-question inclusion gates
    double ddde_fraction = 1.0;
    double robustness_fraction = 0.0;  // corrupted-passage share, 0 disables
};

struct SkippedExample {
    corpus::QuestionRef question_ref;
    Task task = Task::dcdg;
    std::string reason;
};

struct MixAudit {
    std::map<Task, std::size_t> emitted;
    std::vector<SkippedExample> skipped;
};

// Deterministic example stream: questions in input order, DCDG for both
// difficulties, auxiliaries gated per config. Questions without an
// annotation entry are skipped with an audit record.
std::vector<MultitaskExample> build_training_mix(
    std::span<const corpus::ClozeQuestion> questions,
    const std::map<std::string, difficulty::DifficultyAnnotatedQuestion>& annotations,
    const TaskMixConfig& config, std::uint64_t seed, MixAudit* audit = nullptr);

// Robustness prep: a seeded `passage_fraction` share of questions gets its
// context corrupted by word deletion at a per-question rate drawn uniformly
// from [0, 1); the rest pass through unchanged.
std::vector<corpus::ClozeQuestion> apply_robustness_corruption(
    std::span<const corpus::ClozeQuestion> questions, double passage_fraction,
    std::uint64_t seed);

// JSONL export {schema, task, input, target, provenance...}; the parse
// function round-trips it.
std::string example_to_jsonl_line(const MultitaskExample& e);
MultitaskExample example_from_jsonl_line(const std::string& line);
void write_examples_jsonl(const std::filesystem::path& path,
                          std::span<const MultitaskExample> examples);
std::vector<MultitaskExample> read_examples_jsonl(const std::filesystem::path& path);

}  // namespace clozegen::taskforge
