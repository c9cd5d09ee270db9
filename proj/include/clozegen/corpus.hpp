#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clozegen/util.hpp"

namespace clozegen::corpus {

struct BlankSlot {
    int blank_index = 0;  // 0-based, ordered by textual position
    std::string answer;
    std::vector<std::string> original_distractors;
};

struct ClozePassage {
    std::string passage_id;
    std::string text;  // whitespace-canonical, one kBlankMarker token per blank
    std::vector<BlankSlot> blanks;
};

// Canonical per-blank view: exactly one blank marker remains, all sibling
// blanks resolved to their gold answers.
struct ClozeQuestion {
    std::string passage_id;
    int blank_index = 0;
    std::string context;
    std::string answer;
    std::vector<std::string> original_distractors;
};

struct QuestionRef {
    std::string passage_id;
    int blank_index = 0;

    auto operator<=>(const QuestionRef&) const = default;
    std::string key() const { return passage_id + "#" + std::to_string(blank_index); }
};

inline QuestionRef ref_of(const ClozeQuestion& q) { return {q.passage_id, q.blank_index}; }

struct FoldAssignment {
    std::string passage_id;
    int fold = 0;
};

enum class CorpusFormat { cloth_json };

CorpusFormat corpus_format_from_string(std::string_view tag);

// Counts kBlankMarker tokens in whitespace-canonical text.
std::size_t count_blank_markers(std::string_view text);

// Throws IntegrityError when a passage violates its invariants.
void validate_passage(const ClozePassage& p);
void validate_question(const ClozeQuestion& q);

// Loads passages from `path` (a directory of *.json files, a .json file
// holding one record or an array of records, or a .jsonl file). Underscore
// runs in the article are normalized to kBlankMarker, whitespace to single
// spaces. Blanks are ordered by textual position.
std::vector<ClozePassage> load_corpus(const std::filesystem::path& path, CorpusFormat format);

// One question per blank; sibling blanks are resolved to their answers.
std::vector<ClozeQuestion> make_questions(const ClozePassage& passage);

// Resolves every blank to its answer. Shared by make_questions and the
// round-trip checks.
std::string resolve_all_blanks(const ClozePassage& passage);

// Deterministic passage-level k-fold partition; fold sizes differ by <= 1.
std::vector<FoldAssignment> assign_folds(std::span<const ClozePassage> passages, int k,
                                         std::uint64_t seed);

// Removes floor(rate * word_count) non-marker words uniformly at random.
// The blank marker itself is never removed.
ClozeQuestion corrupt_for_robustness(const ClozeQuestion& question, double rate,
                                     std::uint64_t seed);

// Canonical JSONL export (stable field order, one question per line).
std::string question_to_jsonl_line(const ClozeQuestion& q);
ClozeQuestion question_from_jsonl_line(const std::string& line);
void write_questions_jsonl(const std::filesystem::path& path,
                           std::span<const ClozeQuestion> questions);
std::vector<ClozeQuestion> read_questions_jsonl(const std::filesystem::path& path);

}  // namespace clozegen::corpus
