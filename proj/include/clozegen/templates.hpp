#pragma once

// Versioned text templates: judge prompts (validity filter, relative
// difficulty, invalid ratio) and the seq2seq task formats (DCDG, ASDE, DDDE).
// Rendered prompts are pinned by golden-file tests; bump the version string
// when any byte changes.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "clozegen/backends.hpp"

namespace clozegen::templates {

inline constexpr const char* kJudgeTemplateVersion = "v1";
inline constexpr const char* kTaskTemplateVersion = "v1";

// Separator used when several surfaces are packed into one field.
inline constexpr const char* kListSeparator = "; ";

inline constexpr const char* kLabelAnswer = "answer";
inline constexpr const char* kLabelEasy = "easy";
inline constexpr const char* kLabelHard = "hard";

// ---------------------------------------------------------------------------
// Judge prompt assets

const std::string& validity_filter_system();
const std::string& relative_difficulty_system();
const std::string& invalid_ratio_system();

// Fixed exemplar shots, truncated to `n`.  Contents are pinned by goldens.
std::vector<ChatShot> validity_filter_shots(int n);
std::vector<ChatShot> relative_difficulty_shots(int n);
std::vector<ChatShot> invalid_ratio_shots(int n);

std::string validity_filter_user(const std::string& context,
                                 const std::vector<std::string>& candidates);
std::string relative_difficulty_user(const std::string& context,
                                     const std::vector<std::string>& options,
                                     const std::string& answer);
std::string invalid_ratio_user(const std::string& context,
                               const std::vector<std::string>& distractors,
                               const std::string& answer);

ChatPrompt render_validity_filter(const std::string& context,
                                  const std::vector<std::string>& candidates,
                                  int shots);
ChatPrompt render_relative_difficulty(const std::string& context,
                                      const std::vector<std::string>& options,
                                      const std::string& answer, int shots);
ChatPrompt render_invalid_ratio(const std::string& context,
                                const std::vector<std::string>& distractors,
                                const std::string& answer, int shots);

// Response parsers.  nullopt means the marker block was absent (unparseable);
// an empty vector means the block was present and explicitly empty / "None".
std::optional<std::vector<std::string>> parse_appropriate_candidates(
    const std::string& response);
std::optional<std::vector<std::string>> parse_results_block(
    const std::string& response);

// ---------------------------------------------------------------------------
// Seq2seq task formats

std::string dcdg_input(const std::string& passage, int count,
                       const std::string& difficulty, const std::string& answer);
std::string dcdg_target(const std::vector<std::string>& distractors);
std::optional<std::vector<std::string>> parse_dcdg_target(const std::string& target);

std::string asde_input(const std::string& passage,
                       const std::vector<std::string>& options);
// labeled = (surface, label) pairs in presentation order; label is one of
// kLabelAnswer / kLabelEasy / kLabelHard.
std::string asde_target(
    const std::vector<std::pair<std::string, std::string>>& labeled);
std::optional<std::vector<std::pair<std::string, std::string>>> parse_asde_target(
    const std::string& target);

std::string ddde_input(const std::string& filled_passage);
std::string ddde_target(const std::string& surface, const std::string& difficulty);
std::optional<std::pair<std::string, std::string>> parse_ddde_target(
    const std::string& target);

}  // namespace clozegen::templates
