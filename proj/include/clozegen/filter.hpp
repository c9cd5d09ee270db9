#pragma once

// Two-step candidate filtering: a grammar gate on the substituted sentence,
// then repeated judge calls that remove anything the judge would accept as a
// valid answer.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "clozegen/backends.hpp"
#include "clozegen/corpus.hpp"

namespace clozegen::filter {

struct FilterVerdict {
    std::string surface;
    bool grammar_pass = false;
    std::vector<bool> validity_votes;  // one per judge repetition; true = "valid answer"
    bool indeterminate = false;        // judge output unparseable after the re-ask
    bool final_keep = false;
};

struct FilterConfig {
    int repetitions = 3;
    int shots = 2;
    int judge_reasks = 1;       // extra attempts per repetition on unparseable output
    int grammar_retries = 2;    // wire retries before the stage fails
};

// The sentence of `context` containing the blank marker (terminal .!? token
// boundaries), plus the marker's token offset within that sentence.
std::pair<std::string, std::size_t> sentence_around_blank(const std::string& context);

// Substitutes `candidate` for the blank in `sentence`; returns the new text
// and the byte span the candidate occupies.
struct Substitution {
    std::string text;
    std::size_t offset = 0;
    std::size_t length = 0;
};
Substitution substitute_blank(const std::string& sentence, const std::string& candidate);

// Checks each candidate substituted into the blank's sentence; pass means no
// finding overlaps the substituted span. Wire failures retry then rethrow.
std::vector<std::pair<std::string, bool>> grammar_gate(
    GrammarClient& grammar, const corpus::ClozeQuestion& question,
    const std::vector<std::string>& candidates, int retries = 2);

// Runs `repetitions` judge calls over one prompt listing the gold answer and
// the candidates; a candidate is voted "valid" in a repetition when the
// judge's appropriate-candidates block lists it.
std::vector<FilterVerdict> validity_judge(JudgeClient& judge,
                                          const corpus::ClozeQuestion& question,
                                          const std::vector<std::string>& candidates,
                                          const FilterConfig& cfg, std::uint64_t seed);

struct FilterResult {
    std::vector<std::string> kept;  // input order
    std::vector<FilterVerdict> verdicts;  // one per input candidate, input order
};

// Grammar gate then validity judge; keep = grammar pass, zero validity votes,
// not indeterminate, and not the gold answer itself.
FilterResult run_filter(JudgeClient& judge, GrammarClient& grammar,
                        const corpus::ClozeQuestion& question,
                        const std::vector<std::string>& candidates,
                        const FilterConfig& cfg, std::uint64_t seed);

}  // namespace clozegen::filter
