#include "clozegen/filter.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "clozegen/templates.hpp"
#include "clozegen/util.hpp"

namespace clozegen::filter {

namespace {

bool ends_sentence(const std::string& token) {
    if (token.empty()) return false;
    char c = token.back();
    return c == '.' || c == '!' || c == '?';
}

}  // namespace

std::pair<std::string, std::size_t> sentence_around_blank(const std::string& context) {
    auto tokens = split_ws(context);
    std::size_t marker = tokens.size();
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == kBlankMarker) {
            marker = i;
            break;
        }
    }
    if (marker == tokens.size()) {
        throw IntegrityError("context has no blank marker");
    }
    std::size_t start = marker;
    while (start > 0 && !ends_sentence(tokens[start - 1])) --start;
    std::size_t end = marker;
    while (end + 1 < tokens.size() && !ends_sentence(tokens[end])) ++end;
    std::vector<std::string> sentence(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(end) + 1);
    return {join(sentence, " "), marker - start};
}

Substitution substitute_blank(const std::string& sentence, const std::string& candidate) {
    auto pos = sentence.find(kBlankMarker);
    if (pos == std::string::npos) {
        throw IntegrityError("sentence has no blank marker");
    }
    Substitution sub;
    sub.text = sentence.substr(0, pos) + candidate +
               sentence.substr(pos + std::string(kBlankMarker).size());
    sub.offset = pos;
    sub.length = candidate.size();
    return sub;
}

std::vector<std::pair<std::string, bool>> grammar_gate(
    GrammarClient& grammar, const corpus::ClozeQuestion& question,
    const std::vector<std::string>& candidates, int retries) {
    auto [sentence, marker_token] = sentence_around_blank(question.context);
    (void)marker_token;

    std::vector<std::pair<std::string, bool>> out;
    out.reserve(candidates.size());
    for (const auto& candidate : candidates) {
        Substitution sub = substitute_blank(sentence, candidate);

        std::vector<GrammarFinding> findings;
        int attempts = std::max(retries, 0) + 1;
        std::string last_error;
        bool ok = false;
        for (int a = 0; a < attempts && !ok; ++a) {
            try {
                findings = grammar.check(sub.text);
                ok = true;
            } catch (const BackendError& e) {
                last_error = e.what();
            }
        }
        if (!ok) {
            throw BackendError("grammar check failed after " + std::to_string(attempts) +
                               " attempts: " + last_error);
        }

        bool pass = true;
        for (const auto& f : findings) {
            bool overlaps = f.offset < sub.offset + sub.length &&
                            f.offset + f.length > sub.offset;
            if (overlaps) {
                pass = false;
                break;
            }
        }
        out.emplace_back(candidate, pass);
    }
    return out;
}

namespace {

// One parsed judge repetition: lowercased surfaces the judge listed as
// appropriate, or nullopt when the output stayed unparseable after re-asks.
std::optional<std::set<std::string>> one_repetition(JudgeClient& judge,
                                                    const ChatPrompt& prompt,
                                                    std::uint64_t seed, int reasks) {
    int attempts = std::max(reasks, 0) + 1;
    for (int a = 0; a < attempts; ++a) {
        std::string response = judge.complete(
            prompt, mix_seed(seed, static_cast<std::uint64_t>(a)));
        auto listed = templates::parse_appropriate_candidates(response);
        if (!listed) continue;
        std::set<std::string> keys;
        for (const auto& item : *listed) keys.insert(to_lower_ascii(trim(item)));
        return keys;
    }
    return std::nullopt;
}

}  // namespace

std::vector<FilterVerdict> validity_judge(JudgeClient& judge,
                                          const corpus::ClozeQuestion& question,
                                          const std::vector<std::string>& candidates,
                                          const FilterConfig& cfg, std::uint64_t seed) {
    if (cfg.repetitions < 1) throw ConfigError("filter repetitions must be >= 1");

    // Prompt lists the gold answer first, then each distinct candidate.
    std::vector<std::string> prompt_list{question.answer};
    std::set<std::string> seen{to_lower_ascii(question.answer)};
    for (const auto& c : candidates) {
        if (seen.insert(to_lower_ascii(c)).second) prompt_list.push_back(c);
    }
    ChatPrompt prompt =
        templates::render_validity_filter(question.context, prompt_list, cfg.shots);

    std::vector<FilterVerdict> verdicts(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        verdicts[i].surface = candidates[i];
        verdicts[i].grammar_pass = true;
    }

    std::string qkey = corpus::ref_of(question).key();
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
        auto rep_seed = derive_seed(seed, {"validity", qkey, std::to_string(rep)});
        auto listed = one_repetition(judge, prompt, rep_seed, cfg.judge_reasks);
        for (auto& v : verdicts) {
            if (!listed) {
                v.indeterminate = true;
            } else {
                v.validity_votes.push_back(listed->count(to_lower_ascii(v.surface)) > 0);
            }
        }
    }

    for (auto& v : verdicts) {
        bool any_valid_vote = std::any_of(v.validity_votes.begin(), v.validity_votes.end(),
                                          [](bool b) { return b; });
        v.final_keep = !v.indeterminate && !any_valid_vote &&
                       !iequals(v.surface, question.answer);
    }
    return verdicts;
}

FilterResult run_filter(JudgeClient& judge, GrammarClient& grammar,
                        const corpus::ClozeQuestion& question,
                        const std::vector<std::string>& candidates,
                        const FilterConfig& cfg, std::uint64_t seed) {
    FilterResult result;
    if (candidates.empty()) return result;

    auto grammar_marks = grammar_gate(grammar, question, candidates, cfg.grammar_retries);
    std::vector<std::string> survivors;
    for (const auto& [surface, pass] : grammar_marks) {
        if (pass) survivors.push_back(surface);
    }

    std::vector<FilterVerdict> judged;
    if (!survivors.empty()) {
        judged = validity_judge(judge, question, survivors, cfg, seed);
    }

    // Stitch the full per-input log back together in input order. Duplicate
    // surfaces share the verdict of their first judged occurrence.
    std::map<std::string, const FilterVerdict*> by_surface;
    for (const auto& v : judged) by_surface.emplace(v.surface, &v);

    result.verdicts.reserve(candidates.size());
    for (const auto& [surface, pass] : grammar_marks) {
        FilterVerdict v;
        v.surface = surface;
        v.grammar_pass = pass;
        if (pass) {
            const FilterVerdict& j = *by_surface.at(surface);
            v.validity_votes = j.validity_votes;
            v.indeterminate = j.indeterminate;
            v.final_keep = j.final_keep;
        }
        if (v.final_keep) result.kept.push_back(surface);
        result.verdicts.push_back(std::move(v));
    }
    return result;
}

}  // namespace clozegen::filter
