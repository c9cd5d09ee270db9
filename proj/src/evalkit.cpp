#include "clozegen/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "clozegen/templates.hpp"
#include "clozegen/util.hpp"

namespace clozegen::evalkit {

std::string to_string(OptionType t) {
    switch (t) {
        case OptionType::original: return "original";
        case OptionType::easy: return "easy";
        case OptionType::hard: return "hard";
    }
    throw ParseError("unknown option type");
}

std::string to_string(Slot s) {
    switch (s) {
        case Slot::hardest: return "Hardest";
        case Slot::middle: return "Middle";
        case Slot::easiest: return "Easiest";
    }
    throw ParseError("unknown slot");
}

namespace {

double clamped_sts(EmbeddingBackend& embedder, const std::string& a, const std::string& b) {
    double sim = cosine_similarity(embedder.embed(a), embedder.embed(b));
    return std::clamp(sim, 0.0, 1.0);
}

// Matches a judged surface against the known options, case-insensitively.
std::optional<OptionType> match_option(const std::string& surface,
                                       const std::string& original,
                                       const std::string& easy, const std::string& hard) {
    if (iequals(surface, original)) return OptionType::original;
    if (iequals(surface, easy)) return OptionType::easy;
    if (iequals(surface, hard)) return OptionType::hard;
    return std::nullopt;
}

}  // namespace

RelativeDifficultyRow judge_relative_difficulty(JudgeClient& judge,
                                                const corpus::ClozeQuestion& question,
                                                const std::string& original,
                                                const std::string& easy,
                                                const std::string& hard,
                                                const JudgeProtocolConfig& cfg,
                                                std::uint64_t seed) {
    std::vector<std::string> options{question.answer, original, easy, hard};
    for (std::size_t i = 0; i < options.size(); ++i) {
        for (std::size_t j = i + 1; j < options.size(); ++j) {
            if (iequals(options[i], options[j])) {
                throw ConfigError("relative-difficulty options must be distinct: '" +
                                  options[i] + "'");
            }
        }
    }
    ChatPrompt prompt = templates::render_relative_difficulty(
        question.context, options, question.answer, cfg.shots);

    RelativeDifficultyRow row;
    row.ref = corpus::ref_of(question);

    int attempts = std::max(cfg.reasks, 0) + 1;
    for (int a = 0; a < attempts; ++a) {
        std::string response =
            judge.complete(prompt, mix_seed(seed, static_cast<std::uint64_t>(a)));
        auto listed = templates::parse_results_block(response);
        if (!listed || listed->size() != 3) continue;
        std::vector<OptionType> ranking;
        std::set<OptionType> seen;
        bool ok = true;
        for (const auto& surface : *listed) {
            auto type = match_option(surface, original, easy, hard);
            if (!type || !seen.insert(*type).second) {
                ok = false;
                break;
            }
            ranking.push_back(*type);
        }
        if (!ok) continue;
        row.ranking = std::move(ranking);
        return row;
    }
    row.abstained = true;
    return row;
}

RelativeDifficultyTable aggregate_relative_difficulty(
    const std::vector<RelativeDifficultyRow>& rows) {
    RelativeDifficultyTable table;
    std::map<OptionType, std::map<Slot, std::size_t>> counts;
    const std::array<OptionType, 3> types{OptionType::original, OptionType::easy,
                                          OptionType::hard};
    const std::array<Slot, 3> slots{Slot::hardest, Slot::middle, Slot::easiest};
    for (auto t : types) {
        for (auto s : slots) counts[t][s] = 0;
    }

    for (const auto& row : rows) {
        if (row.abstained) {
            ++table.abstained;
            continue;
        }
        if (row.ranking.size() != 3) {
            throw IntegrityError("judged row for " + row.ref.key() +
                                 " does not rank exactly three options");
        }
        ++table.judged;
        for (std::size_t i = 0; i < 3; ++i) counts[row.ranking[i]][slots[i]] += 1;
    }

    for (auto t : types) {
        for (auto s : slots) {
            table.percent[t][s] =
                table.judged == 0
                    ? 0.0
                    : 100.0 * static_cast<double>(counts[t][s]) /
                          static_cast<double>(table.judged);
        }
    }
    return table;
}

std::string RelativeDifficultyTable::render_text() const {
    const std::array<Slot, 3> slots{Slot::hardest, Slot::middle, Slot::easiest};
    const std::array<OptionType, 3> types{OptionType::original, OptionType::easy,
                                          OptionType::hard};
    std::ostringstream os;
    os << "Relative difficulty (% of judged questions)\n";
    os << std::left << std::setw(10) << "";
    for (auto t : types) os << std::right << std::setw(10) << to_string(t);
    os << "\n";
    os << std::fixed << std::setprecision(2);
    for (auto s : slots) {
        os << std::left << std::setw(10) << to_string(s);
        for (auto t : types) {
            os << std::right << std::setw(10) << percent.at(t).at(s);
        }
        os << "\n";
    }
    os << "judged: " << judged << ", abstained: " << abstained << "\n";
    return os.str();
}

InvalidRatioRow judge_invalid_ratio(JudgeClient& judge,
                                    const corpus::ClozeQuestion& question,
                                    const std::vector<std::string>& distractors,
                                    const std::string& answer,
                                    const JudgeProtocolConfig& cfg, std::uint64_t seed) {
    for (const auto& d : distractors) {
        if (iequals(d, answer)) {
            throw ConfigError("invalid-ratio distractors must exclude the answer");
        }
    }
    ChatPrompt prompt =
        templates::render_invalid_ratio(question.context, distractors, answer, cfg.shots);

    InvalidRatioRow row;
    row.ref = corpus::ref_of(question);

    int attempts = std::max(cfg.reasks, 0) + 1;
    for (int a = 0; a < attempts; ++a) {
        std::string response =
            judge.complete(prompt, mix_seed(seed, static_cast<std::uint64_t>(a)));
        auto listed = templates::parse_results_block(response);
        if (!listed) continue;
        std::set<std::string> flagged;
        bool ok = true;
        for (const auto& item : *listed) {
            bool known = false;
            for (const auto& d : distractors) {
                if (iequals(item, d)) {
                    flagged.insert(to_lower_ascii(d));
                    known = true;
                    break;
                }
            }
            if (!known) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        for (const auto& d : distractors) {
            row.invalid.emplace_back(d, flagged.count(to_lower_ascii(d)) > 0);
        }
        return row;
    }
    row.abstained = true;
    return row;
}

InvalidRatioSummary aggregate_invalid_ratio(const std::vector<InvalidRatioRow>& rows) {
    InvalidRatioSummary summary;
    std::size_t invalid = 0;
    std::size_t judged_distractors = 0;
    for (const auto& row : rows) {
        if (row.abstained) {
            ++summary.abstained;
            continue;
        }
        ++summary.judged_questions;
        for (const auto& [surface, is_invalid] : row.invalid) {
            ++judged_distractors;
            invalid += is_invalid ? 1 : 0;
        }
    }
    summary.ratio = judged_distractors == 0
                        ? 0.0
                        : static_cast<double>(invalid) /
                              static_cast<double>(judged_distractors);
    return summary;
}

// ---------------------------------------------------------------------------
// Metrics

double f1_at_k(const std::vector<std::string>& generated,
               const std::vector<std::string>& reference, int k) {
    if (k < 1) throw ConfigError("f1_at_k needs k >= 1");
    if (reference.empty()) throw MetricError("f1_at_k needs a non-empty reference set");

    std::set<std::string> ref_keys;
    for (const auto& r : reference) ref_keys.insert(to_lower_ascii(trim(r)));

    std::vector<std::string> deduped;
    std::set<std::string> seen;
    for (const auto& g : generated) {
        auto key = to_lower_ascii(trim(g));
        if (key.empty()) continue;
        if (seen.insert(key).second) deduped.push_back(key);
    }
    if (deduped.empty()) return 0.0;

    std::size_t cutoff = std::min<std::size_t>(static_cast<std::size_t>(k), deduped.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < cutoff; ++i) {
        if (ref_keys.count(deduped[i])) ++hits;
    }
    if (hits == 0) return 0.0;

    double precision = static_cast<double>(hits) /
                       static_cast<double>(std::min<std::size_t>(
                           static_cast<std::size_t>(k), deduped.size()));
    double recall = static_cast<double>(hits) / static_cast<double>(ref_keys.size());
    return 2.0 * precision * recall / (precision + recall);
}

std::optional<double> semantic_diversity(const std::vector<std::string>& distractors,
                                         EmbeddingBackend& embedder) {
    if (distractors.size() < 2) return std::nullopt;
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < distractors.size(); ++i) {
        for (std::size_t j = i + 1; j < distractors.size(); ++j) {
            acc += clamped_sts(embedder, distractors[i], distractors[j]);
            ++pairs;
        }
    }
    return 1.0 - acc / static_cast<double>(pairs);
}

double plausibility(const std::string& distractor, const std::string& answer,
                    EmbeddingBackend& embedder) {
    return clamped_sts(embedder, distractor, answer);
}

OverlapStats overlap_stats(const std::vector<std::string>& set_a,
                           const std::vector<std::string>& set_b,
                           EmbeddingBackend& embedder) {
    if (set_a.empty() || set_b.empty()) {
        throw MetricError("overlap_stats needs two non-empty sets");
    }
    std::set<std::string> a_keys, b_keys;
    for (const auto& s : set_a) a_keys.insert(to_lower_ascii(trim(s)));
    for (const auto& s : set_b) b_keys.insert(to_lower_ascii(trim(s)));

    std::size_t intersection = 0;
    for (const auto& key : a_keys) intersection += b_keys.count(key);
    std::size_t unioned = a_keys.size() + b_keys.size() - intersection;

    OverlapStats stats;
    stats.jaccard = static_cast<double>(intersection) / static_cast<double>(unioned);

    double acc = 0.0;
    for (const auto& a : set_a) {
        for (const auto& b : set_b) acc += clamped_sts(embedder, a, b);
    }
    stats.semantic_overlap =
        acc / static_cast<double>(set_a.size() * set_b.size());
    return stats;
}

double duplication_rate(const std::vector<std::string>& candidates,
                        const std::string& answer) {
    if (candidates.empty()) {
        throw MetricError("duplication_rate needs a non-empty candidate list");
    }
    std::size_t dup = 0;
    for (const auto& c : candidates) dup += iequals(c, answer) ? 1 : 0;
    return static_cast<double>(dup) / static_cast<double>(candidates.size());
}

}  // namespace clozegen::evalkit
