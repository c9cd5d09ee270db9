#include "clozegen/genkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "clozegen/util.hpp"

namespace clozegen::genkit {

std::string to_string(CandidateSource s) {
    return s == CandidateSource::distractor_generator ? "distractor_generator"
                                                      : "answer_generator_ir";
}

CandidateSource candidate_source_from_string(std::string_view tag) {
    if (tag == "distractor_generator") return CandidateSource::distractor_generator;
    if (tag == "answer_generator_ir") return CandidateSource::answer_generator_ir;
    throw ParseError("unknown candidate source tag: " + std::string(tag));
}

std::size_t blank_word_index(const std::vector<std::string>& words) {
    std::size_t found = words.size();
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (words[i] == kBlankMarker) {
            if (found != words.size()) {
                throw IntegrityError("context has more than one blank marker");
            }
            found = i;
        }
    }
    if (found == words.size()) throw IntegrityError("context has no blank marker");
    return found;
}

WordRange protected_window(const std::vector<std::string>& words, int window) {
    if (window < 0) throw ConfigError("protect window must be >= 0");
    std::size_t idx = blank_word_index(words);
    std::size_t w = static_cast<std::size_t>(window);
    WordRange r;
    r.begin = idx >= w ? idx - w : 0;
    r.end = std::min(words.size(), idx + w + 1);
    return r;
}

std::vector<double> aggregate_attention(
    const std::vector<std::vector<std::vector<double>>>& tensor,
    const std::vector<std::size_t>& position_to_word, std::size_t n_words) {
    std::size_t n_positions = 0;
    for (const auto& layer : tensor) {
        for (const auto& head : layer) n_positions = std::max(n_positions, head.size());
    }
    std::vector<double> per_position(n_positions, 0.0);
    for (const auto& layer : tensor) {
        for (const auto& head : layer) {
            for (std::size_t p = 0; p < head.size(); ++p) per_position[p] += head[p];
        }
    }
    if (position_to_word.empty()) {
        if (n_positions != n_words) {
            throw IntegrityError("attention positions do not align with words and no "
                                 "position-to-word map was given");
        }
        return per_position;
    }
    if (position_to_word.size() != n_positions) {
        throw IntegrityError("position-to-word map length does not match attention positions");
    }
    std::vector<double> per_word(n_words, 0.0);
    for (std::size_t p = 0; p < n_positions; ++p) {
        std::size_t w = position_to_word[p];
        if (w >= n_words) throw IntegrityError("position-to-word map points past the last word");
        per_word[w] += per_position[p];
    }
    return per_word;
}

AttentionProfile attention_profile(GenerationBackend& backend,
                                   const corpus::ClozeQuestion& question,
                                   std::uint64_t seed) {
    if (!backend.supports_attention()) {
        throw CapabilityError("backend '" + backend.name() + "' has no attention scores");
    }
    GenerationRequest req;
    req.context = question.context;
    req.max_candidates = 1;
    req.seed = derive_seed(seed, {"attention", question.passage_id,
                                  std::to_string(question.blank_index)});
    req.want_attention = true;
    GenerationResponse resp = backend.generate(req);
    if (!resp.attention) {
        throw CapabilityError("backend '" + backend.name() +
                              "' did not return attention scores");
    }

    AttentionProfile profile;
    profile.words = split_ws(question.context);
    const RawAttention& att = *resp.attention;
    if (!att.word_scores.empty()) {
        profile.scores = att.word_scores;
    } else if (!att.tensor.empty()) {
        profile.scores = aggregate_attention(att.tensor, att.position_to_word,
                                             profile.words.size());
    } else {
        throw CapabilityError("backend '" + backend.name() +
                              "' returned an empty attention payload");
    }
    if (profile.scores.size() != profile.words.size()) {
        throw IntegrityError("attention score count does not match word count");
    }
    for (double s : profile.scores) {
        if (s < 0.0 || !std::isfinite(s)) {
            throw IntegrityError("attention scores must be finite and non-negative");
        }
    }
    return profile;
}

DeletionPlan plan_deletion(const AttentionProfile& profile, double ratio,
                           std::vector<WordRange> protected_spans) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) {
        throw ConfigError("deletion ratio must lie in [0, 1]");
    }
    if (profile.words.size() != profile.scores.size()) {
        throw IntegrityError("attention profile is misaligned");
    }
    auto is_protected = [&](std::size_t i) {
        for (const auto& span : protected_spans) {
            if (span.contains(i)) return true;
        }
        return false;
    };

    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < profile.words.size(); ++i) {
        if (profile.words[i] == kBlankMarker) continue;
        if (is_protected(i)) continue;
        eligible.push_back(i);
    }

    DeletionPlan plan;
    plan.ratio = ratio;
    plan.protected_spans = std::move(protected_spans);
    if (eligible.empty() && ratio > 0.0) {
        throw ConfigError("no eligible words to delete: protected spans cover the passage");
    }
    plan.n_deleted = static_cast<std::size_t>(
        std::floor(ratio * static_cast<double>(eligible.size())));

    std::stable_sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
        if (profile.scores[a] != profile.scores[b]) {
            return profile.scores[a] > profile.scores[b];
        }
        return a < b;
    });
    plan.deleted_indices.assign(eligible.begin(),
                                eligible.begin() + static_cast<std::ptrdiff_t>(plan.n_deleted));
    std::sort(plan.deleted_indices.begin(), plan.deleted_indices.end());
    return plan;
}

corpus::ClozeQuestion apply_deletion(const corpus::ClozeQuestion& question,
                                     const DeletionPlan& plan) {
    auto words = split_ws(question.context);
    std::set<std::size_t> deleted(plan.deleted_indices.begin(), plan.deleted_indices.end());
    if (!deleted.empty() && *deleted.rbegin() >= words.size()) {
        throw IntegrityError("deletion plan points past the last word");
    }
    std::vector<std::string> kept;
    kept.reserve(words.size() - deleted.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (!deleted.count(i)) kept.push_back(words[i]);
    }
    corpus::ClozeQuestion out = question;
    out.context = join(kept, " ");
    return out;
}

namespace {

GenerationResponse generate_with_retries(GenerationBackend& backend,
                                         const GenerationRequest& req, int max_retries,
                                         const std::vector<DistractorCandidate>& partial) {
    int attempts = std::max(max_retries, 0) + 1;
    std::string last_error;
    for (int a = 0; a < attempts; ++a) {
        try {
            return backend.generate(req);
        } catch (const BackendError& e) {
            last_error = e.what();
        }
    }
    throw CandidateGenerationError(
        "generation failed after " + std::to_string(attempts) + " attempts: " + last_error,
        partial);
}

// Case-insensitive dedup that exempts answer-equal candidates (they carry the
// duplication-rate signal and are flagged instead).
std::vector<DistractorCandidate> dedup_candidates(std::vector<DistractorCandidate> in,
                                                  const std::string& answer) {
    std::set<std::string> seen;
    std::vector<DistractorCandidate> out;
    out.reserve(in.size());
    for (auto& c : in) {
        c.surface = trim(c.surface);
        if (c.surface.empty()) continue;
        if (iequals(c.surface, answer)) {
            c.answer_duplicate = true;
            out.push_back(std::move(c));
            continue;
        }
        auto key = to_lower_ascii(c.surface);
        if (!seen.insert(key).second) continue;
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace

std::vector<DistractorCandidate> generate_via_ir(GenerationBackend& backend,
                                                 const corpus::ClozeQuestion& question,
                                                 const std::vector<double>& ratios,
                                                 const GenOptions& opts,
                                                 std::uint64_t seed) {
    AttentionProfile profile = attention_profile(backend, question, seed);
    WordRange window = protected_window(profile.words, opts.protect_window);

    std::vector<DistractorCandidate> raw;
    for (std::size_t ri = 0; ri < ratios.size(); ++ri) {
        DeletionPlan plan = plan_deletion(profile, ratios[ri], {window});
        corpus::ClozeQuestion pruned = apply_deletion(question, plan);

        GenerationRequest req;
        req.context = pruned.context;
        req.max_candidates = opts.n_per_ratio;
        req.seed = derive_seed(seed, {"ir", question.passage_id,
                                      std::to_string(question.blank_index),
                                      std::to_string(ri)});
        GenerationResponse resp = generate_with_retries(backend, req, opts.max_retries, raw);
        for (auto& surface : resp.candidates) {
            DistractorCandidate c;
            c.surface = std::move(surface);
            c.source = CandidateSource::answer_generator_ir;
            c.deletion_ratio = ratios[ri];
            c.question_ref = corpus::ref_of(question);
            raw.push_back(std::move(c));
        }
    }
    return dedup_candidates(std::move(raw), question.answer);
}

std::vector<DistractorCandidate> generate_via_dg(GenerationBackend& backend,
                                                 const corpus::ClozeQuestion& question,
                                                 int n, int max_retries,
                                                 std::uint64_t seed) {
    GenerationRequest req;
    req.context = question.context;
    req.max_candidates = n;
    req.seed = derive_seed(seed, {"dg", question.passage_id,
                                  std::to_string(question.blank_index)});
    GenerationResponse resp = generate_with_retries(backend, req, max_retries, {});
    std::vector<DistractorCandidate> raw;
    raw.reserve(resp.candidates.size());
    for (auto& surface : resp.candidates) {
        DistractorCandidate c;
        c.surface = std::move(surface);
        c.source = CandidateSource::distractor_generator;
        c.question_ref = corpus::ref_of(question);
        raw.push_back(std::move(c));
    }
    return dedup_candidates(std::move(raw), question.answer);
}

}  // namespace clozegen::genkit
