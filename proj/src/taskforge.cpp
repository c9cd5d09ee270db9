#include "clozegen/taskforge.hpp"

#include <algorithm>
#include <utility>

#include <json.hpp>

#include "clozegen/templates.hpp"
#include "clozegen/util.hpp"

namespace clozegen::taskforge {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Task t) {
    switch (t) {
        case Task::dcdg: return "DCDG";
        case Task::asde: return "ASDE";
        case Task::ddde: return "DDDE";
    }
    throw ParseError("unknown task enum value");
}

Task task_from_string(std::string_view tag) {
    if (tag == "DCDG") return Task::dcdg;
    if (tag == "ASDE") return Task::asde;
    if (tag == "DDDE") return Task::ddde;
    throw ParseError("unknown task tag: " + std::string(tag));
}

std::vector<std::string> sample_surfaces(const std::vector<std::string>& pool,
                                         std::size_t k, std::uint64_t seed) {
    if (k > pool.size()) {
        throw ConfigError("cannot sample " + std::to_string(k) + " of " +
                          std::to_string(pool.size()) + " surfaces");
    }
    Rng rng(seed);
    auto indices = sample_indices(pool.size(), k, rng);
    std::vector<std::string> out;
    out.reserve(k);
    for (auto i : indices) out.push_back(pool[i]);
    return out;
}

namespace {

const std::vector<std::string>& set_for(const difficulty::DifficultyAnnotatedQuestion& a,
                                        const std::string& difficulty) {
    if (difficulty == templates::kLabelEasy) return a.easy;
    if (difficulty == templates::kLabelHard) return a.hard;
    throw ConfigError("unknown difficulty label: " + difficulty);
}

void note_skip(std::string* out, const std::string& reason) {
    if (out) *out = reason;
}

}  // namespace

std::optional<MultitaskExample> make_dcdg(
    const corpus::ClozeQuestion& question, const std::string& difficulty, int k,
    const difficulty::DifficultyAnnotatedQuestion& annotated, std::uint64_t seed,
    std::string* skip_reason) {
    if (k < 1) throw ConfigError("DCDG distractor count must be >= 1");
    const auto& pool = set_for(annotated, difficulty);
    if (pool.size() < static_cast<std::size_t>(k)) {
        note_skip(skip_reason, "only " + std::to_string(pool.size()) + " " + difficulty +
                                   " distractors for a request of " + std::to_string(k));
        return std::nullopt;
    }
    std::string key = corpus::ref_of(question).key();
    std::uint64_t sub = derive_seed(seed, {"dcdg", key, difficulty});
    auto sampled = sample_surfaces(pool, static_cast<std::size_t>(k), sub);

    MultitaskExample e;
    e.task = Task::dcdg;
    e.input_text = templates::dcdg_input(question.context, k, difficulty, question.answer);
    e.target_text = templates::dcdg_target(sampled);
    e.provenance = {corpus::ref_of(question), difficulty, sub};
    return e;
}

std::optional<MultitaskExample> make_asde(
    const corpus::ClozeQuestion& question,
    const difficulty::DifficultyAnnotatedQuestion& annotated, int n_distractors,
    std::uint64_t seed, std::string* skip_reason) {
    if (n_distractors < 2) {
        throw ConfigError("ASDE needs at least 2 distractors (one easy, one hard)");
    }
    if (annotated.easy.empty() || annotated.hard.empty()) {
        note_skip(skip_reason, "needs at least one easy and one hard distractor");
        return std::nullopt;
    }
    std::size_t want_hard = static_cast<std::size_t>(n_distractors) / 2;
    std::size_t want_easy = static_cast<std::size_t>(n_distractors) - want_hard;
    std::size_t n_easy = std::min(want_easy, annotated.easy.size());
    std::size_t n_hard = std::min(want_hard, annotated.hard.size());

    std::string key = corpus::ref_of(question).key();
    auto easy = sample_surfaces(annotated.easy, n_easy, derive_seed(seed, {"asde-easy", key}));
    auto hard = sample_surfaces(annotated.hard, n_hard, derive_seed(seed, {"asde-hard", key}));

    std::vector<std::pair<std::string, std::string>> labeled;
    labeled.reserve(1 + n_easy + n_hard);
    labeled.emplace_back(question.answer, templates::kLabelAnswer);
    for (auto& s : easy) labeled.emplace_back(std::move(s), templates::kLabelEasy);
    for (auto& s : hard) labeled.emplace_back(std::move(s), templates::kLabelHard);

    std::uint64_t perm_seed = derive_seed(seed, {"asde-perm", key});
    Rng rng(perm_seed);
    shuffle_in_place(labeled, rng);

    std::vector<std::string> options;
    options.reserve(labeled.size());
    for (const auto& [surface, label] : labeled) options.push_back(surface);

    MultitaskExample e;
    e.task = Task::asde;
    e.input_text = templates::asde_input(question.context, options);
    e.target_text = templates::asde_target(labeled);
    e.provenance = {corpus::ref_of(question), "", perm_seed};
    return e;
}

std::optional<MultitaskExample> make_ddde(
    const corpus::ClozeQuestion& question,
    const difficulty::DifficultyAnnotatedQuestion& annotated, std::uint64_t seed,
    std::string* skip_reason) {
    std::vector<std::pair<std::string, std::string>> pool;
    for (const auto& s : annotated.easy) pool.emplace_back(s, templates::kLabelEasy);
    for (const auto& s : annotated.hard) pool.emplace_back(s, templates::kLabelHard);
    if (pool.empty()) {
        note_skip(skip_reason, "no annotated distractors");
        return std::nullopt;
    }
    std::string key = corpus::ref_of(question).key();
    std::uint64_t sub = derive_seed(seed, {"ddde", key});
    Rng rng(sub);
    const auto& [surface, label] = pool[bounded_rand(rng, pool.size())];

    auto pos = question.context.find(kBlankMarker);
    if (pos == std::string::npos) {
        throw IntegrityError("question context has no blank marker");
    }
    std::string filled = question.context.substr(0, pos) + surface +
                         question.context.substr(pos + std::string(kBlankMarker).size());

    MultitaskExample e;
    e.task = Task::ddde;
    e.input_text = templates::ddde_input(filled);
    e.target_text = templates::ddde_target(surface, label);
    e.provenance = {corpus::ref_of(question), label, sub};
    return e;
}

namespace {

bool fraction_gate(double fraction, std::uint64_t seed) {
    if (fraction >= 1.0) return true;
    if (fraction <= 0.0) return false;
    Rng rng(seed);
    return u01(rng) < fraction;
}

}  // namespace

std::vector<MultitaskExample> build_training_mix(
    std::span<const corpus::ClozeQuestion> questions,
    const std::map<std::string, difficulty::DifficultyAnnotatedQuestion>& annotations,
    const TaskMixConfig& config, std::uint64_t seed, MixAudit* audit) {
    MixAudit local;
    MixAudit& log = audit ? *audit : local;
    log.emitted[Task::dcdg] = 0;
    log.emitted[Task::asde] = 0;
    log.emitted[Task::ddde] = 0;

    std::vector<corpus::ClozeQuestion> prepared;
    if (config.robustness_fraction > 0.0) {
        prepared = apply_robustness_corruption(questions, config.robustness_fraction,
                                               derive_seed(seed, {"mix-robust"}));
    } else {
        prepared.assign(questions.begin(), questions.end());
    }

    std::vector<MultitaskExample> out;
    for (const auto& q : prepared) {
        auto ref = corpus::ref_of(q);
        auto it = annotations.find(ref.key());
        if (it == annotations.end()) {
            log.skipped.push_back({ref, Task::dcdg, "no difficulty annotation"});
            continue;
        }
        const auto& annotated = it->second;

        auto emit = [&](std::optional<MultitaskExample> e, Task task,
                        const std::string& reason) {
            if (e) {
                log.emitted[task] += 1;
                out.push_back(std::move(*e));
            } else {
                log.skipped.push_back({ref, task, reason});
            }
        };

        if (config.dcdg) {
            for (const std::string difficulty :
                 {std::string(templates::kLabelEasy), std::string(templates::kLabelHard)}) {
                const auto& pool = set_for(annotated, difficulty);
                int k = config.dcdg_count;
                if (config.dcdg_clamp_count) {
                    k = std::min<int>(k, static_cast<int>(pool.size()));
                }
                if (k < 1) {
                    log.skipped.push_back({ref, Task::dcdg, "empty " + difficulty + " set"});
                    continue;
                }
                std::string reason;
                emit(make_dcdg(q, difficulty, k, annotated, seed, &reason), Task::dcdg,
                     reason);
            }
        }
        if (config.asde &&
            fraction_gate(config.asde_fraction, derive_seed(seed, {"gate-asde", ref.key()}))) {
            std::string reason;
            emit(make_asde(q, annotated, config.asde_distractors, seed, &reason), Task::asde,
                 reason);
        }
        if (config.ddde &&
            fraction_gate(config.ddde_fraction, derive_seed(seed, {"gate-ddde", ref.key()}))) {
            std::string reason;
            emit(make_ddde(q, annotated, seed, &reason), Task::ddde, reason);
        }
    }
    return out;
}

std::vector<corpus::ClozeQuestion> apply_robustness_corruption(
    std::span<const corpus::ClozeQuestion> questions, double passage_fraction,
    std::uint64_t seed) {
    if (passage_fraction < 0.0 || passage_fraction > 1.0) {
        throw ConfigError("robustness passage fraction must lie in [0, 1]");
    }
    std::vector<corpus::ClozeQuestion> out;
    out.reserve(questions.size());
    for (const auto& q : questions) {
        std::string key = corpus::ref_of(q).key();
        Rng rng(derive_seed(seed, {"robust", key}));
        if (u01(rng) < passage_fraction) {
            double rate = u01(rng);
            out.push_back(corpus::corrupt_for_robustness(
                q, rate, derive_seed(seed, {"robust-del", key})));
        } else {
            out.push_back(q);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSONL export

namespace {
constexpr const char* kExampleSchema = "clozegen/example/v1";
}

std::string example_to_jsonl_line(const MultitaskExample& e) {
    ordered_json j;
    j["schema"] = kExampleSchema;
    j["task"] = to_string(e.task);
    j["input"] = e.input_text;
    j["target"] = e.target_text;
    j["passage_id"] = e.provenance.question_ref.passage_id;
    j["blank_index"] = e.provenance.question_ref.blank_index;
    j["difficulty"] = e.provenance.difficulty;
    j["seed"] = e.provenance.seed;
    return j.dump();
}

MultitaskExample example_from_jsonl_line(const std::string& line) {
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("bad example line: ") + ex.what());
    }
    if (j.value("schema", "") != kExampleSchema) {
        throw ParseError("unexpected example schema: " + j.value("schema", "<missing>"));
    }
    MultitaskExample e;
    e.task = task_from_string(j.at("task").get<std::string>());
    e.input_text = j.at("input").get<std::string>();
    e.target_text = j.at("target").get<std::string>();
    e.provenance.question_ref.passage_id = j.at("passage_id").get<std::string>();
    e.provenance.question_ref.blank_index = j.at("blank_index").get<int>();
    e.provenance.difficulty = j.at("difficulty").get<std::string>();
    e.provenance.seed = j.at("seed").get<std::uint64_t>();
    return e;
}

void write_examples_jsonl(const std::filesystem::path& path,
                          std::span<const MultitaskExample> examples) {
    std::string content;
    for (const auto& e : examples) {
        content += example_to_jsonl_line(e);
        content += '\n';
    }
    atomic_write_file(path, content);
}

std::vector<MultitaskExample> read_examples_jsonl(const std::filesystem::path& path) {
    std::vector<MultitaskExample> out;
    for (const auto& line : split_lines(read_file(path))) {
        if (trim(line).empty()) continue;
        out.push_back(example_from_jsonl_line(line));
    }
    return out;
}

}  // namespace clozegen::taskforge
