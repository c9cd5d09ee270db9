#include "clozegen/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "clozegen/difficulty.hpp"
#include "clozegen/genkit.hpp"
#include "clozegen/stub_backends.hpp"
#include "clozegen/sha256.hpp"
#include "clozegen/templates.hpp"
#include "clozegen/wire.hpp"

namespace clozegen::orchestrator {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kConfigSchema = "clozegen/config/v1";
constexpr const char* kManifestSchema = "clozegen/manifest/v1";

const std::set<std::string> kTopLevelKeys = {
    "schema",    "seed",     "corpus",   "run_dir",   "cache_dir", "folds",
    "generation", "filter",  "cluster",  "tasks",     "evaluate",  "concurrency",
    "templates", "backends",
};

double get_number(const ordered_json& j, const std::string& key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw ConfigError("config key '" + key + "' must be a number");
    return j.at(key).get<double>();
}

int get_int(const ordered_json& j, const std::string& key, int fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number_integer())
        throw ConfigError("config key '" + key + "' must be an integer");
    return j.at(key).get<int>();
}

bool get_bool(const ordered_json& j, const std::string& key, bool fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_boolean()) throw ConfigError("config key '" + key + "' must be a boolean");
    return j.at(key).get<bool>();
}

std::string get_string(const ordered_json& j, const std::string& key,
                       const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_string()) throw ConfigError("config key '" + key + "' must be a string");
    return j.at(key).get<std::string>();
}

http::Endpoint endpoint_from_json(const ordered_json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config key '" + where + "' must be an object");
    http::Endpoint ep;
    ep.host = get_string(j, "host", ep.host);
    int port = get_int(j, "port", 0);
    if (port <= 0 || port > 65535)
        throw ConfigError("config key '" + where + ".port' must be in [1, 65535]");
    ep.port = port;
    ep.timeout_seconds = get_int(j, "timeout_seconds", ep.timeout_seconds);
    return ep;
}

GeneratorSpec generator_spec_from_json(const ordered_json& j, const std::string& where) {
    GeneratorSpec spec;
    spec.tag = get_string(j, "tag", "");
    if (spec.tag.empty()) throw ConfigError("config key '" + where + ".tag' is required");
    if (j.contains("trained_on_fold")) {
        if (!j.at("trained_on_fold").is_number_integer())
            throw ConfigError("config key '" + where + ".trained_on_fold' must be an integer");
        spec.trained_on_fold = j.at("trained_on_fold").get<int>();
    }
    spec.attention_capable = get_bool(j, "attention", false);
    if (j.contains("host") || j.contains("port")) spec.endpoint = endpoint_from_json(j, where);
    return spec;
}

std::string format_ms(double ms) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(1);
    os << ms;
    return os.str();
}

// One generated candidate as persisted in candidates.jsonl.
struct CandidateRecord {
    std::string passage_id;
    int blank_index = 0;
    std::string surface;
    genkit::CandidateSource source = genkit::CandidateSource::distractor_generator;
    std::optional<double> deletion_ratio;
    bool answer_duplicate = false;

    std::string key() const { return passage_id + "#" + std::to_string(blank_index); }
};

ordered_json candidate_to_json(const CandidateRecord& c) {
    ordered_json j;
    j["schema"] = "clozegen/candidate/v1";
    j["passage_id"] = c.passage_id;
    j["blank_index"] = c.blank_index;
    j["surface"] = c.surface;
    j["source"] = genkit::to_string(c.source);
    if (c.deletion_ratio)
        j["deletion_ratio"] = *c.deletion_ratio;
    else
        j["deletion_ratio"] = nullptr;
    j["answer_duplicate"] = c.answer_duplicate;
    return j;
}

CandidateRecord candidate_from_json(const ordered_json& j) {
    CandidateRecord c;
    c.passage_id = j.at("passage_id").get<std::string>();
    c.blank_index = j.at("blank_index").get<int>();
    c.surface = j.at("surface").get<std::string>();
    c.source = genkit::candidate_source_from_string(j.at("source").get<std::string>());
    if (j.contains("deletion_ratio") && !j.at("deletion_ratio").is_null())
        c.deletion_ratio = j.at("deletion_ratio").get<double>();
    c.answer_duplicate = j.at("answer_duplicate").get<bool>();
    return c;
}

std::string dump_jsonl(const std::vector<ordered_json>& rows) {
    std::string out;
    for (const auto& row : rows) {
        out += row.dump();
        out += '\n';
    }
    return out;
}

std::vector<ordered_json> parse_jsonl(const std::string& text, const std::string& what) {
    std::vector<ordered_json> rows;
    for (const auto& line : split_lines(text)) {
        if (trim(line).empty()) continue;
        rows.push_back(wire::parse_json(line, what));
    }
    return rows;
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

PipelineConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    ordered_json j;
    try {
        j = wire::parse_json(read_file(path), "config");
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!kTopLevelKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
    }
    if (get_string(j, "schema", "") != kConfigSchema)
        throw ConfigError(std::string("config schema must be '") + kConfigSchema + "'");

    PipelineConfig cfg;
    if (!j.contains("seed"))
        throw ConfigError("config key 'seed' is required; every run seed is explicit");
    if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
        throw ConfigError("config key 'seed' must be a non-negative integer");
    cfg.seed = j.at("seed").get<std::uint64_t>();

    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    auto resolve = [&](const std::string& p) {
        fs::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    if (!j.contains("corpus") || !j.at("corpus").is_object())
        throw ConfigError("config key 'corpus' must be an object with 'path'");
    const auto& corpus_j = j.at("corpus");
    std::string corpus_path = get_string(corpus_j, "path", "");
    if (corpus_path.empty()) throw ConfigError("config key 'corpus.path' is required");
    cfg.corpus_path = resolve(corpus_path);
    cfg.corpus_format =
        corpus::corpus_format_from_string(get_string(corpus_j, "format", "cloth_json"));

    std::string run_dir = get_string(j, "run_dir", "");
    if (run_dir.empty()) throw ConfigError("config key 'run_dir' is required");
    cfg.run_dir = resolve(run_dir);
    cfg.cache_dir = j.contains("cache_dir") ? resolve(get_string(j, "cache_dir", ""))
                                            : cfg.run_dir / "cache";

    cfg.folds = get_int(j, "folds", cfg.folds);
    if (cfg.folds < 1) throw ConfigError("config key 'folds' must be >= 1");

    if (j.contains("generation")) {
        const auto& g = j.at("generation");
        if (g.contains("deletion_ratios")) {
            if (!g.at("deletion_ratios").is_array() || g.at("deletion_ratios").empty())
                throw ConfigError("config key 'generation.deletion_ratios' must be a non-empty array");
            cfg.deletion_ratios.clear();
            for (const auto& r : g.at("deletion_ratios")) {
                if (!r.is_number()) throw ConfigError("deletion ratios must be numbers");
                cfg.deletion_ratios.push_back(r.get<double>());
            }
        }
        cfg.protect_window = get_int(g, "protect_window", cfg.protect_window);
        cfg.n_per_ratio = get_int(g, "n_per_ratio", cfg.n_per_ratio);
        cfg.dg_candidates = get_int(g, "dg_candidates", cfg.dg_candidates);
    }
    for (double r : cfg.deletion_ratios) {
        if (!(r >= 0.0 && r <= 1.0))
            throw ConfigError("config key 'generation.deletion_ratios' entries must lie in [0, 1]");
    }
    if (cfg.protect_window < 0) throw ConfigError("config key 'generation.protect_window' must be >= 0");
    if (cfg.n_per_ratio < 1) throw ConfigError("config key 'generation.n_per_ratio' must be >= 1");
    if (cfg.dg_candidates < 1) throw ConfigError("config key 'generation.dg_candidates' must be >= 1");

    if (j.contains("filter")) {
        const auto& f = j.at("filter");
        cfg.filter_cfg.repetitions = get_int(f, "repetitions", cfg.filter_cfg.repetitions);
        cfg.filter_cfg.shots = get_int(f, "shots", cfg.filter_cfg.shots);
        cfg.filter_cfg.judge_reasks = get_int(f, "judge_reasks", cfg.filter_cfg.judge_reasks);
        cfg.filter_cfg.grammar_retries = get_int(f, "grammar_retries", cfg.filter_cfg.grammar_retries);
    }
    if (cfg.filter_cfg.repetitions < 1) throw ConfigError("config key 'filter.repetitions' must be >= 1");
    if (cfg.filter_cfg.shots < 0) throw ConfigError("config key 'filter.shots' must be >= 0");
    if (cfg.filter_cfg.judge_reasks < 0) throw ConfigError("config key 'filter.judge_reasks' must be >= 0");
    if (cfg.filter_cfg.grammar_retries < 0)
        throw ConfigError("config key 'filter.grammar_retries' must be >= 0");

    if (j.contains("cluster")) {
        const auto& c = j.at("cluster");
        cfg.sts_threshold = get_number(c, "sts_threshold", cfg.sts_threshold);
        int cap = get_int(c, "max_per_set", static_cast<int>(cfg.max_per_set));
        if (cap < 1) throw ConfigError("config key 'cluster.max_per_set' must be >= 1");
        cfg.max_per_set = static_cast<std::size_t>(cap);
        if (c.contains("scorers")) {
            if (!c.at("scorers").is_array() || c.at("scorers").empty())
                throw ConfigError("config key 'cluster.scorers' must be a non-empty array");
            cfg.scorer_tags.clear();
            for (const auto& s : c.at("scorers")) {
                if (!s.is_string()) throw ConfigError("scorer tags must be strings");
                cfg.scorer_tags.push_back(s.get<std::string>());
            }
        }
    }
    if (!(cfg.sts_threshold >= 0.0 && cfg.sts_threshold <= 1.0))
        throw ConfigError("config key 'cluster.sts_threshold' must lie in [0, 1]");
    {
        std::set<std::string> uniq(cfg.scorer_tags.begin(), cfg.scorer_tags.end());
        if (uniq.size() != cfg.scorer_tags.size())
            throw ConfigError("config key 'cluster.scorers' has duplicate tags");
    }

    if (j.contains("tasks")) {
        const auto& t = j.at("tasks");
        cfg.mix.dcdg = get_bool(t, "dcdg", cfg.mix.dcdg);
        cfg.mix.asde = get_bool(t, "asde", cfg.mix.asde);
        cfg.mix.ddde = get_bool(t, "ddde", cfg.mix.ddde);
        cfg.mix.dcdg_count = get_int(t, "dcdg_count", cfg.mix.dcdg_count);
        cfg.mix.dcdg_clamp_count = get_bool(t, "dcdg_clamp_count", cfg.mix.dcdg_clamp_count);
        cfg.mix.asde_distractors = get_int(t, "asde_distractors", cfg.mix.asde_distractors);
        cfg.mix.asde_fraction = get_number(t, "asde_fraction", cfg.mix.asde_fraction);
        cfg.mix.ddde_fraction = get_number(t, "ddde_fraction", cfg.mix.ddde_fraction);
        cfg.mix.robustness_fraction =
            get_number(t, "robustness_fraction", cfg.mix.robustness_fraction);
    }
    if (cfg.mix.dcdg_count < 1) throw ConfigError("config key 'tasks.dcdg_count' must be >= 1");
    if (cfg.mix.asde_distractors < 2)
        throw ConfigError("config key 'tasks.asde_distractors' must be >= 2");
    for (auto [name, frac] : {std::pair<const char*, double>{"asde_fraction", cfg.mix.asde_fraction},
                              {"ddde_fraction", cfg.mix.ddde_fraction},
                              {"robustness_fraction", cfg.mix.robustness_fraction}}) {
        if (!(frac >= 0.0 && frac <= 1.0))
            throw ConfigError(std::string("config key 'tasks.") + name + "' must lie in [0, 1]");
    }

    if (j.contains("evaluate")) {
        const auto& e = j.at("evaluate");
        cfg.judge_cfg.shots = get_int(e, "shots", cfg.judge_cfg.shots);
        cfg.judge_cfg.reasks = get_int(e, "reasks", cfg.judge_cfg.reasks);
        int maxq = get_int(e, "max_questions", static_cast<int>(cfg.eval_max_questions));
        if (maxq < 0) throw ConfigError("config key 'evaluate.max_questions' must be >= 0");
        cfg.eval_max_questions = static_cast<std::size_t>(maxq);
        cfg.f1_k = get_int(e, "f1_k", cfg.f1_k);
    }
    if (cfg.judge_cfg.shots < 0) throw ConfigError("config key 'evaluate.shots' must be >= 0");
    if (cfg.judge_cfg.reasks < 0) throw ConfigError("config key 'evaluate.reasks' must be >= 0");
    if (cfg.f1_k < 1) throw ConfigError("config key 'evaluate.f1_k' must be >= 1");

    int conc = get_int(j, "concurrency", static_cast<int>(cfg.concurrency));
    if (conc < 1) throw ConfigError("config key 'concurrency' must be >= 1");
    cfg.concurrency = static_cast<std::size_t>(conc);

    if (j.contains("templates")) {
        const auto& t = j.at("templates");
        cfg.task_template_version = get_string(t, "task_version", cfg.task_template_version);
        cfg.judge_template_version = get_string(t, "judge_version", cfg.judge_template_version);
    }
    if (cfg.task_template_version != templates::kTaskTemplateVersion)
        throw ConfigError("unknown task template version '" + cfg.task_template_version + "'");
    if (cfg.judge_template_version != templates::kJudgeTemplateVersion)
        throw ConfigError("unknown judge template version '" + cfg.judge_template_version + "'");

    if (j.contains("backends")) {
        const auto& b = j.at("backends");
        cfg.backend_mode = get_string(b, "mode", cfg.backend_mode);
        if (b.contains("stub")) {
            const auto& s = b.at("stub");
            cfg.stub_validity_percent = get_int(s, "validity_percent", cfg.stub_validity_percent);
            cfg.stub_invalid_percent = get_int(s, "invalid_percent", cfg.stub_invalid_percent);
        }
        if (b.contains("fold_routing")) {
            if (!b.at("fold_routing").is_object())
                throw ConfigError("config key 'backends.fold_routing' must map fold -> generator tag");
            for (const auto& [fold_key, tag] : b.at("fold_routing").items()) {
                if (!tag.is_string())
                    throw ConfigError("config key 'backends.fold_routing' values must be tags");
                std::size_t pos = 0;
                int fold = 0;
                try {
                    fold = std::stoi(fold_key, &pos);
                } catch (const std::exception&) {
                    pos = std::string::npos;
                }
                if (pos != fold_key.size())
                    throw ConfigError("config key 'backends.fold_routing' keys must be fold numbers");
                cfg.fold_routing[fold] = tag.get<std::string>();
            }
        }
        if (b.contains("answer_generators")) {
            for (const auto& g : b.at("answer_generators"))
                cfg.answer_generators.push_back(
                    generator_spec_from_json(g, "backends.answer_generators"));
        }
        if (b.contains("distractor_generators")) {
            for (const auto& g : b.at("distractor_generators"))
                cfg.distractor_generators.push_back(
                    generator_spec_from_json(g, "backends.distractor_generators"));
        }
        if (b.contains("judges")) {
            for (const auto& [role, ep] : b.at("judges").items())
                cfg.http_roles["judge:" + role] = endpoint_from_json(ep, "backends.judges." + role);
        }
        if (b.contains("scorers")) {
            for (const auto& [tag, ep] : b.at("scorers").items())
                cfg.http_scorers[tag] = endpoint_from_json(ep, "backends.scorers." + tag);
        }
        if (b.contains("embedder"))
            cfg.http_roles["embedder"] = endpoint_from_json(b.at("embedder"), "backends.embedder");
        if (b.contains("grammar"))
            cfg.http_roles["grammar"] = endpoint_from_json(b.at("grammar"), "backends.grammar");
    }
    if (cfg.backend_mode != "stub" && cfg.backend_mode != "http")
        throw ConfigError("config key 'backends.mode' must be 'stub' or 'http'");
    if (cfg.stub_validity_percent < 0 || cfg.stub_validity_percent > 100)
        throw ConfigError("config key 'backends.stub.validity_percent' must lie in [0, 100]");
    if (cfg.stub_invalid_percent < 0 || cfg.stub_invalid_percent > 100)
        throw ConfigError("config key 'backends.stub.invalid_percent' must lie in [0, 100]");
    if (cfg.backend_mode == "http") {
        if (cfg.answer_generators.empty())
            throw ConfigError("http mode needs 'backends.answer_generators'");
        if (cfg.distractor_generators.empty())
            throw ConfigError("http mode needs 'backends.distractor_generators'");
        for (const char* role : {"judge:validity", "judge:relative", "judge:invalid",
                                 "embedder", "grammar"}) {
            if (!cfg.http_roles.count(role))
                throw ConfigError(std::string("http mode needs endpoint for '") + role + "'");
        }
        for (const auto& tag : cfg.scorer_tags) {
            if (!cfg.http_scorers.count(tag))
                throw ConfigError("http mode needs 'backends.scorers." + tag + "'");
        }
    }
    return cfg;
}

std::string config_canonical_json(const PipelineConfig& cfg) {
    ordered_json j;
    j["schema"] = kConfigSchema;
    j["seed"] = cfg.seed;
    j["corpus"] = {{"path", cfg.corpus_path.string()},
                   {"format", "cloth_json"}};
    j["run_dir"] = cfg.run_dir.string();
    j["cache_dir"] = cfg.cache_dir.string();
    j["folds"] = cfg.folds;
    j["generation"] = {{"deletion_ratios", cfg.deletion_ratios},
                       {"protect_window", cfg.protect_window},
                       {"n_per_ratio", cfg.n_per_ratio},
                       {"dg_candidates", cfg.dg_candidates}};
    j["filter"] = {{"repetitions", cfg.filter_cfg.repetitions},
                   {"shots", cfg.filter_cfg.shots},
                   {"judge_reasks", cfg.filter_cfg.judge_reasks},
                   {"grammar_retries", cfg.filter_cfg.grammar_retries}};
    j["cluster"] = {{"sts_threshold", cfg.sts_threshold},
                    {"max_per_set", cfg.max_per_set},
                    {"scorers", cfg.scorer_tags}};
    j["tasks"] = {{"dcdg", cfg.mix.dcdg},
                  {"asde", cfg.mix.asde},
                  {"ddde", cfg.mix.ddde},
                  {"dcdg_count", cfg.mix.dcdg_count},
                  {"dcdg_clamp_count", cfg.mix.dcdg_clamp_count},
                  {"asde_distractors", cfg.mix.asde_distractors},
                  {"asde_fraction", cfg.mix.asde_fraction},
                  {"ddde_fraction", cfg.mix.ddde_fraction},
                  {"robustness_fraction", cfg.mix.robustness_fraction}};
    j["evaluate"] = {{"shots", cfg.judge_cfg.shots},
                     {"reasks", cfg.judge_cfg.reasks},
                     {"max_questions", cfg.eval_max_questions},
                     {"f1_k", cfg.f1_k}};
    j["concurrency"] = cfg.concurrency;
    j["templates"] = {{"task_version", cfg.task_template_version},
                      {"judge_version", cfg.judge_template_version}};
    ordered_json routing = ordered_json::object();
    for (const auto& [fold, tag] : cfg.fold_routing) routing[std::to_string(fold)] = tag;
    j["backends"] = {{"mode", cfg.backend_mode},
                     {"stub",
                      {{"validity_percent", cfg.stub_validity_percent},
                       {"invalid_percent", cfg.stub_invalid_percent}}},
                     {"fold_routing", routing}};
    j["overrides"] = {{"limit", cfg.limit ? ordered_json(*cfg.limit) : ordered_json(nullptr)},
                      {"fold", cfg.only_fold ? ordered_json(*cfg.only_fold) : ordered_json(nullptr)}};
    return j.dump();
}

// ---------------------------------------------------------------------------
// Backends

struct Pipeline::Backends {
    std::unique_ptr<cache::CallCache> calls;

    std::vector<std::unique_ptr<GenerationBackend>> raw_gens;
    std::vector<std::unique_ptr<JudgeClient>> raw_judges;
    std::vector<std::unique_ptr<QaScorer>> raw_scorers;
    std::unique_ptr<EmbeddingBackend> raw_embedder;
    std::unique_ptr<GrammarClient> raw_grammar;

    std::vector<std::unique_ptr<GenerationBackend>> cached_gens;
    std::vector<std::unique_ptr<JudgeClient>> cached_judges;
    std::vector<std::unique_ptr<QaScorer>> cached_scorers;
    std::unique_ptr<EmbeddingBackend> cached_embedder;
    std::unique_ptr<GrammarClient> cached_grammar;

    struct TaggedGen {
        GenerationBackend* backend = nullptr;
        std::string tag;
        std::optional<int> trained_on_fold;
    };
    std::vector<TaggedGen> answer_gens;
    std::vector<TaggedGen> distractor_gens;

    JudgeClient* validity = nullptr;
    JudgeClient* relative = nullptr;
    JudgeClient* invalid = nullptr;
    std::vector<std::pair<std::string, QaScorer*>> scorers;
    EmbeddingBackend* embedder = nullptr;
    GrammarClient* grammar = nullptr;
};

void Pipeline::ensure_backends() {
    if (backends_) return;
    auto b = std::make_unique<Backends>();
    b->calls = std::make_unique<cache::CallCache>(cfg_.cache_dir);

    auto add_gen = [&](std::unique_ptr<GenerationBackend> raw, const std::string& tag,
                       std::optional<int> fold, std::vector<Backends::TaggedGen>& into) {
        b->raw_gens.push_back(std::move(raw));
        b->cached_gens.push_back(
            std::make_unique<cache::CachedGenerationBackend>(*b->raw_gens.back(), *b->calls));
        into.push_back({b->cached_gens.back().get(), tag, fold});
    };
    auto add_judge = [&](std::unique_ptr<JudgeClient> raw) {
        b->raw_judges.push_back(std::move(raw));
        b->cached_judges.push_back(
            std::make_unique<cache::CachedJudgeClient>(*b->raw_judges.back(), *b->calls));
        return b->cached_judges.back().get();
    };

    if (cfg_.backend_mode == "stub") {
        auto questions = load_questions_artifact("generate");
        add_gen(std::make_unique<stubs::SyntheticBackend>(std::move(questions), cfg_.protect_window),
                "synthetic-answer-gen", std::nullopt, b->answer_gens);
        if (cfg_.folds >= 2) {
            for (int f = 0; f < cfg_.folds; ++f) {
                std::string tag = "dg-fold" + std::to_string(f);
                add_gen(std::make_unique<stubs::HashGenerationBackend>(tag), tag, f,
                        b->distractor_gens);
            }
        } else {
            add_gen(std::make_unique<stubs::HashGenerationBackend>("dg-all"), "dg-all",
                    std::nullopt, b->distractor_gens);
        }
        b->validity = add_judge(std::make_unique<stubs::HashValidityJudge>(
            cfg_.stub_validity_percent, cfg_.seed));
        b->relative = add_judge(std::make_unique<stubs::HashRelativeJudge>(cfg_.seed));
        b->invalid = add_judge(std::make_unique<stubs::HashInvalidJudge>(
            cfg_.stub_invalid_percent, cfg_.seed));
        for (const auto& tag : cfg_.scorer_tags) {
            b->raw_scorers.push_back(std::make_unique<stubs::HashQaScorer>(tag, fnv1a64(tag)));
            b->cached_scorers.push_back(
                std::make_unique<cache::CachedQaScorer>(*b->raw_scorers.back(), *b->calls));
            b->scorers.emplace_back(tag, b->cached_scorers.back().get());
        }
        b->raw_embedder = std::make_unique<stubs::HashEmbeddingBackend>(16, 0);
        b->raw_grammar = std::make_unique<stubs::PermissiveGrammarClient>();
    } else {
        for (const auto& spec : cfg_.answer_generators)
            add_gen(std::make_unique<http::HttpGenerationBackend>(spec.endpoint, spec.tag,
                                                                  spec.attention_capable),
                    spec.tag, spec.trained_on_fold, b->answer_gens);
        for (const auto& spec : cfg_.distractor_generators)
            add_gen(std::make_unique<http::HttpGenerationBackend>(spec.endpoint, spec.tag,
                                                                  spec.attention_capable),
                    spec.tag, spec.trained_on_fold, b->distractor_gens);
        b->validity = add_judge(std::make_unique<http::HttpJudgeClient>(
            cfg_.http_roles.at("judge:validity"), "judge-validity"));
        b->relative = add_judge(std::make_unique<http::HttpJudgeClient>(
            cfg_.http_roles.at("judge:relative"), "judge-relative"));
        b->invalid = add_judge(std::make_unique<http::HttpJudgeClient>(
            cfg_.http_roles.at("judge:invalid"), "judge-invalid"));
        for (const auto& tag : cfg_.scorer_tags) {
            b->raw_scorers.push_back(
                std::make_unique<http::HttpQaScorer>(cfg_.http_scorers.at(tag), tag));
            b->cached_scorers.push_back(
                std::make_unique<cache::CachedQaScorer>(*b->raw_scorers.back(), *b->calls));
            b->scorers.emplace_back(tag, b->cached_scorers.back().get());
        }
        b->raw_embedder = std::make_unique<http::HttpEmbeddingBackend>(
            cfg_.http_roles.at("embedder"), "embedder");
        b->raw_grammar = std::make_unique<http::HttpGrammarClient>(
            cfg_.http_roles.at("grammar"), "grammar");
    }
    b->cached_embedder =
        std::make_unique<cache::CachedEmbeddingBackend>(*b->raw_embedder, *b->calls);
    b->embedder = b->cached_embedder.get();
    b->cached_grammar = std::make_unique<cache::CachedGrammarClient>(*b->raw_grammar, *b->calls);
    b->grammar = b->cached_grammar.get();
    backends_ = std::move(b);
}

GenerationBackend& Pipeline::route_generator(const std::string& role, int fold) {
    ensure_backends();
    const auto& pool =
        role == "dg" ? backends_->distractor_gens : backends_->answer_gens;
    if (pool.empty()) throw ConfigError("no generators configured for role '" + role + "'");

    auto assert_no_leakage = [&](const Backends::TaggedGen& g) {
        if (g.trained_on_fold && *g.trained_on_fold == fold) {
            throw IntegrityError("fold leakage: generator '" + g.tag + "' trained on fold " +
                                 std::to_string(fold) + " routed to a fold-" +
                                 std::to_string(fold) + " question");
        }
    };

    if (role == "dg") {
        auto it = cfg_.fold_routing.find(fold);
        if (it != cfg_.fold_routing.end()) {
            for (const auto& g : pool) {
                if (g.tag == it->second) {
                    assert_no_leakage(g);
                    return *g.backend;
                }
            }
            throw ConfigError("fold_routing names unknown generator tag '" + it->second + "'");
        }
    }
    for (const auto& g : pool) {
        if (!g.trained_on_fold || *g.trained_on_fold != fold) {
            assert_no_leakage(g);
            return *g.backend;
        }
    }
    throw ConfigError("every configured '" + role + "' generator was trained on fold " +
                      std::to_string(fold));
}

// ---------------------------------------------------------------------------
// Pipeline plumbing

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
    fs::create_directories(cfg_.run_dir);
}

Pipeline::~Pipeline() = default;

const std::vector<std::string>& stage_order() {
    static const std::vector<std::string> order = {
        "ingest", "generate", "filter", "cluster", "format", "evaluate", "report"};
    return order;
}

fs::path Pipeline::questions_path() const { return cfg_.run_dir / "questions.jsonl"; }
fs::path Pipeline::folds_path() const { return cfg_.run_dir / "folds.json"; }
fs::path Pipeline::candidates_path() const { return cfg_.run_dir / "candidates.jsonl"; }
fs::path Pipeline::filtered_path() const { return cfg_.run_dir / "filtered.jsonl"; }
fs::path Pipeline::verdicts_path() const { return cfg_.run_dir / "verdicts.jsonl"; }
fs::path Pipeline::scores_path() const { return cfg_.run_dir / "scores.jsonl"; }
fs::path Pipeline::annotations_path() const { return cfg_.run_dir / "annotations.jsonl"; }
fs::path Pipeline::train_path() const { return cfg_.run_dir / "train.jsonl"; }
fs::path Pipeline::mix_audit_path() const { return cfg_.run_dir / "mix_audit.json"; }
fs::path Pipeline::evaluation_path() const { return cfg_.run_dir / "evaluation.json"; }
fs::path Pipeline::report_json_path() const { return cfg_.run_dir / "report.json"; }
fs::path Pipeline::report_text_path() const { return cfg_.run_dir / "report.txt"; }
fs::path Pipeline::manifest_path() const { return cfg_.run_dir / "manifest.json"; }

std::vector<corpus::ClozeQuestion> Pipeline::load_questions_artifact(const std::string& for_stage) {
    if (!fs::exists(questions_path())) {
        throw DependencyError("stage '" + for_stage + "' needs " + questions_path().string() +
                              "; run the ingest stage first");
    }
    return corpus::read_questions_jsonl(questions_path());
}

std::map<std::string, int> Pipeline::load_fold_map(const std::string& for_stage) {
    if (!fs::exists(folds_path())) {
        throw DependencyError("stage '" + for_stage + "' needs " + folds_path().string() +
                              "; run the ingest stage first");
    }
    ordered_json j = wire::parse_json(read_file(folds_path()), "fold assignments");
    std::map<std::string, int> out;
    for (const auto& row : j.at("assignments"))
        out[row.at("passage_id").get<std::string>()] = row.at("fold").get<int>();
    return out;
}

void Pipeline::record_outcome(const StageOutcome& outcome) {
    const std::string hash = sha256_hex(config_canonical_json(cfg_));
    ordered_json manifest;
    if (fs::exists(manifest_path())) {
        try {
            manifest = wire::parse_json(read_file(manifest_path()), "manifest");
        } catch (const ParseError&) {
            manifest = ordered_json();
        }
    }
    if (!manifest.is_object() || get_string(manifest, "config_hash", "") != hash) {
        manifest = ordered_json();
        manifest["schema"] = kManifestSchema;
        manifest["toolkit_version"] = std::string(kToolkitVersion);
        manifest["config_hash"] = hash;
        manifest["task_template_version"] = cfg_.task_template_version;
        manifest["judge_template_version"] = cfg_.judge_template_version;
        manifest["stages"] = ordered_json::object();
    }
    ordered_json entry;
    entry["inputs"] = outcome.inputs;
    entry["outputs"] = outcome.outputs;
    entry["duration_ms"] = outcome.duration_ms;
    entry["cache_hits"] = outcome.cache_hits;
    entry["cache_misses"] = outcome.cache_misses;
    manifest["stages"][outcome.stage] = entry;

    const auto& stages = manifest["stages"];
    if (stages.contains("generate") && stages.contains("filter") && stages.contains("cluster")) {
        std::size_t generated = stages["generate"]["outputs"].get<std::size_t>();
        std::size_t filtered = stages["filter"]["outputs"].get<std::size_t>();
        std::size_t clustered = stages["cluster"]["outputs"].get<std::size_t>();
        manifest["counts_ok"] = generated >= filtered && filtered >= clustered;
    }
    atomic_write_file(manifest_path(), manifest.dump(2) + "\n");
}

StageOutcome Pipeline::run_stage(const std::string& stage) {
    using Clock = std::chrono::steady_clock;
    std::size_t hits0 = 0, misses0 = 0;
    if (backends_) {
        hits0 = backends_->calls->hits();
        misses0 = backends_->calls->misses();
    }
    auto t0 = Clock::now();

    StageOutcome outcome;
    if (stage == "ingest") outcome = stage_ingest();
    else if (stage == "generate") outcome = stage_generate();
    else if (stage == "filter") outcome = stage_filter();
    else if (stage == "cluster") outcome = stage_cluster();
    else if (stage == "format") outcome = stage_format();
    else if (stage == "evaluate") outcome = stage_evaluate();
    else if (stage == "report") outcome = stage_report();
    else throw ConfigError("unknown stage '" + stage + "'");

    outcome.stage = stage;
    outcome.duration_ms =
        std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    if (backends_) {
        outcome.cache_hits = backends_->calls->hits() - hits0;
        outcome.cache_misses = backends_->calls->misses() - misses0;
    }
    record_outcome(outcome);
    return outcome;
}

std::vector<StageOutcome> Pipeline::run_all() {
    std::vector<StageOutcome> outcomes;
    for (const auto& stage : stage_order()) outcomes.push_back(run_stage(stage));
    return outcomes;
}

std::size_t Pipeline::purge_cache() {
    ensure_backends();
    return backends_->calls->purge();
}

// ---------------------------------------------------------------------------
// Stages

StageOutcome Pipeline::stage_ingest() {
    auto passages = corpus::load_corpus(cfg_.corpus_path, cfg_.corpus_format);
    if (passages.empty()) throw IntegrityError("corpus at " + cfg_.corpus_path.string() + " is empty");

    auto folds = corpus::assign_folds(passages, cfg_.folds, derive_seed(cfg_.seed, {"folds"}));

    std::vector<corpus::ClozeQuestion> questions;
    for (const auto& p : passages) {
        auto qs = corpus::make_questions(p);
        questions.insert(questions.end(), qs.begin(), qs.end());
    }
    if (cfg_.limit && questions.size() > *cfg_.limit) questions.resize(*cfg_.limit);

    corpus::write_questions_jsonl(questions_path(), questions);

    ordered_json fj;
    fj["schema"] = "clozegen/folds/v1";
    fj["k"] = cfg_.folds;
    fj["assignments"] = ordered_json::array();
    for (const auto& a : folds)
        fj["assignments"].push_back({{"passage_id", a.passage_id}, {"fold", a.fold}});
    atomic_write_file(folds_path(), fj.dump(2) + "\n");

    StageOutcome out;
    out.inputs = passages.size();
    out.outputs = questions.size();
    return out;
}

StageOutcome Pipeline::stage_generate() {
    auto questions = load_questions_artifact("generate");
    auto fold_map = load_fold_map("generate");
    ensure_backends();

    struct Item {
        const corpus::ClozeQuestion* q;
        int fold;
    };
    std::vector<Item> items;
    for (const auto& q : questions) {
        auto it = fold_map.find(q.passage_id);
        if (it == fold_map.end())
            throw IntegrityError("passage '" + q.passage_id + "' has no fold assignment");
        if (cfg_.only_fold && it->second != *cfg_.only_fold) continue;
        items.push_back({&q, it->second});
    }

    genkit::GenOptions opts;
    opts.n_per_ratio = cfg_.n_per_ratio;
    opts.protect_window = cfg_.protect_window;

    auto per_question = parallel_map(items, cfg_.concurrency, [&](const Item& item) {
        std::vector<genkit::DistractorCandidate> all;
        auto& ir_backend = route_generator("ir", item.fold);
        auto ir = genkit::generate_via_ir(ir_backend, *item.q, cfg_.deletion_ratios, opts, cfg_.seed);
        all.insert(all.end(), ir.begin(), ir.end());
        auto& dg_backend = route_generator("dg", item.fold);
        auto dg = genkit::generate_via_dg(dg_backend, *item.q, cfg_.dg_candidates, opts.max_retries,
                                          cfg_.seed);
        all.insert(all.end(), dg.begin(), dg.end());
        return all;
    });

    std::vector<ordered_json> rows;
    std::size_t n_candidates = 0;
    for (const auto& cands : per_question) {
        for (const auto& c : cands) {
            CandidateRecord rec;
            rec.passage_id = c.question_ref.passage_id;
            rec.blank_index = c.question_ref.blank_index;
            rec.surface = c.surface;
            rec.source = c.source;
            rec.deletion_ratio = c.deletion_ratio;
            rec.answer_duplicate = c.answer_duplicate;
            rows.push_back(candidate_to_json(rec));
            ++n_candidates;
        }
    }
    atomic_write_file(candidates_path(), dump_jsonl(rows));

    StageOutcome out;
    out.inputs = items.size();
    out.outputs = n_candidates;
    return out;
}

StageOutcome Pipeline::stage_filter() {
    auto questions = load_questions_artifact("filter");
    if (!fs::exists(candidates_path()))
        throw DependencyError("stage 'filter' needs " + candidates_path().string() +
                              "; run the generate stage first");
    ensure_backends();

    std::map<std::string, const corpus::ClozeQuestion*> by_key;
    for (const auto& q : questions) by_key[corpus::ref_of(q).key()] = &q;

    auto rows = parse_jsonl(read_file(candidates_path()), "candidate");
    struct Group {
        const corpus::ClozeQuestion* q = nullptr;
        std::vector<std::string> surfaces;
    };
    std::vector<Group> groups;
    std::map<std::string, std::size_t> group_index;
    std::size_t total_in = 0;
    for (const auto& row : rows) {
        CandidateRecord rec = candidate_from_json(row);
        auto qit = by_key.find(rec.key());
        if (qit == by_key.end())
            throw IntegrityError("candidate references unknown question '" + rec.key() + "'");
        auto [git, inserted] = group_index.try_emplace(rec.key(), groups.size());
        if (inserted) groups.push_back({qit->second, {}});
        groups[git->second].surfaces.push_back(rec.surface);
        ++total_in;
    }

    auto results = parallel_map(groups, cfg_.concurrency, [&](const Group& g) {
        return filter::run_filter(*backends_->validity, *backends_->grammar, *g.q, g.surfaces,
                                  cfg_.filter_cfg, cfg_.seed);
    });

    std::vector<ordered_json> kept_rows;
    std::vector<ordered_json> verdict_rows;
    std::size_t total_kept = 0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const auto ref = corpus::ref_of(*groups[i].q);
        ordered_json kj;
        kj["schema"] = "clozegen/filtered/v1";
        kj["passage_id"] = ref.passage_id;
        kj["blank_index"] = ref.blank_index;
        kj["kept"] = results[i].kept;
        kept_rows.push_back(std::move(kj));
        total_kept += results[i].kept.size();
        for (const auto& v : results[i].verdicts) {
            ordered_json vj;
            vj["schema"] = "clozegen/verdict/v1";
            vj["passage_id"] = ref.passage_id;
            vj["blank_index"] = ref.blank_index;
            vj["surface"] = v.surface;
            vj["grammar_pass"] = v.grammar_pass;
            vj["votes"] = v.validity_votes;
            vj["indeterminate"] = v.indeterminate;
            vj["final_keep"] = v.final_keep;
            verdict_rows.push_back(std::move(vj));
        }
    }
    if (total_kept > total_in)
        throw IntegrityError("filter stage produced more candidates than it consumed");
    atomic_write_file(filtered_path(), dump_jsonl(kept_rows));
    atomic_write_file(verdicts_path(), dump_jsonl(verdict_rows));

    StageOutcome out;
    out.inputs = total_in;
    out.outputs = total_kept;
    return out;
}

StageOutcome Pipeline::stage_cluster() {
    auto questions = load_questions_artifact("cluster");
    if (!fs::exists(filtered_path()))
        throw DependencyError("stage 'cluster' needs " + filtered_path().string() +
                              "; run the filter stage first");
    ensure_backends();

    std::map<std::string, const corpus::ClozeQuestion*> by_key;
    for (const auto& q : questions) by_key[corpus::ref_of(q).key()] = &q;

    struct Item {
        const corpus::ClozeQuestion* q = nullptr;
        std::vector<std::string> kept;
    };
    std::vector<Item> items;
    std::size_t total_in = 0;
    for (const auto& row : parse_jsonl(read_file(filtered_path()), "filtered")) {
        std::string key = row.at("passage_id").get<std::string>() + "#" +
                          std::to_string(row.at("blank_index").get<int>());
        auto qit = by_key.find(key);
        if (qit == by_key.end())
            throw IntegrityError("filtered row references unknown question '" + key + "'");
        Item item;
        item.q = qit->second;
        item.kept = row.at("kept").get<std::vector<std::string>>();
        total_in += item.kept.size();
        items.push_back(std::move(item));
    }

    struct ClusterRow {
        corpus::QuestionRef ref;
        std::optional<difficulty::EnsembleScoreMatrix> matrix;
        std::optional<difficulty::ClusterOutcome> outcome;
        std::string skip_reason;
    };
    auto rows = parallel_map(items, cfg_.concurrency, [&](const Item& item) {
        ClusterRow row;
        row.ref = corpus::ref_of(*item.q);
        if (item.kept.size() < 3) {
            row.skip_reason = "fewer than 3 candidates";
            return row;
        }
        std::vector<std::pair<std::string, std::vector<double>>> raw_columns;
        for (auto& [tag, scorer] : backends_->scorers) {
            QaRequest req;
            req.context = item.q->context;
            req.options = item.kept;
            raw_columns.emplace_back(tag, scorer->score_options(req));
        }
        row.matrix = difficulty::normalize_matrix(item.kept, raw_columns);
        std::string reason;
        row.outcome = difficulty::cluster_by_tertiles(row.ref, *row.matrix, *backends_->embedder,
                                                      cfg_.sts_threshold, cfg_.max_per_set,
                                                      &item.q->answer, &reason);
        row.skip_reason = reason;
        return row;
    });

    std::vector<ordered_json> score_rows;
    std::vector<ordered_json> annotation_rows;
    ordered_json skips = ordered_json::array();
    std::size_t total_annotated = 0;
    for (const auto& row : rows) {
        if (row.matrix) {
            ordered_json sj;
            sj["schema"] = "clozegen/scores/v1";
            sj["passage_id"] = row.ref.passage_id;
            sj["blank_index"] = row.ref.blank_index;
            sj["surfaces"] = row.matrix->surfaces;
            sj["columns"] = ordered_json::array();
            for (const auto& col : row.matrix->columns) {
                sj["columns"].push_back({{"scorer", col.scorer_tag},
                                         {"lambda", col.lambda},
                                         {"degenerate", col.degenerate},
                                         {"raw", col.raw},
                                         {"normalized", col.normalized}});
            }
            sj["aggregate"] = row.matrix->aggregate;
            score_rows.push_back(std::move(sj));
        }
        if (row.outcome) {
            const auto& ann = row.outcome->annotated;
            ordered_json aj;
            aj["schema"] = "clozegen/annotation/v1";
            aj["passage_id"] = row.ref.passage_id;
            aj["blank_index"] = row.ref.blank_index;
            aj["easy"] = ann.easy;
            aj["hard"] = ann.hard;
            aj["excluded_middle"] = ann.excluded_middle;
            annotation_rows.push_back(std::move(aj));
            total_annotated += ann.easy.size() + ann.hard.size();
        } else {
            skips.push_back({{"passage_id", row.ref.passage_id},
                             {"blank_index", row.ref.blank_index},
                             {"reason", row.skip_reason}});
        }
    }
    atomic_write_file(scores_path(), dump_jsonl(score_rows));
    atomic_write_file(annotations_path(), dump_jsonl(annotation_rows));
    ordered_json audit;
    audit["schema"] = "clozegen/cluster-skips/v1";
    audit["skipped"] = skips;
    atomic_write_file(cfg_.run_dir / "cluster_skips.json", audit.dump(2) + "\n");

    StageOutcome out;
    out.inputs = total_in;
    out.outputs = total_annotated;
    return out;
}

StageOutcome Pipeline::stage_format() {
    auto questions = load_questions_artifact("format");
    if (!fs::exists(annotations_path()))
        throw DependencyError("stage 'format' needs " + annotations_path().string() +
                              "; run the cluster stage first");

    std::map<std::string, difficulty::DifficultyAnnotatedQuestion> annotations;
    for (const auto& row : parse_jsonl(read_file(annotations_path()), "annotation")) {
        difficulty::DifficultyAnnotatedQuestion ann;
        ann.question_ref = {row.at("passage_id").get<std::string>(),
                            row.at("blank_index").get<int>()};
        ann.easy = row.at("easy").get<std::vector<std::string>>();
        ann.hard = row.at("hard").get<std::vector<std::string>>();
        ann.excluded_middle = row.at("excluded_middle").get<std::vector<std::string>>();
        annotations[ann.question_ref.key()] = std::move(ann);
    }

    std::vector<corpus::ClozeQuestion> annotated_questions;
    for (const auto& q : questions) {
        if (annotations.count(corpus::ref_of(q).key())) annotated_questions.push_back(q);
    }

    taskforge::MixAudit audit;
    auto examples = taskforge::build_training_mix(annotated_questions, annotations, cfg_.mix,
                                                  derive_seed(cfg_.seed, {"format"}), &audit);
    taskforge::write_examples_jsonl(train_path(), examples);

    ordered_json aj;
    aj["schema"] = "clozegen/mix-audit/v1";
    aj["emitted"] = ordered_json::object();
    for (const auto& [task, count] : audit.emitted)
        aj["emitted"][taskforge::to_string(task)] = count;
    aj["skipped"] = ordered_json::array();
    for (const auto& s : audit.skipped) {
        aj["skipped"].push_back({{"passage_id", s.question_ref.passage_id},
                                 {"blank_index", s.question_ref.blank_index},
                                 {"task", taskforge::to_string(s.task)},
                                 {"reason", s.reason}});
    }
    atomic_write_file(mix_audit_path(), aj.dump(2) + "\n");

    StageOutcome out;
    out.inputs = annotated_questions.size();
    out.outputs = examples.size();
    return out;
}

StageOutcome Pipeline::stage_evaluate() {
    auto questions = load_questions_artifact("evaluate");
    if (!fs::exists(annotations_path()))
        throw DependencyError("stage 'evaluate' needs " + annotations_path().string() +
                              "; run the cluster stage first");
    if (!fs::exists(candidates_path()))
        throw DependencyError("stage 'evaluate' needs " + candidates_path().string() +
                              "; run the generate stage first");
    if (!fs::exists(filtered_path()))
        throw DependencyError("stage 'evaluate' needs " + filtered_path().string() +
                              "; run the filter stage first");
    ensure_backends();

    std::map<std::string, const corpus::ClozeQuestion*> by_key;
    for (const auto& q : questions) by_key[corpus::ref_of(q).key()] = &q;

    struct EvalItem {
        const corpus::ClozeQuestion* q = nullptr;
        std::vector<std::string> easy;
        std::vector<std::string> hard;
    };
    std::vector<EvalItem> eligible;
    for (const auto& row : parse_jsonl(read_file(annotations_path()), "annotation")) {
        std::string key = row.at("passage_id").get<std::string>() + "#" +
                          std::to_string(row.at("blank_index").get<int>());
        auto qit = by_key.find(key);
        if (qit == by_key.end())
            throw IntegrityError("annotation references unknown question '" + key + "'");
        EvalItem item;
        item.q = qit->second;
        item.easy = row.at("easy").get<std::vector<std::string>>();
        item.hard = row.at("hard").get<std::vector<std::string>>();
        if (item.easy.empty() || item.hard.empty()) continue;
        if (item.q->original_distractors.empty()) continue;
        eligible.push_back(std::move(item));
    }

    std::size_t n_eligible = eligible.size();
    if (cfg_.eval_max_questions > 0 && eligible.size() > cfg_.eval_max_questions) {
        Rng rng(derive_seed(cfg_.seed, {"eval-sample"}));
        auto picks = sample_indices(eligible.size(), cfg_.eval_max_questions, rng);
        std::sort(picks.begin(), picks.end());
        std::vector<EvalItem> sampled;
        sampled.reserve(picks.size());
        for (auto i : picks) sampled.push_back(std::move(eligible[i]));
        eligible = std::move(sampled);
    }

    struct EvalRow {
        corpus::QuestionRef ref;
        bool skipped = false;
        std::string skip_reason;
        evalkit::RelativeDifficultyRow relative;
        evalkit::InvalidRatioRow invalid;
    };
    auto rows = parallel_map(eligible, cfg_.concurrency, [&](const EvalItem& item) {
        EvalRow row;
        row.ref = corpus::ref_of(*item.q);
        const std::string key = row.ref.key();
        std::string original = taskforge::sample_surfaces(item.q->original_distractors, 1,
                                                          derive_seed(cfg_.seed, {"eval-orig", key}))[0];
        std::string easy =
            taskforge::sample_surfaces(item.easy, 1, derive_seed(cfg_.seed, {"eval-easy", key}))[0];
        std::string hard =
            taskforge::sample_surfaces(item.hard, 1, derive_seed(cfg_.seed, {"eval-hard", key}))[0];

        std::vector<std::string> opts = {item.q->answer, original, easy, hard};
        for (std::size_t a = 0; a < opts.size(); ++a) {
            for (std::size_t b = a + 1; b < opts.size(); ++b) {
                if (iequals(opts[a], opts[b])) {
                    row.skipped = true;
                    row.skip_reason = "option collision: '" + opts[a] + "' appears twice";
                    return row;
                }
            }
        }
        row.relative = evalkit::judge_relative_difficulty(
            *backends_->relative, *item.q, original, easy, hard, cfg_.judge_cfg,
            derive_seed(cfg_.seed, {"eval-rel", key}));
        row.invalid = evalkit::judge_invalid_ratio(*backends_->invalid, *item.q,
                                                   {original, easy, hard}, item.q->answer,
                                                   cfg_.judge_cfg,
                                                   derive_seed(cfg_.seed, {"eval-inv", key}));
        return row;
    });

    std::vector<evalkit::RelativeDifficultyRow> rel_rows;
    std::vector<evalkit::InvalidRatioRow> inv_rows;
    ordered_json skipped = ordered_json::array();
    for (const auto& row : rows) {
        if (row.skipped) {
            skipped.push_back({{"passage_id", row.ref.passage_id},
                               {"blank_index", row.ref.blank_index},
                               {"reason", row.skip_reason}});
            continue;
        }
        rel_rows.push_back(row.relative);
        inv_rows.push_back(row.invalid);
    }
    auto rel_table = evalkit::aggregate_relative_difficulty(rel_rows);
    auto inv_summary = evalkit::aggregate_invalid_ratio(inv_rows);

    // Corpus-level distractor statistics from the generate and filter artifacts.
    std::map<std::string, std::vector<std::string>> kept_by_key;
    for (const auto& row : parse_jsonl(read_file(filtered_path()), "filtered")) {
        std::string key = row.at("passage_id").get<std::string>() + "#" +
                          std::to_string(row.at("blank_index").get<int>());
        kept_by_key[key] = row.at("kept").get<std::vector<std::string>>();
    }
    std::map<std::string, std::set<std::string>> ir_kinds;  // key -> surfaces per source
    std::map<std::string, std::set<std::string>> dg_kinds;
    struct RatioBucket {
        std::size_t total = 0;
        std::size_t duplicates = 0;
    };
    std::map<double, RatioBucket> by_ratio;
    RatioBucket dg_bucket;
    for (const auto& row : parse_jsonl(read_file(candidates_path()), "candidate")) {
        CandidateRecord rec = candidate_from_json(row);
        if (rec.source == genkit::CandidateSource::answer_generator_ir) {
            if (rec.deletion_ratio) {
                auto& bucket = by_ratio[*rec.deletion_ratio];
                ++bucket.total;
                if (rec.answer_duplicate) ++bucket.duplicates;
            }
            ir_kinds[rec.key()].insert(rec.surface);
        } else {
            ++dg_bucket.total;
            if (rec.answer_duplicate) ++dg_bucket.duplicates;
            dg_kinds[rec.key()].insert(rec.surface);
        }
    }

    std::vector<double> diversities;
    std::vector<double> plausibilities;
    std::vector<double> f1s;
    std::vector<double> jaccards;
    std::vector<double> semantic_overlaps;
    for (const auto& [key, kept] : kept_by_key) {
        auto qit = by_key.find(key);
        if (qit == by_key.end()) continue;
        const auto& q = *qit->second;
        if (auto d = evalkit::semantic_diversity(kept, *backends_->embedder))
            diversities.push_back(*d);
        for (const auto& surf : kept)
            plausibilities.push_back(evalkit::plausibility(surf, q.answer, *backends_->embedder));
        if (!kept.empty() && !q.original_distractors.empty())
            f1s.push_back(evalkit::f1_at_k(kept, q.original_distractors, cfg_.f1_k));
        auto ir_it = ir_kinds.find(key);
        auto dg_it = dg_kinds.find(key);
        if (ir_it != ir_kinds.end() && dg_it != dg_kinds.end() && !ir_it->second.empty() &&
            !dg_it->second.empty()) {
            std::vector<std::string> ir_list(ir_it->second.begin(), ir_it->second.end());
            std::vector<std::string> dg_list(dg_it->second.begin(), dg_it->second.end());
            auto ov = evalkit::overlap_stats(ir_list, dg_list, *backends_->embedder);
            jaccards.push_back(ov.jaccard);
            semantic_overlaps.push_back(ov.semantic_overlap);
        }
    }

    ordered_json ej;
    ej["schema"] = "clozegen/evaluation/v1";
    {
        ordered_json rj;
        rj["judged"] = rel_table.judged;
        rj["abstained"] = rel_table.abstained;
        rj["percent"] = ordered_json::object();
        for (const auto& [type, slots] : rel_table.percent) {
            ordered_json sj = ordered_json::object();
            for (const auto& [slot, pct] : slots) sj[evalkit::to_string(slot)] = pct;
            rj["percent"][evalkit::to_string(type)] = sj;
        }
        ej["relative_difficulty"] = rj;
    }
    ej["invalid_ratio"] = {{"ratio", inv_summary.ratio},
                           {"judged_questions", inv_summary.judged_questions},
                           {"abstained", inv_summary.abstained}};
    {
        ordered_json mj;
        mj["duplication_by_ratio"] = ordered_json::array();
        for (const auto& [ratio, bucket] : by_ratio) {
            double rate = bucket.total == 0
                              ? 0.0
                              : static_cast<double>(bucket.duplicates) /
                                    static_cast<double>(bucket.total);
            mj["duplication_by_ratio"].push_back(
                {{"ratio", ratio}, {"candidates", bucket.total}, {"rate", rate}});
        }
        double dg_rate = dg_bucket.total == 0 ? 0.0
                                              : static_cast<double>(dg_bucket.duplicates) /
                                                    static_cast<double>(dg_bucket.total);
        mj["dg_duplication"] = {{"candidates", dg_bucket.total}, {"rate", dg_rate}};
        mj["semantic_diversity"] =
            diversities.empty() ? ordered_json(nullptr) : ordered_json(mean_of(diversities));
        mj["plausibility"] = plausibilities.empty() ? ordered_json(nullptr)
                                                    : ordered_json(mean_of(plausibilities));
        mj["f1_at_k"] = {{"k", cfg_.f1_k},
                         {"value", f1s.empty() ? ordered_json(nullptr) : ordered_json(mean_of(f1s))}};
        mj["path_overlap"] = {
            {"jaccard", jaccards.empty() ? ordered_json(nullptr) : ordered_json(mean_of(jaccards))},
            {"semantic", semantic_overlaps.empty() ? ordered_json(nullptr)
                                                   : ordered_json(mean_of(semantic_overlaps))}};
        ej["metrics"] = mj;
    }
    {
        ordered_json rows_j;
        rows_j["relative"] = ordered_json::array();
        for (const auto& r : rel_rows) {
            ordered_json row;
            row["passage_id"] = r.ref.passage_id;
            row["blank_index"] = r.ref.blank_index;
            row["abstained"] = r.abstained;
            row["ranking"] = ordered_json::array();
            for (auto t : r.ranking) row["ranking"].push_back(evalkit::to_string(t));
            rows_j["relative"].push_back(std::move(row));
        }
        rows_j["invalid"] = ordered_json::array();
        for (const auto& r : inv_rows) {
            ordered_json row;
            row["passage_id"] = r.ref.passage_id;
            row["blank_index"] = r.ref.blank_index;
            row["abstained"] = r.abstained;
            row["invalid"] = ordered_json::array();
            for (const auto& [surf, bad] : r.invalid)
                row["invalid"].push_back({{"surface", surf}, {"invalid", bad}});
            rows_j["invalid"].push_back(std::move(row));
        }
        ej["rows"] = rows_j;
    }
    ej["skipped"] = skipped;
    atomic_write_file(evaluation_path(), ej.dump(2) + "\n");

    StageOutcome out;
    out.inputs = n_eligible;
    out.outputs = rel_rows.size();
    return out;
}

StageOutcome Pipeline::stage_report() {
    if (!fs::exists(manifest_path()))
        throw DependencyError("stage 'report' needs " + manifest_path().string() +
                              "; run the earlier stages first");
    if (!fs::exists(evaluation_path()))
        throw DependencyError("stage 'report' needs " + evaluation_path().string() +
                              "; run the evaluate stage first");
    ordered_json manifest = wire::parse_json(read_file(manifest_path()), "manifest");
    ordered_json evaluation = wire::parse_json(read_file(evaluation_path()), "evaluation");

    const auto& stages = manifest.at("stages");
    for (const char* needed : {"ingest", "generate", "filter", "cluster", "format", "evaluate"}) {
        if (!stages.contains(needed))
            throw DependencyError(std::string("stage 'report' needs a recorded '") + needed +
                                  "' stage; run it first");
    }
    std::size_t generated = stages.at("generate").at("outputs").get<std::size_t>();
    std::size_t filtered = stages.at("filter").at("outputs").get<std::size_t>();
    std::size_t clustered = stages.at("cluster").at("outputs").get<std::size_t>();
    if (!(generated >= filtered && filtered >= clustered)) {
        throw IntegrityError("stage counts do not reconcile: generated " +
                             std::to_string(generated) + ", filtered " + std::to_string(filtered) +
                             ", clustered " + std::to_string(clustered));
    }

    ordered_json rj;
    rj["schema"] = "clozegen/report/v1";
    rj["toolkit_version"] = std::string(kToolkitVersion);
    rj["config_hash"] = manifest.at("config_hash");
    rj["counts"] = ordered_json::object();
    for (const auto& name : stage_order()) {
        if (name == "report" || !stages.contains(name)) continue;
        rj["counts"][name] = {{"inputs", stages.at(name).at("inputs")},
                              {"outputs", stages.at(name).at("outputs")}};
    }
    rj["relative_difficulty"] = evaluation.at("relative_difficulty");
    rj["invalid_ratio"] = evaluation.at("invalid_ratio");
    rj["metrics"] = evaluation.at("metrics");
    atomic_write_file(report_json_path(), rj.dump(2) + "\n");

    // Rebuild the judged table so the text report reuses its renderer.
    std::vector<evalkit::RelativeDifficultyRow> rel_rows;
    for (const auto& row : evaluation.at("rows").at("relative")) {
        evalkit::RelativeDifficultyRow r;
        r.ref = {row.at("passage_id").get<std::string>(), row.at("blank_index").get<int>()};
        r.abstained = row.at("abstained").get<bool>();
        for (const auto& t : row.at("ranking")) {
            std::string tag = t.get<std::string>();
            if (tag == "original") r.ranking.push_back(evalkit::OptionType::original);
            else if (tag == "easy") r.ranking.push_back(evalkit::OptionType::easy);
            else if (tag == "hard") r.ranking.push_back(evalkit::OptionType::hard);
            else throw IntegrityError("evaluation row has unknown option type '" + tag + "'");
        }
        rel_rows.push_back(std::move(r));
    }
    auto rel_table = evalkit::aggregate_relative_difficulty(rel_rows);

    std::ostringstream os;
    os << "distractor difficulty run report\n";
    os << "================================\n\n";
    os << "toolkit " << kToolkitVersion << ", config "
       << manifest.at("config_hash").get<std::string>().substr(0, 16) << "\n\n";
    os << "stage counts (inputs -> outputs)\n";
    for (const auto& name : stage_order()) {
        if (name == "report" || !stages.contains(name)) continue;
        os << "  " << name;
        for (std::size_t pad = name.size(); pad < 10; ++pad) os << ' ';
        os << stages.at(name).at("inputs").get<std::size_t>() << " -> "
           << stages.at(name).at("outputs").get<std::size_t>() << "\n";
    }
    os << "\nrelative difficulty (judge slots, % of judged)\n";
    os << rel_table.render_text() << "\n";
    const auto& inv = evaluation.at("invalid_ratio");
    os.setf(std::ios::fixed);
    os.precision(4);
    os << "\ninvalid ratio: " << inv.at("ratio").get<double>() << " over "
       << inv.at("judged_questions").get<std::size_t>() << " questions ("
       << inv.at("abstained").get<std::size_t>() << " abstained)\n";
    const auto& metrics = evaluation.at("metrics");
    os << "\nduplication by deletion ratio\n";
    for (const auto& bucket : metrics.at("duplication_by_ratio")) {
        os << "  ratio " << bucket.at("ratio").get<double>() << ": "
           << bucket.at("rate").get<double>() << " of "
           << bucket.at("candidates").get<std::size_t>() << " candidates\n";
    }
    auto metric_line = [&](const char* label, const ordered_json& v) {
        os << label;
        if (v.is_null())
            os << "n/a\n";
        else
            os << v.get<double>() << "\n";
    };
    metric_line("semantic diversity: ", metrics.at("semantic_diversity"));
    metric_line("plausibility: ", metrics.at("plausibility"));
    os << "f1@" << metrics.at("f1_at_k").at("k").get<int>() << ": ";
    if (metrics.at("f1_at_k").at("value").is_null())
        os << "n/a\n";
    else
        os << metrics.at("f1_at_k").at("value").get<double>() << "\n";
    metric_line("path overlap (jaccard): ", metrics.at("path_overlap").at("jaccard"));
    metric_line("path overlap (semantic): ", metrics.at("path_overlap").at("semantic"));
    atomic_write_file(report_text_path(), os.str());

    StageOutcome out;
    out.inputs = 1;
    out.outputs = 1;
    return out;
}

// format_ms is used by the CLI's per-stage progress lines.
std::string describe_outcome(const StageOutcome& o) {
    std::ostringstream os;
    os << "stage " << o.stage << ": " << o.inputs << " -> " << o.outputs << " (cache "
       << o.cache_hits << " hit / " << o.cache_misses << " miss, " << format_ms(o.duration_ms)
       << " ms)";
    return os.str();
}

}  // namespace clozegen::orchestrator
