#pragma once

// Run management: pipeline configuration, stage sequencing
// (ingest -> generate -> filter -> cluster -> format -> evaluate -> report),
// backend wiring with fold-leakage checks, call caching, and the manifest.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "clozegen/backends.hpp"
#include "clozegen/cache.hpp"
#include "clozegen/corpus.hpp"
#include "clozegen/evalkit.hpp"
#include "clozegen/filter.hpp"
#include "clozegen/http_backends.hpp"
#include "clozegen/taskforge.hpp"

namespace clozegen::orchestrator {

struct GeneratorSpec {
    std::string tag;
    std::optional<int> trained_on_fold;
    http::Endpoint endpoint;  // http mode only
    bool attention_capable = false;
};

struct PipelineConfig {
    std::filesystem::path corpus_path;
    corpus::CorpusFormat corpus_format = corpus::CorpusFormat::cloth_json;
    std::filesystem::path run_dir;
    std::filesystem::path cache_dir;

    std::uint64_t seed = 0;  // must be explicit in the config file
    int folds = 5;

    std::vector<double> deletion_ratios{0.1, 0.2, 0.4};
    int protect_window = 3;
    int n_per_ratio = 8;
    int dg_candidates = 10;

    filter::FilterConfig filter_cfg;  // 3 repetitions, 2 shots

    double sts_threshold = 0.80;
    std::size_t max_per_set = 12;
    std::vector<std::string> scorer_tags{"qa-alpha", "qa-beta", "qa-gamma"};

    taskforge::TaskMixConfig mix;

    evalkit::JudgeProtocolConfig judge_cfg;  // 1 shot
    std::size_t eval_max_questions = 0;      // 0 = all
    int f1_k = 10;

    std::size_t concurrency = 4;

    std::string backend_mode = "stub";  // stub | http
    int stub_validity_percent = 21;
    int stub_invalid_percent = 10;
    std::vector<GeneratorSpec> answer_generators;      // http mode
    std::vector<GeneratorSpec> distractor_generators;  // http mode
    std::map<std::string, http::Endpoint> http_roles;  // judges, embedder, grammar
    std::map<std::string, http::Endpoint> http_scorers;

    // Explicit fold -> distractor-generator tag overrides; the leakage
    // assertion still applies, so routing a fold to its own trained backend
    // fails the run.
    std::map<int, std::string> fold_routing;

    std::string task_template_version = "v1";
    std::string judge_template_version = "v1";

    // Runtime overrides (CLI flags), folded into the config hash.
    std::optional<std::size_t> limit;
    std::optional<int> only_fold;
};

// Parses and validates a config file; every constraint violation throws
// ConfigError naming the key.
PipelineConfig load_config(const std::filesystem::path& path);

// Canonical JSON of the effective config (defaults resolved, overrides
// applied); its SHA-256 is the run identity in the manifest.
std::string config_canonical_json(const PipelineConfig& cfg);

struct StageOutcome {
    std::string stage;
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    double duration_ms = 0.0;
    std::size_t cache_hits = 0;
    std::size_t cache_misses = 0;
};

const std::vector<std::string>& stage_order();

// One-line progress summary for CLI output.
std::string describe_outcome(const StageOutcome& outcome);

class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg);
    ~Pipeline();

    // Runs one stage; upstream artifacts must exist (DependencyError names
    // the missing stage otherwise). Appends the outcome to the manifest.
    StageOutcome run_stage(const std::string& stage);
    std::vector<StageOutcome> run_all();

    std::size_t purge_cache();
    const PipelineConfig& config() const { return cfg_; }

    // Artifact locations under run_dir.
    std::filesystem::path questions_path() const;
    std::filesystem::path folds_path() const;
    std::filesystem::path candidates_path() const;
    std::filesystem::path filtered_path() const;
    std::filesystem::path verdicts_path() const;
    std::filesystem::path scores_path() const;
    std::filesystem::path annotations_path() const;
    std::filesystem::path train_path() const;
    std::filesystem::path mix_audit_path() const;
    std::filesystem::path evaluation_path() const;
    std::filesystem::path report_json_path() const;
    std::filesystem::path report_text_path() const;
    std::filesystem::path manifest_path() const;

private:
    struct Backends;

    StageOutcome stage_ingest();
    StageOutcome stage_generate();
    StageOutcome stage_filter();
    StageOutcome stage_cluster();
    StageOutcome stage_format();
    StageOutcome stage_evaluate();
    StageOutcome stage_report();

    void ensure_backends();
    std::vector<corpus::ClozeQuestion> load_questions_artifact(const std::string& for_stage);
    std::map<std::string, int> load_fold_map(const std::string& for_stage);
    void record_outcome(const StageOutcome& outcome);

    // Picks a generator for a question fold and enforces the no-leakage rule.
    GenerationBackend& route_generator(const std::string& role, int fold);

    PipelineConfig cfg_;
    std::unique_ptr<Backends> backends_;
};

// CLI entry point used by the binary; returns the process exit code
// (0 success, 2 config error, 3 backend error, 4 integrity/dependency error).
int run_cli(int argc, char** argv);

}  // namespace clozegen::orchestrator
