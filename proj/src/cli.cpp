#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "clozegen/orchestrator.hpp"

namespace clozegen::orchestrator {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitGeneric = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;
constexpr int kExitIntegrity = 4;

void print_plan(const PipelineConfig& cfg, const std::string& what) {
    std::cout << "dry run: would execute " << what << "\n";
    std::cout << "  corpus:  " << cfg.corpus_path.string() << "\n";
    std::cout << "  run dir: " << cfg.run_dir.string() << "\n";
    std::cout << "  cache:   " << cfg.cache_dir.string() << "\n";
    std::cout << "  seed:    " << cfg.seed << ", folds: " << cfg.folds
              << ", backends: " << cfg.backend_mode << "\n";
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"difficulty-annotated distractor pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "pipeline config file (JSON)")->required();
    std::optional<std::uint64_t> seed_override;
    app.add_option("--seed", seed_override, "override the config seed");
    std::optional<int> fold_override;
    app.add_option("--fold", fold_override, "restrict per-question stages to one fold");
    std::optional<std::size_t> limit_override;
    app.add_option("--limit", limit_override, "truncate the question list at ingest");
    bool dry_run = false;
    app.add_flag("--dry-run", dry_run, "validate the config and print the plan");

    auto* run_cmd = app.add_subcommand("run", "run every stage in order");
    std::string run_stage_name;
    run_cmd->add_option("--stage", run_stage_name, "run only this stage");
    for (const auto& stage : stage_order())
        app.add_subcommand(stage, "run the " + stage + " stage");
    app.add_subcommand("purge-cache", "delete every cached backend call");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        PipelineConfig cfg = load_config(config_path);
        if (seed_override) cfg.seed = *seed_override;
        if (fold_override) {
            if (*fold_override < 0 || *fold_override >= cfg.folds)
                throw ConfigError("--fold must lie in [0, folds)");
            cfg.only_fold = fold_override;
        }
        if (limit_override) cfg.limit = limit_override;

        std::string chosen;
        for (const auto* sub : app.get_subcommands()) chosen = sub->get_name();
        if (chosen == "run" && !run_stage_name.empty()) chosen = run_stage_name;

        if (dry_run) {
            print_plan(cfg, chosen == "run" ? "all stages" : "stage '" + chosen + "'");
            return kExitOk;
        }

        Pipeline pipeline(std::move(cfg));
        if (chosen == "purge-cache") {
            std::cout << "purged " << pipeline.purge_cache() << " cache entries\n";
            return kExitOk;
        }
        if (chosen == "run") {
            for (const auto& outcome : pipeline.run_all())
                std::cout << describe_outcome(outcome) << "\n";
        } else {
            std::cout << describe_outcome(pipeline.run_stage(chosen)) << "\n";
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const DependencyError& e) {
        std::cerr << "dependency error: " << e.what() << "\n";
        return kExitIntegrity;
    } catch (const IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return kExitIntegrity;
    } catch (const ParseError& e) {
        std::cerr << "artifact parse error: " << e.what() << "\n";
        return kExitIntegrity;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitGeneric;
    }
}

}  // namespace clozegen::orchestrator
