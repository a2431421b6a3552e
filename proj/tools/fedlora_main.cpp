#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedlora/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Federated LoRA aggregation simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run one experiment and write its artifacts");
    std::optional<std::string> config_path;
    fedlora::ConfigOverrides ov;
    run->add_option("--config", config_path, "JSON config file (flags override it)");
    run->add_option("--strategy", ov.strategy,
                    "dense-oracle|fedit|ffa-lora|fedex-lora|fedex-trunc");
    run->add_option("--clients", ov.clients, "number of clients");
    run->add_option("--rank", ov.rank, "adapter rank");
    run->add_option("--rounds", ov.rounds, "aggregation rounds");
    run->add_option("--local-epochs", ov.local_epochs, "local epochs per round");
    run->add_option("--seed", ov.seed, "RNG seed (FEDLORA_SEED is the fallback)");
    run->add_option("--heterogeneity", ov.heterogeneity, "client data spread, in [0, 1]");
    run->add_option("--truncation-rank", ov.truncation_rank,
                    "residual rank for fedex-trunc");
    run->add_option("--assignment", ov.assignment,
                    "average|reinit|keep-local (fedex-lora only)");
    run->add_option("--out-dir", ov.out_dir, "artifact directory");

    auto* cmp = app.add_subcommand("compare", "Run several configs, merge their metrics");
    std::vector<std::string> config_paths;
    std::string out_csv;
    bool allow_mixed = false;
    cmp->add_option("--configs", config_paths, "JSON config files")
        ->required()
        ->expected(-1);
    cmp->add_option("--out", out_csv, "merged CSV path")->required();
    cmp->add_flag("--allow-mixed", allow_mixed,
                  "permit configs that differ beyond strategy/assignment/epochs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const fedlora::ExperimentConfig cfg = fedlora::parse_config(config_path, ov);
            const fedlora::ExperimentResult result = fedlora::run_experiment(cfg);
            if (result.failed_at_round.has_value()) {
                std::fprintf(stderr,
                             "training failed at round %d; partial metrics written to %s\n",
                             *result.failed_at_round, cfg.out_dir.c_str());
            } else {
                std::printf("%s: %zu rounds, final mean loss %.6g, artifacts in %s\n",
                            cfg.strategy.c_str(), result.reports.size(),
                            result.reports.back().mean_client_loss, cfg.out_dir.c_str());
            }
            return result.exit_code;
        }
        fedlora::compare_runs(config_paths, out_csv, allow_mixed);
        std::printf("wrote %s\n", out_csv.c_str());
        return 0;
    } catch (const fedlora::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
