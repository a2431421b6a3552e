#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedlora/federation.hpp"
#include "fedlora/report.hpp"

namespace fedlora {

/// Everything one experiment run depends on. Field names double as the
/// JSON config keys and (where exposed) the CLI flag names.
struct ExperimentConfig {
    std::string strategy = "fedex-lora";
    int clients = 3;
    int rank = 4;
    double alpha = 8.0;
    int rounds = 15;
    int local_epochs = 3;
    int out_dim = 32;
    int in_dim = 32;
    int depth = 2;
    int samples_per_client = 256;
    double heterogeneity = 0.0;
    double learning_rate = 0.02;
    int batch_size = 16;
    std::uint64_t seed = 42;
    int truncation_rank = 0;  // required iff strategy == "fedex-trunc"
    std::string assignment = "average";
    std::string out_dir = "out";
};

/// Command-line values layered over file values and defaults.
struct ConfigOverrides {
    std::optional<std::string> strategy;
    std::optional<int> clients;
    std::optional<int> rank;
    std::optional<int> rounds;
    std::optional<int> local_epochs;
    std::optional<std::uint64_t> seed;
    std::optional<double> heterogeneity;
    std::optional<int> truncation_rank;
    std::optional<std::string> assignment;
    std::optional<std::string> out_dir;
};

/// Raised for malformed or inconsistent configuration; the message names
/// the offending key.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Resolves a config from (defaults, FEDLORA_SEED env, JSON file, flag
/// overrides), later sources winning, then validates it. The file path is
/// optional; unknown file keys are errors.
ExperimentConfig parse_config(const std::optional<std::string>& config_path,
                              const ConfigOverrides& overrides);

/// Throws ConfigError naming the violated key; no-op on valid configs.
void validate_config(const ExperimentConfig& cfg);

AggregationStrategy strategy_from_config(const ExperimentConfig& cfg);

/// JSON echo of every effective parameter, defaults included.
std::string render_config_echo(const ExperimentConfig& cfg);

struct ExperimentResult {
    std::vector<RoundReport> reports;
    std::optional<int> failed_at_round;
    int exit_code = 0;
};

/// Runs all rounds in memory without touching the filesystem.
ExperimentResult simulate(const ExperimentConfig& cfg);

/// simulate() plus artifacts: writes config_echo.json, metrics.csv and
/// summary.json under cfg.out_dir. Deterministic per (config, seed).
/// exit_code is 0 on success, 3 when training aborted (artifacts then
/// carry a failed_at_round marker).
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Runs every config and writes a single CSV prefixed with a run_id
/// column ("run0", "run1", ... in argument order). Unless allow_mixed,
/// configs may differ only in strategy, assignment, truncation rank,
/// local epochs and out_dir.
void compare_runs(const std::vector<std::string>& config_paths, const std::string& out_csv,
                  bool allow_mixed);

}  // namespace fedlora
