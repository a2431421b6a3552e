#include "fedlora/experiment.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <utility>

#include "json.hpp"

#include "fedlora/metrics.hpp"
#include "fedlora/rng.hpp"
#include "fedlora/task.hpp"

namespace fedlora {
namespace {

// Seed stream tags; distinct from the tags inside task.cpp and
// federation.cpp so no generator is shared between purposes.
constexpr std::uint64_t kStreamModel = 21;
constexpr std::uint64_t kStreamResync = 22;

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

std::int64_t int_field(const ordered_json& j, const std::string& key) {
    if (!j.is_number_integer() && !j.is_number_unsigned()) {
        fail("config key '" + key + "' must be an integer");
    }
    return j.get<std::int64_t>();
}

double real_field(const ordered_json& j, const std::string& key) {
    if (!j.is_number()) fail("config key '" + key + "' must be a number");
    return j.get<double>();
}

std::string string_field(const ordered_json& j, const std::string& key) {
    if (!j.is_string()) fail("config key '" + key + "' must be a string");
    return j.get<std::string>();
}

std::uint64_t seed_field(const ordered_json& j) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer() && j.get<std::int64_t>() >= 0) {
        return static_cast<std::uint64_t>(j.get<std::int64_t>());
    }
    fail("config key 'seed' must be a non-negative integer");
}

void apply_file(ExperimentConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open config file: " + path);
    ordered_json doc;
    try {
        doc = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail("invalid JSON in " + path + ": " + e.what());
    }
    if (!doc.is_object()) fail("config file must hold a JSON object: " + path);

    for (const auto& [key, value] : doc.items()) {
        if (key == "strategy") cfg.strategy = string_field(value, key);
        else if (key == "clients") cfg.clients = static_cast<int>(int_field(value, key));
        else if (key == "rank") cfg.rank = static_cast<int>(int_field(value, key));
        else if (key == "alpha") cfg.alpha = real_field(value, key);
        else if (key == "rounds") cfg.rounds = static_cast<int>(int_field(value, key));
        else if (key == "local_epochs") cfg.local_epochs = static_cast<int>(int_field(value, key));
        else if (key == "out_dim") cfg.out_dim = static_cast<int>(int_field(value, key));
        else if (key == "in_dim") cfg.in_dim = static_cast<int>(int_field(value, key));
        else if (key == "depth") cfg.depth = static_cast<int>(int_field(value, key));
        else if (key == "samples_per_client")
            cfg.samples_per_client = static_cast<int>(int_field(value, key));
        else if (key == "heterogeneity") cfg.heterogeneity = real_field(value, key);
        else if (key == "learning_rate") cfg.learning_rate = real_field(value, key);
        else if (key == "batch_size") cfg.batch_size = static_cast<int>(int_field(value, key));
        else if (key == "seed") cfg.seed = seed_field(value);
        else if (key == "truncation_rank")
            cfg.truncation_rank = static_cast<int>(int_field(value, key));
        else if (key == "assignment") cfg.assignment = string_field(value, key);
        else if (key == "out_dir") cfg.out_dir = string_field(value, key);
        else fail("unknown config key '" + key + "' in " + path);
    }
}

void apply_env_seed(ExperimentConfig& cfg) {
    const char* env = std::getenv("FEDLORA_SEED");
    if (env == nullptr || *env == '\0') return;
    errno = 0;
    char* end = nullptr;
    const unsigned long long parsed = std::strtoull(env, &end, 10);
    if (errno != 0 || end == env || *end != '\0') {
        fail("FEDLORA_SEED must be an unsigned integer, got '" + std::string(env) + "'");
    }
    cfg.seed = static_cast<std::uint64_t>(parsed);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + path);
}

void check_comparable(const ExperimentConfig& base, const ExperimentConfig& other,
                      const std::string& other_path) {
    const auto differs = [&](const char* key) {
        fail("config " + other_path + " differs from the first config in '" + key +
             "'; pass --allow-mixed to combine anyway");
    };
    if (base.clients != other.clients) differs("clients");
    if (base.rank != other.rank) differs("rank");
    if (base.alpha != other.alpha) differs("alpha");
    if (base.rounds != other.rounds) differs("rounds");
    if (base.out_dim != other.out_dim) differs("out_dim");
    if (base.in_dim != other.in_dim) differs("in_dim");
    if (base.depth != other.depth) differs("depth");
    if (base.samples_per_client != other.samples_per_client) differs("samples_per_client");
    if (base.heterogeneity != other.heterogeneity) differs("heterogeneity");
    if (base.learning_rate != other.learning_rate) differs("learning_rate");
    if (base.batch_size != other.batch_size) differs("batch_size");
    if (base.seed != other.seed) differs("seed");
}

}  // namespace

ExperimentConfig parse_config(const std::optional<std::string>& config_path,
                              const ConfigOverrides& overrides) {
    ExperimentConfig cfg;
    apply_env_seed(cfg);
    if (config_path.has_value()) apply_file(cfg, *config_path);

    if (overrides.strategy) cfg.strategy = *overrides.strategy;
    if (overrides.clients) cfg.clients = *overrides.clients;
    if (overrides.rank) cfg.rank = *overrides.rank;
    if (overrides.rounds) cfg.rounds = *overrides.rounds;
    if (overrides.local_epochs) cfg.local_epochs = *overrides.local_epochs;
    if (overrides.seed) cfg.seed = *overrides.seed;
    if (overrides.heterogeneity) cfg.heterogeneity = *overrides.heterogeneity;
    if (overrides.truncation_rank) cfg.truncation_rank = *overrides.truncation_rank;
    if (overrides.assignment) cfg.assignment = *overrides.assignment;
    if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;

    validate_config(cfg);
    return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
    const bool known_strategy =
        cfg.strategy == "dense-oracle" || cfg.strategy == "fedit" ||
        cfg.strategy == "ffa-lora" || cfg.strategy == "fedex-lora" ||
        cfg.strategy == "fedex-trunc";
    if (!known_strategy) {
        fail("strategy must be one of dense-oracle|fedit|ffa-lora|fedex-lora|fedex-trunc, "
             "got '" + cfg.strategy + "'");
    }
    if (cfg.clients < 1) fail("clients must be >= 1");
    if (cfg.out_dim < 1) fail("out_dim must be >= 1");
    if (cfg.in_dim < 1) fail("in_dim must be >= 1");
    if (cfg.depth < 1) fail("depth must be >= 1");
    if (cfg.rank < 1) fail("rank must be >= 1");
    if (cfg.rank > std::min(cfg.out_dim, cfg.in_dim)) {
        fail("rank must be <= min(out_dim, in_dim)");
    }
    if (!(cfg.alpha > 0.0)) fail("alpha must be positive");
    if (cfg.rounds < 1) fail("rounds must be >= 1");
    if (cfg.local_epochs < 1) fail("local_epochs must be >= 1");
    if (cfg.samples_per_client < 1) fail("samples_per_client must be >= 1");
    if (!(cfg.heterogeneity >= 0.0 && cfg.heterogeneity <= 1.0)) {
        fail("heterogeneity must lie in [0, 1]");
    }
    if (!(cfg.learning_rate > 0.0)) fail("learning_rate must be positive");
    if (cfg.batch_size < 1) fail("batch_size must be >= 1");
    if (cfg.batch_size > cfg.samples_per_client) {
        fail("batch_size must be <= samples_per_client");
    }
    if (cfg.strategy == "fedex-trunc") {
        if (cfg.truncation_rank < 1) {
            fail("truncation_rank is required (>= 1) when strategy = fedex-trunc");
        }
        if (cfg.truncation_rank > cfg.clients * cfg.rank) {
            fail("truncation_rank must be <= clients * rank");
        }
    } else if (cfg.truncation_rank != 0) {
        fail("truncation_rank only applies when strategy = fedex-trunc");
    }
    const bool known_assignment = cfg.assignment == "average" ||
                                  cfg.assignment == "reinit" ||
                                  cfg.assignment == "keep-local";
    if (!known_assignment) {
        fail("assignment must be one of average|reinit|keep-local, got '" +
             cfg.assignment + "'");
    }
    if (cfg.assignment != "average" && cfg.strategy != "fedex-lora") {
        fail("assignment variants only apply when strategy = fedex-lora");
    }
    if (cfg.out_dir.empty()) fail("out_dir must not be empty");
}

AggregationStrategy strategy_from_config(const ExperimentConfig& cfg) {
    AggregationStrategy strat;
    if (cfg.strategy == "dense-oracle") strat.kind = StrategyKind::DenseOracle;
    else if (cfg.strategy == "fedit") strat.kind = StrategyKind::FedIt;
    else if (cfg.strategy == "ffa-lora") strat.kind = StrategyKind::FfaLora;
    else if (cfg.strategy == "fedex-lora") strat.kind = StrategyKind::FedExLora;
    else if (cfg.strategy == "fedex-trunc") strat.kind = StrategyKind::FedExTruncated;
    else fail("strategy must be one of dense-oracle|fedit|ffa-lora|fedex-lora|fedex-trunc");

    if (cfg.assignment == "average") strat.assignment = Assignment::Average;
    else if (cfg.assignment == "reinit") strat.assignment = Assignment::Reinitialize;
    else if (cfg.assignment == "keep-local") strat.assignment = Assignment::KeepLocal;
    else fail("assignment must be one of average|reinit|keep-local");

    strat.truncation_rank = cfg.truncation_rank;
    return strat;
}

std::string render_config_echo(const ExperimentConfig& cfg) {
    ordered_json echo;
    echo["strategy"] = cfg.strategy;
    echo["clients"] = cfg.clients;
    echo["rank"] = cfg.rank;
    echo["alpha"] = cfg.alpha;
    echo["rounds"] = cfg.rounds;
    echo["local_epochs"] = cfg.local_epochs;
    echo["out_dim"] = cfg.out_dim;
    echo["in_dim"] = cfg.in_dim;
    echo["depth"] = cfg.depth;
    echo["samples_per_client"] = cfg.samples_per_client;
    echo["heterogeneity"] = cfg.heterogeneity;
    echo["learning_rate"] = cfg.learning_rate;
    echo["batch_size"] = cfg.batch_size;
    echo["seed"] = cfg.seed;
    echo["truncation_rank"] = cfg.truncation_rank;
    echo["assignment"] = cfg.assignment;
    echo["out_dir"] = cfg.out_dir;
    return echo.dump(2) + "\n";
}

ExperimentResult simulate(const ExperimentConfig& cfg) {
    validate_config(cfg);

    ServerState server;
    server.strategy = strategy_from_config(cfg);
    server.resync_seed = mix_seed(cfg.seed, kStreamResync);

    const std::vector<Dataset> shards =
        make_task(cfg.out_dim, cfg.in_dim, cfg.clients, cfg.samples_per_client,
                  cfg.heterogeneity, cfg.seed);
    const ToyModel model = make_model(cfg.out_dim, cfg.in_dim, cfg.depth, cfg.rank,
                                      cfg.alpha, mix_seed(cfg.seed, kStreamModel));
    TrainConfig train_cfg;
    train_cfg.learning_rate = cfg.learning_rate;
    train_cfg.local_epochs = cfg.local_epochs;
    train_cfg.batch_size = cfg.batch_size;
    train_cfg.seed = cfg.seed;
    std::vector<ClientState> clients = make_clients(model, shards, train_cfg);

    ExperimentResult result;
    result.reports.reserve(static_cast<std::size_t>(cfg.rounds));
    try {
        for (int round = 0; round < cfg.rounds; ++round) {
            result.reports.push_back(run_round(server, clients));
        }
    } catch (const TrainingError&) {
        result.failed_at_round = server.round + 1;  // the round that was in flight
        result.exit_code = 3;
    }
    return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) {
        throw std::runtime_error("cannot create output directory: " + cfg.out_dir +
                                 " (" + ec.message() + ")");
    }
    const std::filesystem::path dir(cfg.out_dir);
    write_text_file((dir / "config_echo.json").string(), render_config_echo(cfg));

    ExperimentResult result = simulate(cfg);
    emit_reports(result.reports, cfg.out_dir, result.failed_at_round);
    return result;
}

void compare_runs(const std::vector<std::string>& config_paths, const std::string& out_csv,
                  bool allow_mixed) {
    if (config_paths.empty()) fail("compare needs at least one config");
    if (out_csv.empty()) fail("compare needs a non-empty --out path");

    std::vector<ExperimentConfig> configs;
    configs.reserve(config_paths.size());
    for (const std::string& path : config_paths) {
        configs.push_back(parse_config(path, ConfigOverrides{}));
    }
    if (!allow_mixed) {
        for (std::size_t i = 1; i < configs.size(); ++i) {
            check_comparable(configs.front(), configs[i], config_paths[i]);
        }
    }

    std::string merged =
        "run_id,round,strategy,layer,divergence,residual_rank,uplink_params,"
        "downlink_params,mean_loss\n";
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const ExperimentResult result = simulate(configs[i]);
        if (result.failed_at_round.has_value()) {
            throw std::runtime_error("compare: run " + std::to_string(i) + " (" +
                                     config_paths[i] + ") failed training at round " +
                                     std::to_string(*result.failed_at_round));
        }
        const std::string run_id = "run" + std::to_string(i);
        const std::string csv = render_csv(result.reports);
        std::size_t line_start = csv.find('\n') + 1;  // skip the header
        while (line_start < csv.size()) {
            std::size_t line_end = csv.find('\n', line_start);
            merged += run_id;
            merged += ',';
            merged.append(csv, line_start, line_end - line_start + 1);
            line_start = line_end + 1;
        }
    }

    const std::filesystem::path out_path(out_csv);
    if (out_path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(out_path.parent_path(), ec);
        if (ec) {
            throw std::runtime_error("cannot create output directory: " +
                                     out_path.parent_path().string() + " (" +
                                     ec.message() + ")");
        }
    }
    write_text_file(out_csv, merged);
}

}  // namespace fedlora
