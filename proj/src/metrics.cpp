#include "fedlora/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "fedlora/linalg.hpp"

namespace fedlora {
namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Shortest round-trip decimal rendering; locale-independent, so emitted
// files are byte-stable across runs.
std::string fmt_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace

double divergence_norm(const std::vector<ClientState>& clients, int layer_index) {
    require(!clients.empty(), "divergence_norm: client list is empty");
    const std::size_t depth = clients.front().model.layers.size();
    require(layer_index >= 0 && static_cast<std::size_t>(layer_index) < depth,
            "divergence_norm: layer index out of range");
    const std::size_t l = static_cast<std::size_t>(layer_index);
    const double inv = 1.0 / static_cast<double>(clients.size());

    const LoraLayer& proto = clients.front().model.layers[l];
    Matrix product_mean = matmul(proto.adapter.b, proto.adapter.a);
    LoraAdapter avg = proto.adapter;
    for (std::size_t i = 1; i < clients.size(); ++i) {
        const LoraAdapter& ai = clients[i].model.layers[l].adapter;
        product_mean = add(product_mean, matmul(ai.b, ai.a));
        avg.a = add(avg.a, ai.a);
        avg.b = add(avg.b, ai.b);
    }
    product_mean = scale(product_mean, inv);
    avg.a = scale(avg.a, inv);
    avg.b = scale(avg.b, inv);

    const Matrix diff = sub(product_mean, matmul(avg.b, avg.a));
    const double entries =
        static_cast<double>(proto.out_dim()) * static_cast<double>(proto.in_dim());
    return proto.adapter.scaling() * frobenius_norm(diff) / std::sqrt(entries);
}

CommLedger comm_cost(const AggregationStrategy& strategy, int clients,
                     const std::vector<std::pair<int, int>>& layer_dims, int rank,
                     const std::vector<int>& residual_ranks, int round) {
    require(clients >= 1, "comm_cost: need at least one client");
    require(rank >= 1, "comm_cost: rank must be positive");
    require(!layer_dims.empty(), "comm_cost: no layers");

    CommLedger ledger;
    ledger.round = round;
    const std::int64_t k = clients;
    const std::int64_t r = rank;

    for (std::size_t l = 0; l < layer_dims.size(); ++l) {
        const std::int64_t m = layer_dims[l].first;
        const std::int64_t n = layer_dims[l].second;
        require(m >= 1 && n >= 1, "comm_cost: layer dims must be positive");
        std::int64_t uplink = 0;
        std::int64_t down_per_client = 0;
        switch (strategy.kind) {
            case StrategyKind::DenseOracle:
                uplink = k * m * n;
                down_per_client = m * n;
                break;
            case StrategyKind::FedIt:
                uplink = k * (m * r + r * n);
                down_per_client = m * r + r * n;
                break;
            case StrategyKind::FfaLora:
                uplink = k * (m * r);
                down_per_client = m * r;
                break;
            case StrategyKind::FedExLora:
            case StrategyKind::FedExTruncated: {
                uplink = k * (m * r + r * n);
                std::int64_t rho;
                if (strategy.kind == StrategyKind::FedExTruncated) {
                    rho = strategy.truncation_rank;
                } else if (l < residual_ranks.size()) {
                    rho = residual_ranks[l];
                } else {
                    rho = k * r;  // rank cap, when the true rank is unknown
                }
                const bool factored = k * r * (m + n) < m * n;
                const std::int64_t residual_cost = factored ? rho * (m + n) : m * n;
                down_per_client = m * r + r * n + residual_cost;
                break;
            }
        }
        ledger.uplink_params += uplink;
        ledger.downlink_params += k * down_per_client;
    }
    return ledger;
}

std::string render_csv(const std::vector<RoundReport>& reports) {
    std::string out =
        "round,strategy,layer,divergence,residual_rank,uplink_params,downlink_params,"
        "mean_loss\n";
    for (const RoundReport& rep : reports) {
        for (std::size_t l = 0; l < rep.divergence.size(); ++l) {
            out += std::to_string(rep.round);
            out += ',';
            out += rep.strategy;
            out += ',';
            out += std::to_string(l);
            out += ',';
            out += fmt_double(rep.divergence[l]);
            out += ',';
            out += std::to_string(l < rep.residual_rank.size() ? rep.residual_rank[l] : 0);
            out += ',';
            out += std::to_string(rep.comm.uplink_params);
            out += ',';
            out += std::to_string(rep.comm.downlink_params);
            out += ',';
            out += fmt_double(rep.mean_client_loss);
            out += '\n';
        }
    }
    return out;
}

std::string render_summary(const std::vector<RoundReport>& reports,
                           std::optional<int> failed_at_round) {
    require(!reports.empty() || failed_at_round.has_value(),
            "render_summary: no reports");
    nlohmann::ordered_json summary;
    summary["strategy"] = reports.empty() ? "" : reports.front().strategy;
    summary["rounds"] = reports.size();
    if (reports.empty()) {
        summary["final_mean_loss"] = nullptr;
        summary["max_exactness_gap"] = nullptr;
    } else {
        summary["final_mean_loss"] = reports.back().mean_client_loss;
        double max_gap = 0.0;
        for (const RoundReport& rep : reports) {
            for (double g : rep.exactness_gap_rel) max_gap = std::max(max_gap, g);
        }
        summary["max_exactness_gap"] = max_gap;
    }
    std::int64_t up = 0;
    std::int64_t down = 0;
    for (const RoundReport& rep : reports) {
        up += rep.comm.uplink_params;
        down += rep.comm.downlink_params;
    }
    summary["total_uplink_params"] = up;
    summary["total_downlink_params"] = down;
    if (failed_at_round.has_value()) {
        summary["failed_at_round"] = *failed_at_round;
    }
    return summary.dump(2) + "\n";
}

void emit_reports(const std::vector<RoundReport>& reports, const std::string& out_dir,
                  std::optional<int> failed_at_round) {
    require(!reports.empty() || failed_at_round.has_value(), "emit_reports: no reports");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw std::runtime_error("cannot create output directory: " + out_dir + " (" +
                                 ec.message() + ")");
    }
    const std::filesystem::path dir(out_dir);
    write_file((dir / "metrics.csv").string(), render_csv(reports));
    write_file((dir / "summary.json").string(), render_summary(reports, failed_at_round));
}

}  // namespace fedlora
