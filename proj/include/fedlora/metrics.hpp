#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedlora/federation.hpp"
#include "fedlora/report.hpp"

namespace fedlora {

/// Scaled divergence between averaging adapter products and multiplying
/// averaged adapters: s * ||mean(B_i A_i) - mean(B_i) mean(A_i)||_F /
/// sqrt(m*n). Measures the clients' adapters as they stand, independent of
/// any strategy. Zero for k = 1 or identical clients.
double divergence_norm(const std::vector<ClientState>& clients, int layer_index);

/// Closed-form per-round parameter counts, summed over clients and layers.
/// `layer_dims` lists (out_dim, in_dim) per layer; `residual_ranks` gives
/// the numerical rank of each layer's merged residual (used by FedExLora;
/// FedExTruncated charges its truncation rank instead). Residuals ship as
/// q,r factors costing rank*(m+n) when k*r*(m+n) < m*n, else as dense m*n.
CommLedger comm_cost(const AggregationStrategy& strategy, int clients,
                     const std::vector<std::pair<int, int>>& layer_dims, int rank,
                     const std::vector<int>& residual_ranks = {}, int round = 0);

/// Writes metrics.csv (one row per round and layer) and summary.json under
/// `out_dir`, creating it if needed. Deterministic byte-for-byte for equal
/// inputs. `failed_at_round`, when set, marks a run that aborted before
/// completing that round; the reports list may then be empty. Throws
/// std::runtime_error naming the path on I/O failure.
void emit_reports(const std::vector<RoundReport>& reports, const std::string& out_dir,
                  std::optional<int> failed_at_round = std::nullopt);

/// The CSV rendering of `reports` as a string (header + one row per round
/// and layer). emit_reports writes exactly this to metrics.csv.
std::string render_csv(const std::vector<RoundReport>& reports);

/// The summary JSON rendering written by emit_reports.
std::string render_summary(const std::vector<RoundReport>& reports,
                           std::optional<int> failed_at_round = std::nullopt);

}  // namespace fedlora
