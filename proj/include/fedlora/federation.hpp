#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedlora/linalg.hpp"
#include "fedlora/lora.hpp"
#include "fedlora/report.hpp"
#include "fedlora/task.hpp"

namespace fedlora {

/// How the server combines client adapters each round.
///
/// DenseOracle      fold the exact mean update into the base weights and
///                  resynchronize clients (ground-truth reference, not a
///                  low-rank method; communicates dense matrices).
/// FedIt            average A and B independently; drops the product
///                  residual, so aggregation is inexact.
/// FfaLora          A frozen at its shared init; only B is trained and
///                  averaged. Exact by construction, less expressive.
/// FedExLora        average adapters and merge the product residual into
///                  the frozen base weights; exact.
/// FedExTruncated   FedExLora with the residual replaced by its best
///                  rank-r' approximation before merging.
enum class StrategyKind {
    DenseOracle,
    FedIt,
    FfaLora,
    FedExLora,
    FedExTruncated,
};

/// What clients hold after an exact (FedExLora) aggregation step. All
/// variants leave every client with the same effective weight; they differ
/// in how that weight splits between base and adapters.
enum class Assignment {
    Average,        // all clients adopt the averaged adapters
    Reinitialize,   // fresh adapters (B = 0, new shared A); full mean update merged
    KeepLocal,      // clients keep their own adapters; per-client offset merged
};

struct AggregationStrategy {
    StrategyKind kind = StrategyKind::FedExLora;
    Assignment assignment = Assignment::Average;
    int truncation_rank = 0;  // required (>= 1) for FedExTruncated
};

std::string strategy_name(const AggregationStrategy& strategy);
std::string assignment_name(Assignment assignment);

struct ClientState {
    int id = 0;
    ToyModel model;
    Dataset data;
    TrainConfig cfg;
};

struct ServerState {
    AggregationStrategy strategy;
    int round = 0;
    // Dense ideal weights per layer (base + scaled mean of adapter
    // products), recorded from the pre-aggregation states of the most
    // recent aggregate() call. Used for exactness metrics only.
    std::vector<Matrix> reference_dense;
    // Seeds the fresh shared A whenever adapters are reinitialized
    // (DenseOracle resync and the Reinitialize assignment).
    std::uint64_t resync_seed = 0;
};

/// Per-layer outcome of one aggregation step. `residual` is the matrix
/// actually merged into the base weights (zero for strategies that merge
/// nothing), in unscaled B·A units. `factors` is present when the residual
/// was cheaper to transmit in factored form; factors.q * factors.r
/// reconstructs `residual`.
struct LayerAggregate {
    Matrix a_global;
    Matrix b_global;
    Matrix residual;
    std::optional<QrFactors> factors;
};

struct AggregationResult {
    std::vector<LayerAggregate> layers;
    CommLedger comm;
};

/// Entrywise uniform means of the client adapters, per layer.
std::vector<LoraAdapter> average_adapters(const std::vector<ClientState>& clients);

/// Per layer: mean of the client products B_i·A_i minus the product of the
/// mean adapters, in unscaled units. Zero when clients agree or k = 1.
std::vector<Matrix> compute_residual(const std::vector<ClientState>& clients);

/// Runs one aggregation step for the server's strategy, mutating the
/// clients in place and recording the dense ideal weights on the server.
/// Increments server.round by exactly 1.
AggregationResult aggregate(ServerState& server, std::vector<ClientState>& clients);

/// Per-layer Frobenius distance between the clients' post-aggregation
/// effective weights and the dense ideal recorded by the last aggregate()
/// (max over clients; exact strategies keep this at rounding level).
std::vector<double> exactness_gap(const ServerState& server,
                                  const std::vector<ClientState>& clients);

/// One communication round: train every client locally (in parallel),
/// aggregate, and collect metrics. The report's round number is the
/// server's post-aggregation round count (1-based).
RoundReport run_round(ServerState& server, std::vector<ClientState>& clients);

/// Distributes copies of the global model over the data shards. Client i
/// trains with a seed derived from cfg.seed and i, so runs are
/// reproducible but clients do not share shuffle streams.
std::vector<ClientState> make_clients(const ToyModel& model,
                                      const std::vector<Dataset>& shards,
                                      const TrainConfig& cfg);

}  // namespace fedlora
