#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fedlora {

/// Scalar counts transmitted in one aggregation round, summed over
/// clients and layers. Counts parameters, not bytes.
struct CommLedger {
    std::int64_t uplink_params = 0;
    std::int64_t downlink_params = 0;
    int round = 0;
};

/// Per-round metrics record. Divergence, residual rank and exactness gap
/// are per layer; the loss is the post-aggregation mean over clients.
struct RoundReport {
    int round = 0;
    std::string strategy;
    std::vector<double> divergence;
    std::vector<int> residual_rank;
    std::vector<double> exactness_gap;      // absolute Frobenius, per layer
    std::vector<double> exactness_gap_rel;  // gap / max(1, ||ideal||_F)
    double mean_client_loss = 0.0;
    CommLedger comm;
};

}  // namespace fedlora
