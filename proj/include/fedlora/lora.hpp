#pragma once

#include <cstdint>

#include "fedlora/matrix.hpp"

namespace fedlora {

/// Trainable low-rank adapter pair for one frozen weight. The update it
/// represents is scaling() * b * a; the alpha/rank factor is applied at
/// use sites and never folded into the stored factors.
struct LoraAdapter {
    Matrix a;      // rank x n
    Matrix b;      // m x rank
    int rank = 0;
    double alpha = 1.0;

    double scaling() const { return alpha / rank; }
};

/// Frozen base weight plus its adapter. The base is mutated only by
/// residual merges, never by gradient steps.
struct LoraLayer {
    Matrix w0;  // m x n
    LoraAdapter adapter;

    int out_dim() const { return w0.rows(); }
    int in_dim() const { return w0.cols(); }
};

/// b starts at zero and a at N(0, 0.02^2), so the initial update is
/// exactly zero. Deterministic per seed.
LoraAdapter init_adapter(int m, int n, int rank, double alpha, std::uint64_t seed);

/// w0 + scaling * b * a. Does not mutate the layer.
Matrix effective_weight(const LoraLayer& layer);

/// w0 += scaling * residual. The residual arrives in unscaled b*a units;
/// the alpha/rank factor is applied exactly once, here.
void merge_residual(LoraLayer& layer, const Matrix& residual);

}  // namespace fedlora
