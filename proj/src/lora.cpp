#include "fedlora/lora.hpp"

#include <stdexcept>
#include <string>

#include "fedlora/linalg.hpp"
#include "fedlora/rng.hpp"

namespace fedlora {

LoraAdapter init_adapter(int m, int n, int rank, double alpha, std::uint64_t seed) {
    if (rank < 1 || rank > std::min(m, n)) {
        throw std::invalid_argument("init_adapter: rank " + std::to_string(rank) +
                                    " outside [1, min(" + std::to_string(m) + ", " +
                                    std::to_string(n) + ")]");
    }
    if (alpha <= 0.0) {
        throw std::invalid_argument("init_adapter: alpha must be positive");
    }
    LoraAdapter adapter;
    adapter.rank = rank;
    adapter.alpha = alpha;
    adapter.b = Matrix(m, rank);
    adapter.a = gaussian_matrix(rank, n, 0.02, seed);
    return adapter;
}

Matrix effective_weight(const LoraLayer& layer) {
    Matrix w = layer.w0;
    add_scaled(w, matmul(layer.adapter.b, layer.adapter.a), layer.adapter.scaling());
    return w;
}

void merge_residual(LoraLayer& layer, const Matrix& residual) {
    if (!residual.same_shape(layer.w0)) {
        throw std::invalid_argument("merge_residual: residual shape " +
                                    std::to_string(residual.rows()) + "x" +
                                    std::to_string(residual.cols()) + " does not match base " +
                                    std::to_string(layer.w0.rows()) + "x" +
                                    std::to_string(layer.w0.cols()));
    }
    add_scaled(layer.w0, residual, layer.adapter.scaling());
}

}  // namespace fedlora
