#pragma once

#include <cstdint>
#include <vector>

#include "fedlora/lora.hpp"
#include "fedlora/matrix.hpp"

namespace fedlora {

/// Supervised regression samples, one per row.
struct Dataset {
    Matrix inputs;   // count x n
    Matrix targets;  // count x m
    int count() const { return inputs.rows(); }
};

/// Linear network of LoRA layers (identity activation) under MSE loss,
/// averaged over samples and output entries.
struct ToyModel {
    std::vector<LoraLayer> layers;
};

struct TrainConfig {
    double learning_rate = 0.01;
    int local_epochs = 1;
    int batch_size = 32;
    std::uint64_t seed = 0;
    bool train_a = true;  // cleared for the B-only baseline
};

struct AdapterGrads {
    Matrix da;
    Matrix db;
};

/// Thrown when the local loss stops being finite.
struct TrainingError : std::runtime_error {
    int epoch;
    TrainingError(const std::string& what, int epoch_index)
        : std::runtime_error(what), epoch(epoch_index) {}
};

/// Per-client regression data around a shared ground-truth map. Each
/// client i observes y = (W* + heterogeneity * H_i) x + noise with H_i a
/// seeded per-client perturbation of the same Frobenius norm as the
/// ground-truth delta; heterogeneity 0 makes all clients draws from the
/// identical map.
std::vector<Dataset> make_task(int m, int n, int clients, int samples_per_client,
                               double heterogeneity, std::uint64_t seed);

/// Fresh model with seeded Gaussian bases and standard adapter init,
/// identical across any clients constructed from it. Hidden layers are
/// n x n; the final layer maps n to m.
ToyModel make_model(int m, int n, int depth, int rank, double alpha, std::uint64_t seed);

std::vector<double> forward(const ToyModel& model, const std::vector<double>& x);

/// Exact MSE gradients for every adapter pair; the frozen bases receive none.
std::vector<AdapterGrads> grads(const ToyModel& model, const Dataset& batch);

/// Mean loss of the model over a dataset.
double dataset_loss(const ToyModel& model, const Dataset& data);

/// Mini-batch SGD on the adapters only: one seeded shuffle per epoch, then
/// fixed-stride batches. The frozen bases are bitwise untouched.
ToyModel local_train(ToyModel model, const Dataset& data, const TrainConfig& cfg);

}  // namespace fedlora
