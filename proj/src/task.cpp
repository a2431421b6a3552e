#include "fedlora/task.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fedlora/linalg.hpp"
#include "fedlora/rng.hpp"

namespace fedlora {

namespace {

constexpr double kNoiseStd = 0.01;

// Seed stream tags for make_task / make_model substreams.
enum : std::uint64_t {
    kStreamTruth = 0x74727574,
    kStreamDelta = 0x64656c74,
    kStreamClient = 0x636c6e74,
    kStreamBase = 0x62617365,
    kStreamAdapter = 0x61646170,
};

}  // namespace

std::vector<Dataset> make_task(int m, int n, int clients, int samples_per_client,
                               double heterogeneity, std::uint64_t seed) {
    if (clients < 1) throw std::invalid_argument("make_task: clients must be >= 1");
    if (m < 1 || n < 1 || samples_per_client < 1) {
        throw std::invalid_argument("make_task: dimensions and sample count must be >= 1");
    }
    if (heterogeneity < 0.0 || heterogeneity > 1.0) {
        throw std::invalid_argument("make_task: heterogeneity outside [0, 1]");
    }

    // Shared ground truth: a base map plus a dense delta, both O(1) row norm.
    const Matrix w_base = gaussian_matrix(m, n, 1.0 / std::sqrt(n), mix_seed(seed, kStreamTruth));
    const Matrix delta = gaussian_matrix(m, n, 0.5 / std::sqrt(n), mix_seed(seed, kStreamDelta));
    const Matrix w_star = add(w_base, delta);
    const double delta_norm = frobenius_norm(delta);

    std::vector<Dataset> out;
    out.reserve(static_cast<std::size_t>(clients));
    for (int c = 0; c < clients; ++c) {
        auto rng = make_rng(mix_seed(seed, kStreamClient, static_cast<std::uint64_t>(c)));

        Matrix h(m, n);
        fill_gaussian(h, 1.0, rng);
        const double h_norm = frobenius_norm(h);
        Matrix w_client = w_star;
        if (h_norm > 0.0) add_scaled(w_client, h, heterogeneity * delta_norm / h_norm);

        Dataset d;
        d.inputs = Matrix(samples_per_client, n);
        fill_gaussian(d.inputs, 1.0, rng);
        d.targets = matmul(d.inputs, transpose(w_client));
        Matrix noise(samples_per_client, m);
        fill_gaussian(noise, kNoiseStd, rng);
        add_scaled(d.targets, noise, 1.0);
        out.push_back(std::move(d));
    }
    return out;
}

ToyModel make_model(int m, int n, int depth, int rank, double alpha, std::uint64_t seed) {
    if (depth < 1) throw std::invalid_argument("make_model: depth must be >= 1");
    ToyModel model;
    model.layers.reserve(static_cast<std::size_t>(depth));
    for (int l = 0; l < depth; ++l) {
        const int out_dim = (l == depth - 1) ? m : n;
        LoraLayer layer;
        layer.w0 = gaussian_matrix(out_dim, n, 1.0 / std::sqrt(n),
                                   mix_seed(seed, kStreamBase, static_cast<std::uint64_t>(l)));
        layer.adapter = init_adapter(out_dim, n, rank, alpha,
                                     mix_seed(seed, kStreamAdapter, static_cast<std::uint64_t>(l)));
        model.layers.push_back(std::move(layer));
    }
    return model;
}

std::vector<double> forward(const ToyModel& model, const std::vector<double>& x) {
    if (model.layers.empty()) throw std::invalid_argument("forward: model has no layers");
    if (static_cast<int>(x.size()) != model.layers.front().in_dim()) {
        throw std::invalid_argument("forward: input length " + std::to_string(x.size()) +
                                    " does not match first layer dim " +
                                    std::to_string(model.layers.front().in_dim()));
    }
    Matrix h(1, static_cast<int>(x.size()), x);
    for (const LoraLayer& layer : model.layers) {
        h = matmul(h, transpose(effective_weight(layer)));
    }
    std::vector<double> out(static_cast<std::size_t>(h.cols()));
    for (int j = 0; j < h.cols(); ++j) out[static_cast<std::size_t>(j)] = h(0, j);
    return out;
}

namespace {

struct BackwardResult {
    std::vector<AdapterGrads> grads;
    double loss = 0.0;
};

// Batch forward keeping activations, then backprop through the effective
// weights. For layer l with W = w0 + s*b*a and upstream gradient G w.r.t.
// W, the adapter gradients are da = s * b^T G and db = s * G a^T.
BackwardResult batch_backward(const ToyModel& model, const Dataset& batch) {
    if (batch.count() < 1) throw std::invalid_argument("grads: batch is empty");

    const std::size_t depth = model.layers.size();
    std::vector<Matrix> activations;  // activations[l] = input to layer l, batch x in_dim
    activations.reserve(depth + 1);
    activations.push_back(batch.inputs);
    for (const LoraLayer& layer : model.layers) {
        activations.push_back(matmul(activations.back(), transpose(effective_weight(layer))));
    }

    const Matrix& pred = activations.back();
    if (!pred.same_shape(batch.targets)) {
        throw std::invalid_argument("grads: target shape mismatch");
    }
    Matrix diff = sub(pred, batch.targets);
    const int out_dim = diff.cols();
    const double inv = 1.0 / (static_cast<double>(batch.count()) * out_dim);

    BackwardResult result;
    const double err = frobenius_norm(diff);
    result.loss = err * err * inv;

    Matrix delta = scale(diff, 2.0 * inv);  // dL/d(pred)
    result.grads.resize(depth);
    for (std::size_t l = depth; l-- > 0;) {
        const LoraLayer& layer = model.layers[l];
        const double s = layer.adapter.scaling();
        const Matrix g = matmul(transpose(delta), activations[l]);  // dL/dW, out x in
        result.grads[l].da = scale(matmul(transpose(layer.adapter.b), g), s);
        result.grads[l].db = scale(matmul(g, transpose(layer.adapter.a)), s);
        if (l > 0) delta = matmul(delta, effective_weight(layer));
    }
    return result;
}

Dataset gather(const Dataset& data, const std::vector<int>& order, int begin, int end) {
    Dataset batch;
    batch.inputs = Matrix(end - begin, data.inputs.cols());
    batch.targets = Matrix(end - begin, data.targets.cols());
    for (int i = begin; i < end; ++i) {
        const int src = order[static_cast<std::size_t>(i)];
        for (int j = 0; j < data.inputs.cols(); ++j) batch.inputs(i - begin, j) = data.inputs(src, j);
        for (int j = 0; j < data.targets.cols(); ++j) batch.targets(i - begin, j) = data.targets(src, j);
    }
    return batch;
}

}  // namespace

std::vector<AdapterGrads> grads(const ToyModel& model, const Dataset& batch) {
    return batch_backward(model, batch).grads;
}

double dataset_loss(const ToyModel& model, const Dataset& data) {
    Matrix h = data.inputs;
    for (const LoraLayer& layer : model.layers) {
        h = matmul(h, transpose(effective_weight(layer)));
    }
    const double err = frobenius_norm(sub(h, data.targets));
    return err * err / (static_cast<double>(data.count()) * data.targets.cols());
}

ToyModel local_train(ToyModel model, const Dataset& data, const TrainConfig& cfg) {
    if (cfg.learning_rate < 0.0) throw std::invalid_argument("local_train: negative learning rate");
    if (cfg.local_epochs < 1) throw std::invalid_argument("local_train: local_epochs must be >= 1");
    if (cfg.batch_size < 1 || cfg.batch_size > data.count()) {
        throw std::invalid_argument("local_train: batch_size outside [1, dataset count]");
    }

    auto rng = make_rng(cfg.seed);
    std::vector<int> order(static_cast<std::size_t>(data.count()));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int begin = 0; begin < data.count(); begin += cfg.batch_size) {
            const int end = std::min(begin + cfg.batch_size, data.count());
            const Dataset batch = gather(data, order, begin, end);
            const BackwardResult bw = batch_backward(model, batch);
            if (!std::isfinite(bw.loss)) {
                throw TrainingError("local_train: loss diverged at epoch " + std::to_string(epoch),
                                    epoch);
            }
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                LoraAdapter& adapter = model.layers[l].adapter;
                if (cfg.train_a) add_scaled(adapter.a, bw.grads[l].da, -cfg.learning_rate);
                add_scaled(adapter.b, bw.grads[l].db, -cfg.learning_rate);
            }
        }
    }
    return model;
}

}  // namespace fedlora
