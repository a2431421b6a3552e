#include "fedlora/federation.hpp"

#include <algorithm>
#include <cstddef>
#include <exception>
#include <stdexcept>
#include <utility>

#include "fedlora/metrics.hpp"
#include "fedlora/rng.hpp"

namespace fedlora {
namespace {

// Stream tags for seed derivation; distinct from the tags used when
// generating task data so no RNG stream is ever reused.
constexpr std::uint64_t kStreamClientTraining = 11;

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void check_clients(const std::vector<ClientState>& clients) {
    require(!clients.empty(), "federation: client list is empty");
    const ToyModel& first = clients.front().model;
    require(!first.layers.empty(), "federation: client model has no layers");
    for (const ClientState& c : clients) {
        require(c.model.layers.size() == first.layers.size(),
                "federation: clients disagree on model depth");
        for (std::size_t l = 0; l < first.layers.size(); ++l) {
            const LoraLayer& ref = first.layers[l];
            const LoraLayer& cur = c.model.layers[l];
            require(cur.w0.rows() == ref.w0.rows() && cur.w0.cols() == ref.w0.cols(),
                    "federation: clients disagree on layer shape");
            require(cur.adapter.rank == ref.adapter.rank,
                    "federation: clients disagree on adapter rank");
            require(cur.adapter.alpha == ref.adapter.alpha,
                    "federation: clients disagree on adapter alpha");
        }
    }
}

// Entrywise mean of the clients' base weights for one layer. Strategies
// that assign per-client base offsets leave clients with different w0
// but identical effective weights; averaging keeps the ideal well defined
// in that case and is a no-op (up to rounding) when w0 is shared.
Matrix mean_base(const std::vector<ClientState>& clients, std::size_t layer) {
    Matrix acc = clients.front().model.layers[layer].w0;
    for (std::size_t i = 1; i < clients.size(); ++i) {
        acc = add(acc, clients[i].model.layers[layer].w0);
    }
    return scale(acc, 1.0 / static_cast<double>(clients.size()));
}

// Mean over clients of the unscaled adapter product B_i * A_i.
Matrix mean_product(const std::vector<ClientState>& clients, std::size_t layer) {
    const LoraAdapter& a0 = clients.front().model.layers[layer].adapter;
    Matrix acc = matmul(a0.b, a0.a);
    for (std::size_t i = 1; i < clients.size(); ++i) {
        const LoraAdapter& ai = clients[i].model.layers[layer].adapter;
        acc = add(acc, matmul(ai.b, ai.a));
    }
    return scale(acc, 1.0 / static_cast<double>(clients.size()));
}

}  // namespace

std::string strategy_name(const AggregationStrategy& strategy) {
    std::string name;
    switch (strategy.kind) {
        case StrategyKind::DenseOracle: name = "dense-oracle"; break;
        case StrategyKind::FedIt: name = "fedit"; break;
        case StrategyKind::FfaLora: name = "ffa-lora"; break;
        case StrategyKind::FedExLora: name = "fedex-lora"; break;
        case StrategyKind::FedExTruncated: name = "fedex-trunc"; break;
    }
    if (strategy.kind == StrategyKind::FedExLora &&
        strategy.assignment != Assignment::Average) {
        name += "/" + assignment_name(strategy.assignment);
    }
    return name;
}

std::string assignment_name(Assignment assignment) {
    switch (assignment) {
        case Assignment::Average: return "average";
        case Assignment::Reinitialize: return "reinit";
        case Assignment::KeepLocal: return "keep-local";
    }
    throw std::invalid_argument("federation: unknown assignment");
}

std::vector<LoraAdapter> average_adapters(const std::vector<ClientState>& clients) {
    check_clients(clients);
    const double inv = 1.0 / static_cast<double>(clients.size());
    const std::size_t depth = clients.front().model.layers.size();
    std::vector<LoraAdapter> out;
    out.reserve(depth);
    for (std::size_t l = 0; l < depth; ++l) {
        LoraAdapter avg = clients.front().model.layers[l].adapter;
        for (std::size_t i = 1; i < clients.size(); ++i) {
            const LoraAdapter& ai = clients[i].model.layers[l].adapter;
            avg.a = add(avg.a, ai.a);
            avg.b = add(avg.b, ai.b);
        }
        avg.a = scale(avg.a, inv);
        avg.b = scale(avg.b, inv);
        out.push_back(std::move(avg));
    }
    return out;
}

std::vector<Matrix> compute_residual(const std::vector<ClientState>& clients) {
    check_clients(clients);
    const std::vector<LoraAdapter> avg = average_adapters(clients);
    std::vector<Matrix> out;
    out.reserve(avg.size());
    for (std::size_t l = 0; l < avg.size(); ++l) {
        out.push_back(sub(mean_product(clients, l), matmul(avg[l].b, avg[l].a)));
    }
    return out;
}

AggregationResult aggregate(ServerState& server, std::vector<ClientState>& clients) {
    check_clients(clients);
    const AggregationStrategy& strat = server.strategy;
    if (strat.kind == StrategyKind::FedExTruncated) {
        require(strat.truncation_rank >= 1,
                "aggregate: FedExTruncated needs truncation_rank >= 1");
    }
    const int k = static_cast<int>(clients.size());
    const std::size_t depth = clients.front().model.layers.size();
    const std::vector<LoraAdapter> averages = average_adapters(clients);

    AggregationResult result;
    result.layers.reserve(depth);
    std::vector<Matrix> reference;
    reference.reserve(depth);
    std::vector<int> residual_ranks;
    residual_ranks.reserve(depth);
    std::vector<std::pair<int, int>> dims;
    dims.reserve(depth);

    for (std::size_t l = 0; l < depth; ++l) {
        const LoraLayer& proto = clients.front().model.layers[l];
        const int m = proto.out_dim();
        const int n = proto.in_dim();
        const int r = proto.adapter.rank;
        const double s = proto.adapter.scaling();
        dims.emplace_back(m, n);

        const Matrix base_mean = mean_base(clients, l);
        const Matrix product_mean = mean_product(clients, l);
        Matrix ideal = base_mean;
        add_scaled(ideal, product_mean, s);

        LayerAggregate agg;
        agg.a_global = averages[l].a;
        agg.b_global = averages[l].b;
        Matrix merged(m, n);  // what actually lands in w0, unscaled

        switch (strat.kind) {
            case StrategyKind::DenseOracle: {
                const LoraAdapter fresh = init_adapter(
                    m, n, r, proto.adapter.alpha,
                    mix_seed(server.resync_seed, static_cast<std::uint64_t>(server.round),
                             static_cast<std::uint64_t>(l)));
                for (ClientState& c : clients) {
                    c.model.layers[l].w0 = ideal;
                    c.model.layers[l].adapter = fresh;
                }
                agg.a_global = fresh.a;
                agg.b_global = fresh.b;
                break;
            }
            case StrategyKind::FedIt: {
                for (ClientState& c : clients) {
                    c.model.layers[l].adapter = averages[l];
                }
                break;
            }
            case StrategyKind::FfaLora: {
                for (ClientState& c : clients) {
                    c.model.layers[l].adapter.b = averages[l].b;
                }
                agg.a_global = clients.front().model.layers[l].adapter.a;
                break;
            }
            case StrategyKind::FedExLora: {
                switch (strat.assignment) {
                    case Assignment::Average: {
                        merged = sub(product_mean, matmul(averages[l].b, averages[l].a));
                        Matrix new_base = base_mean;
                        add_scaled(new_base, merged, s);
                        for (ClientState& c : clients) {
                            c.model.layers[l].w0 = new_base;
                            c.model.layers[l].adapter = averages[l];
                        }
                        break;
                    }
                    case Assignment::Reinitialize: {
                        merged = product_mean;
                        const LoraAdapter fresh = init_adapter(
                            m, n, r, proto.adapter.alpha,
                            mix_seed(server.resync_seed,
                                     static_cast<std::uint64_t>(server.round),
                                     static_cast<std::uint64_t>(l)));
                        for (ClientState& c : clients) {
                            c.model.layers[l].w0 = ideal;
                            c.model.layers[l].adapter = fresh;
                        }
                        agg.a_global = fresh.a;
                        agg.b_global = fresh.b;
                        break;
                    }
                    case Assignment::KeepLocal: {
                        merged = sub(product_mean, matmul(averages[l].b, averages[l].a));
                        for (ClientState& c : clients) {
                            const LoraAdapter& own = c.model.layers[l].adapter;
                            Matrix base = ideal;
                            add_scaled(base, matmul(own.b, own.a), -s);
                            c.model.layers[l].w0 = std::move(base);
                        }
                        break;
                    }
                }
                break;
            }
            case StrategyKind::FedExTruncated: {
                const Matrix full = sub(product_mean, matmul(averages[l].b, averages[l].a));
                const int cap = std::min({strat.truncation_rank, m, n});
                merged = best_rank_approx(full, cap);
                Matrix new_base = base_mean;
                add_scaled(new_base, merged, s);
                for (ClientState& c : clients) {
                    c.model.layers[l].w0 = new_base;
                    c.model.layers[l].adapter = averages[l];
                }
                break;
            }
        }

        residual_ranks.push_back(numerical_rank(merged));
        const bool residual_strategy = strat.kind == StrategyKind::FedExLora ||
                                       strat.kind == StrategyKind::FedExTruncated;
        const bool factored_cheaper =
            static_cast<long long>(k) * r * (m + n) < static_cast<long long>(m) * n;
        agg.residual = std::move(merged);
        if (residual_strategy && factored_cheaper) {
            agg.factors = gram_schmidt_qr(agg.residual);
        }
        result.layers.push_back(std::move(agg));
        reference.push_back(std::move(ideal));
    }

    server.reference_dense = std::move(reference);
    server.round += 1;
    result.comm = comm_cost(strat, k, dims, clients.front().model.layers.front().adapter.rank,
                            residual_ranks, server.round);
    return result;
}

std::vector<double> exactness_gap(const ServerState& server,
                                  const std::vector<ClientState>& clients) {
    check_clients(clients);
    const std::size_t depth = clients.front().model.layers.size();
    require(server.reference_dense.size() == depth,
            "exactness_gap: server has no reference for the current round");
    std::vector<double> gaps(depth, 0.0);
    for (std::size_t l = 0; l < depth; ++l) {
        for (const ClientState& c : clients) {
            const Matrix eff = effective_weight(c.model.layers[l]);
            gaps[l] = std::max(gaps[l],
                               frobenius_norm(sub(eff, server.reference_dense[l])));
        }
    }
    return gaps;
}

RoundReport run_round(ServerState& server, std::vector<ClientState>& clients) {
    check_clients(clients);
    const int k = static_cast<int>(clients.size());

    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(k));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < k; ++i) {
        try {
            TrainConfig cfg = clients[i].cfg;
            cfg.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(server.round));
            if (server.strategy.kind == StrategyKind::FfaLora) {
                cfg.train_a = false;
            }
            clients[i].model = local_train(clients[i].model, clients[i].data, cfg);
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    const std::size_t depth = clients.front().model.layers.size();
    RoundReport report;
    report.strategy = strategy_name(server.strategy);
    report.divergence.reserve(depth);
    for (std::size_t l = 0; l < depth; ++l) {
        report.divergence.push_back(divergence_norm(clients, static_cast<int>(l)));
    }

    const AggregationResult agg = aggregate(server, clients);
    report.round = server.round;
    report.comm = agg.comm;
    report.residual_rank.reserve(depth);
    for (const LayerAggregate& layer : agg.layers) {
        report.residual_rank.push_back(numerical_rank(layer.residual));
    }

    report.exactness_gap = exactness_gap(server, clients);
    report.exactness_gap_rel.reserve(depth);
    for (std::size_t l = 0; l < depth; ++l) {
        const double scale_norm = std::max(1.0, frobenius_norm(server.reference_dense[l]));
        report.exactness_gap_rel.push_back(report.exactness_gap[l] / scale_norm);
    }

    double total_loss = 0.0;
    for (const ClientState& c : clients) {
        total_loss += dataset_loss(c.model, c.data);
    }
    report.mean_client_loss = total_loss / static_cast<double>(k);
    return report;
}

std::vector<ClientState> make_clients(const ToyModel& model,
                                      const std::vector<Dataset>& shards,
                                      const TrainConfig& cfg) {
    require(!shards.empty(), "make_clients: no data shards");
    std::vector<ClientState> clients;
    clients.reserve(shards.size());
    for (std::size_t i = 0; i < shards.size(); ++i) {
        ClientState c;
        c.id = static_cast<int>(i);
        c.model = model;
        c.data = shards[i];
        c.cfg = cfg;
        c.cfg.seed = mix_seed(cfg.seed, kStreamClientTraining, i);
        clients.push_back(std::move(c));
    }
    return clients;
}

}  // namespace fedlora
