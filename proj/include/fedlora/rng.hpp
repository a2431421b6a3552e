#pragma once

#include <cstdint>
#include <random>

#include "fedlora/matrix.hpp"

namespace fedlora {

/// splitmix64 finalizer; used to derive independent seed streams from
/// (seed, stream id) pairs so clients, rounds and layers never share state.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix_seed(mix_seed(seed, a), b);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

/// Fills row-major with N(0, stddev^2) draws in a fixed order.
inline void fill_gaussian(Matrix& m, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    double* p = m.data();
    for (std::size_t i = 0; i < m.size(); ++i) p[i] = dist(rng);
}

inline Matrix gaussian_matrix(int rows, int cols, double stddev, std::uint64_t seed) {
    Matrix m(rows, cols);
    auto rng = make_rng(seed);
    fill_gaussian(m, stddev, rng);
    return m;
}

}  // namespace fedlora
