#pragma once

// Independent reference computations used to arbitrate the library's
// results. Everything here is implemented from first principles with
// plain loops — no calls into the decomposition or gradient code under
// test.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fedlora/matrix.hpp"
#include "fedlora/task.hpp"

namespace oracle {

/// Eigenvalues of a symmetric matrix via cyclic two-sided Jacobi
/// rotations, sorted descending. Cross-checks singular values through
/// sigma_i(M) = sqrt(eig_i(M^T M)).
inline std::vector<double> symmetric_eigenvalues(fedlora::Matrix s) {
    const int n = s.rows();
    if (n != s.cols()) {
        throw std::invalid_argument("symmetric_eigenvalues: matrix not square");
    }
    double fnorm2 = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) fnorm2 += s(i, j) * s(i, j);

    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += s(i, j) * s(i, j);
        if (off <= 1e-30 * (fnorm2 + 1e-300)) break;

        for (int i = 0; i < n - 1; ++i) {
            for (int j = i + 1; j < n; ++j) {
                if (std::fabs(s(i, j)) <= 1e-300) continue;
                const double phi = 0.5 * std::atan2(2.0 * s(i, j), s(j, j) - s(i, i));
                const double c = std::cos(phi);
                const double t = std::sin(phi);
                for (int k = 0; k < n; ++k) {
                    const double sik = s(i, k);
                    const double sjk = s(j, k);
                    s(i, k) = c * sik - t * sjk;
                    s(j, k) = t * sik + c * sjk;
                }
                for (int k = 0; k < n; ++k) {
                    const double ski = s(k, i);
                    const double skj = s(k, j);
                    s(k, i) = c * ski - t * skj;
                    s(k, j) = t * ski + c * skj;
                }
            }
        }
    }

    std::vector<double> eig(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = s(i, i);
    std::sort(eig.begin(), eig.end(), [](double a, double b) { return a > b; });
    return eig;
}

/// Least-squares fit W minimizing ||X W^T - Y||_F via the normal
/// equations and Gauss-Jordan elimination with partial pivoting.
/// X is count x n, Y is count x m; the result is m x n so that
/// y ~ W x row-wise.
inline fedlora::Matrix least_squares_fit(const fedlora::Matrix& x, const fedlora::Matrix& y) {
    if (x.rows() != y.rows()) {
        throw std::invalid_argument("least_squares_fit: row counts differ");
    }
    const int count = x.rows();
    const int n = x.cols();
    const int m = y.cols();

    // G = X^T X (n x n), R = X^T Y (n x m)
    fedlora::Matrix g(n, n);
    fedlora::Matrix r(n, m);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < count; ++k) acc += x(k, i) * x(k, j);
            g(i, j) = acc;
        }
        for (int j = 0; j < m; ++j) {
            double acc = 0.0;
            for (int k = 0; k < count; ++k) acc += x(k, i) * y(k, j);
            r(i, j) = acc;
        }
    }

    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int row = col + 1; row < n; ++row) {
            if (std::fabs(g(row, col)) > std::fabs(g(pivot, col))) pivot = row;
        }
        if (std::fabs(g(pivot, col)) < 1e-12) {
            throw std::runtime_error("least_squares_fit: singular normal equations");
        }
        if (pivot != col) {
            for (int j = 0; j < n; ++j) std::swap(g(col, j), g(pivot, j));
            for (int j = 0; j < m; ++j) std::swap(r(col, j), r(pivot, j));
        }
        const double inv = 1.0 / g(col, col);
        for (int j = 0; j < n; ++j) g(col, j) *= inv;
        for (int j = 0; j < m; ++j) r(col, j) *= inv;
        for (int row = 0; row < n; ++row) {
            if (row == col) continue;
            const double f = g(row, col);
            if (f == 0.0) continue;
            for (int j = 0; j < n; ++j) g(row, j) -= f * g(col, j);
            for (int j = 0; j < m; ++j) r(row, j) -= f * r(col, j);
        }
    }

    fedlora::Matrix w(m, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) w(j, i) = r(i, j);
    return w;
}

/// Central finite differences of the mean squared loss with respect to
/// every adapter entry, step h. Matches the layout of fedlora::grads.
inline std::vector<fedlora::AdapterGrads> finite_difference_grads(
    const fedlora::ToyModel& model, const fedlora::Dataset& batch, double h) {
    fedlora::ToyModel work = model;
    std::vector<fedlora::AdapterGrads> out(model.layers.size());

    for (std::size_t l = 0; l < work.layers.size(); ++l) {
        fedlora::LoraAdapter& adapter = work.layers[l].adapter;
        out[l].da = fedlora::Matrix(adapter.a.rows(), adapter.a.cols());
        out[l].db = fedlora::Matrix(adapter.b.rows(), adapter.b.cols());

        for (int i = 0; i < adapter.a.rows(); ++i) {
            for (int j = 0; j < adapter.a.cols(); ++j) {
                const double orig = adapter.a(i, j);
                adapter.a(i, j) = orig + h;
                const double up = fedlora::dataset_loss(work, batch);
                adapter.a(i, j) = orig - h;
                const double down = fedlora::dataset_loss(work, batch);
                adapter.a(i, j) = orig;
                out[l].da(i, j) = (up - down) / (2.0 * h);
            }
        }
        for (int i = 0; i < adapter.b.rows(); ++i) {
            for (int j = 0; j < adapter.b.cols(); ++j) {
                const double orig = adapter.b(i, j);
                adapter.b(i, j) = orig + h;
                const double up = fedlora::dataset_loss(work, batch);
                adapter.b(i, j) = orig - h;
                const double down = fedlora::dataset_loss(work, batch);
                adapter.b(i, j) = orig;
                out[l].db(i, j) = (up - down) / (2.0 * h);
            }
        }
    }
    return out;
}

}  // namespace oracle
