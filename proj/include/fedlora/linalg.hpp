#pragma once

#include <vector>

#include "fedlora/matrix.hpp"

namespace fedlora {

/// Thin SVD of an m x n matrix: u is m x p with orthonormal columns,
/// sigma holds p = min(m, n) singular values sorted non-increasing,
/// vt is p x n with orthonormal rows, and u * diag(sigma) * vt
/// reconstructs the input.
struct SvdFactors {
    Matrix u;
    std::vector<double> sigma;
    Matrix vt;
};

/// Column-space QR from modified Gram-Schmidt. q has one orthonormal
/// column per numerically independent input column; q * r reconstructs
/// the input. A zero matrix yields q with 0 columns.
struct QrFactors {
    Matrix q;
    Matrix r;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double factor);
/// a += factor * b, in place.
void add_scaled(Matrix& a, const Matrix& b, double factor);

double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);
bool all_finite(const Matrix& m);

QrFactors gram_schmidt_qr(const Matrix& m);
SvdFactors svd(const Matrix& m);
Matrix best_rank_approx(const Matrix& m, int r_target);
int numerical_rank(const Matrix& m, double rel_tol = 1e-9);

namespace serial {

/// Reference kernels without OpenMP, kept for correctness checks and
/// the kernel benchmark.
Matrix matmul(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& m);

}  // namespace serial

}  // namespace fedlora
