#include "fedlora/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fedlora {

namespace {

// Work threshold below which the OpenMP kernels stay single-threaded;
// desk-scale 32x32 products fall under it, the bench sizes above it.
constexpr long long kParallelWork = 1LL << 16;

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()));
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions " + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()));
    }
    const int m = a.rows();
    const int n = b.cols();
    const int inner = a.cols();
    Matrix out(m, n);
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.data();
    const long long work = static_cast<long long>(m) * n * inner;
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
    for (int i = 0; i < m; ++i) {
        double* orow = op + static_cast<std::size_t>(i) * n;
        for (int k = 0; k < inner; ++k) {
            const double aik = ap[static_cast<std::size_t>(i) * inner + k];
            const double* brow = bp + static_cast<std::size_t>(k) * n;
            for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out = a;
    double* o = out.data();
    const double* bp = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) o[i] += bp[i];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix out = a;
    double* o = out.data();
    const double* bp = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) o[i] -= bp[i];
    return out;
}

Matrix scale(const Matrix& m, double factor) {
    Matrix out = m;
    double* o = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) o[i] *= factor;
    return out;
}

void add_scaled(Matrix& a, const Matrix& b, double factor) {
    require_same_shape(a, b, "add_scaled");
    double* o = a.data();
    const double* bp = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) o[i] += factor * bp[i];
}

double frobenius_norm(const Matrix& m) {
    const int rows = m.rows();
    const int cols = m.cols();
    if (rows == 0 || cols == 0) return 0.0;
    // Per-row partial sums combined in row order: the result is independent
    // of the thread count.
    std::vector<double> partial(static_cast<std::size_t>(rows), 0.0);
    const double* p = m.data();
    const long long work = static_cast<long long>(rows) * cols;
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
    for (int i = 0; i < rows; ++i) {
        const double* row = p + static_cast<std::size_t>(i) * cols;
        double s = 0.0;
        for (int j = 0; j < cols; ++j) s += row[j] * row[j];
        partial[static_cast<std::size_t>(i)] = s;
    }
    double total = 0.0;
    for (double s : partial) total += s;
    return std::sqrt(total);
}

double max_abs(const Matrix& m) {
    double best = 0.0;
    const double* p = m.data();
    for (std::size_t i = 0; i < m.size(); ++i) best = std::max(best, std::fabs(p[i]));
    return best;
}

bool all_finite(const Matrix& m) {
    const double* p = m.data();
    for (std::size_t i = 0; i < m.size(); ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

namespace {

double column_dot(const Matrix& m, int a, int b) {
    double s = 0.0;
    for (int i = 0; i < m.rows(); ++i) s += m(i, a) * m(i, b);
    return s;
}

}  // namespace

QrFactors gram_schmidt_qr(const Matrix& m) {
    const int rows = m.rows();
    const int cols = m.cols();
    const double drop_tol = 1e-10 * frobenius_norm(m);

    // Modified Gram-Schmidt with a re-orthogonalization pass; columns that
    // collapse below the drop tolerance are linearly dependent and omitted.
    std::vector<std::vector<double>> q_cols;
    std::vector<std::vector<double>> r_rows;  // r_rows[i][j] = coefficient of q_i in column j

    for (int j = 0; j < cols; ++j) {
        std::vector<double> v(static_cast<std::size_t>(rows));
        for (int i = 0; i < rows; ++i) v[static_cast<std::size_t>(i)] = m(i, j);

        std::vector<double> coeff(q_cols.size(), 0.0);
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t qi = 0; qi < q_cols.size(); ++qi) {
                const std::vector<double>& q = q_cols[qi];
                double c = 0.0;
                for (int i = 0; i < rows; ++i) c += q[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
                for (int i = 0; i < rows; ++i) v[static_cast<std::size_t>(i)] -= c * q[static_cast<std::size_t>(i)];
                coeff[qi] += c;
            }
        }
        for (std::size_t qi = 0; qi < q_cols.size(); ++qi) r_rows[qi][static_cast<std::size_t>(j)] = coeff[qi];

        double nrm = 0.0;
        for (double x : v) nrm += x * x;
        nrm = std::sqrt(nrm);
        if (nrm > drop_tol) {
            for (double& x : v) x /= nrm;
            q_cols.push_back(std::move(v));
            r_rows.emplace_back(static_cast<std::size_t>(cols), 0.0);
            r_rows.back()[static_cast<std::size_t>(j)] = nrm;
        }
    }

    const int rank = static_cast<int>(q_cols.size());
    Matrix q(rows, rank);
    for (int i = 0; i < rows; ++i)
        for (int c = 0; c < rank; ++c) q(i, c) = q_cols[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
    Matrix r(rank, cols);
    for (int c = 0; c < rank; ++c)
        for (int j = 0; j < cols; ++j) r(c, j) = r_rows[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
    return {std::move(q), std::move(r)};
}

namespace {

constexpr int kMaxJacobiSweeps = 100;

// One-sided Jacobi on the columns of w (rows >= cols), accumulating the
// right rotations into v. Sweeps stop when every column pair is orthogonal
// under both the absolute threshold (1e-12 * ||m||_F) and a relative one
// that keeps the left singular vectors orthonormal for small sigma.
void one_sided_jacobi(Matrix& w, Matrix& v, double fnorm) {
    const int cols = w.cols();
    const int rows = w.rows();
    const double abs_tol = 1e-12 * fnorm;
    const double rel_tol = 1e-12;

    int sweeps = 0;
    bool converged = (fnorm == 0.0) || cols < 2;
    while (!converged) {
        if (sweeps >= kMaxJacobiSweeps) {
            throw std::runtime_error("svd: one-sided Jacobi did not converge after " +
                                     std::to_string(sweeps) + " sweeps");
        }
        converged = true;
        for (int i = 0; i < cols - 1; ++i) {
            for (int j = i + 1; j < cols; ++j) {
                const double dot_ii = column_dot(w, i, i);
                const double dot_jj = column_dot(w, j, j);
                const double dot_ij = column_dot(w, i, j);
                const double floor = rel_tol * std::sqrt(dot_ii * dot_jj);
                const double mag = std::fabs(dot_ij);
                if (mag <= abs_tol && mag <= floor) continue;
                if (mag < std::numeric_limits<double>::min()) continue;
                converged = false;

                const double zeta = (dot_jj - dot_ii) / (2.0 * dot_ij);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int k = 0; k < rows; ++k) {
                    const double wi = w(k, i);
                    const double wj = w(k, j);
                    w(k, i) = c * wi - s * wj;
                    w(k, j) = s * wi + c * wj;
                }
                for (int k = 0; k < cols; ++k) {
                    const double vi = v(k, i);
                    const double vj = v(k, j);
                    v(k, i) = c * vi - s * vj;
                    v(k, j) = s * vi + c * vj;
                }
            }
        }
        ++sweeps;
    }
}

// Replace near-null columns of u by an orthonormal completion drawn from
// canonical basis vectors; their singular values are negligible so the
// reconstruction is unaffected.
void complete_basis(Matrix& u, const std::vector<bool>& degenerate) {
    const int rows = u.rows();
    const int cols = u.cols();
    int next_axis = 0;
    for (int c = 0; c < cols; ++c) {
        if (!degenerate[static_cast<std::size_t>(c)]) continue;
        for (; next_axis < rows; ++next_axis) {
            std::vector<double> v(static_cast<std::size_t>(rows), 0.0);
            v[static_cast<std::size_t>(next_axis)] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (int k = 0; k < cols; ++k) {
                    if (k == c || degenerate[static_cast<std::size_t>(k)]) continue;
                    double d = 0.0;
                    for (int i = 0; i < rows; ++i) d += u(i, k) * v[static_cast<std::size_t>(i)];
                    for (int i = 0; i < rows; ++i) v[static_cast<std::size_t>(i)] -= d * u(i, k);
                }
                // also project out completions already placed
                for (int k = 0; k < c; ++k) {
                    if (!degenerate[static_cast<std::size_t>(k)]) continue;
                    double d = 0.0;
                    for (int i = 0; i < rows; ++i) d += u(i, k) * v[static_cast<std::size_t>(i)];
                    for (int i = 0; i < rows; ++i) v[static_cast<std::size_t>(i)] -= d * u(i, k);
                }
            }
            double nrm = 0.0;
            for (double x : v) nrm += x * x;
            nrm = std::sqrt(nrm);
            if (nrm > 0.5) {
                for (int i = 0; i < rows; ++i) u(i, c) = v[static_cast<std::size_t>(i)] / nrm;
                ++next_axis;
                break;
            }
        }
    }
}

}  // namespace

SvdFactors svd(const Matrix& m) {
    if (m.rows() < 1 || m.cols() < 1) {
        throw std::invalid_argument("svd: requires at least one row and one column");
    }
    const bool transposed = m.rows() < m.cols();
    Matrix w = transposed ? transpose(m) : m;
    const int rows = w.rows();
    const int cols = w.cols();  // = min(m.rows, m.cols) = p

    Matrix v = Matrix::identity(cols);
    const double fnorm = frobenius_norm(w);
    one_sided_jacobi(w, v, fnorm);

    std::vector<double> sigma(static_cast<std::size_t>(cols));
    for (int j = 0; j < cols; ++j) {
        double s = 0.0;
        for (int i = 0; i < rows; ++i) s += w(i, j) * w(i, j);
        sigma[static_cast<std::size_t>(j)] = std::sqrt(s);
    }

    std::vector<int> order(static_cast<std::size_t>(cols));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return sigma[static_cast<std::size_t>(a)] > sigma[static_cast<std::size_t>(b)]; });

    Matrix u_w(rows, cols);
    Matrix v_sorted(cols, cols);
    std::vector<double> sigma_sorted(static_cast<std::size_t>(cols));
    std::vector<bool> degenerate(static_cast<std::size_t>(cols), false);
    const double tiny = 1e-13 * fnorm;
    for (int c = 0; c < cols; ++c) {
        const int src = order[static_cast<std::size_t>(c)];
        const double s = sigma[static_cast<std::size_t>(src)];
        sigma_sorted[static_cast<std::size_t>(c)] = s;
        if (s <= tiny || fnorm == 0.0) {
            degenerate[static_cast<std::size_t>(c)] = true;
        } else {
            for (int i = 0; i < rows; ++i) u_w(i, c) = w(i, src) / s;
        }
        for (int i = 0; i < cols; ++i) v_sorted(i, c) = v(i, src);
    }
    complete_basis(u_w, degenerate);

    SvdFactors out;
    out.sigma = std::move(sigma_sorted);
    if (!transposed) {
        out.u = std::move(u_w);
        out.vt = transpose(v_sorted);
    } else {
        out.u = std::move(v_sorted);
        out.vt = transpose(u_w);
    }
    return out;
}

Matrix best_rank_approx(const Matrix& m, int r_target) {
    const int p = std::min(m.rows(), m.cols());
    if (r_target < 0 || r_target > p) {
        throw std::invalid_argument("best_rank_approx: target rank " + std::to_string(r_target) +
                                    " outside [0, " + std::to_string(p) + "]");
    }
    if (r_target == 0) return Matrix(m.rows(), m.cols());

    const SvdFactors f = svd(m);
    Matrix us(m.rows(), r_target);
    for (int i = 0; i < m.rows(); ++i)
        for (int c = 0; c < r_target; ++c) us(i, c) = f.u(i, c) * f.sigma[static_cast<std::size_t>(c)];
    Matrix vt_top(r_target, m.cols());
    for (int c = 0; c < r_target; ++c)
        for (int j = 0; j < m.cols(); ++j) vt_top(c, j) = f.vt(c, j);
    return matmul(us, vt_top);
}

int numerical_rank(const Matrix& m, double rel_tol) {
    if (rel_tol <= 0.0) {
        throw std::invalid_argument("numerical_rank: rel_tol must be positive");
    }
    if (m.rows() == 0 || m.cols() == 0) return 0;
    const SvdFactors f = svd(m);
    const double cutoff = rel_tol * f.sigma.front();
    if (f.sigma.front() == 0.0) return 0;
    int rank = 0;
    for (double s : f.sigma)
        if (s > cutoff) ++rank;
    return rank;
}

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("serial::matmul: inner dimensions " +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
    }
    const int m = a.rows();
    const int n = b.cols();
    const int inner = a.cols();
    Matrix out(m, n);
    for (int i = 0; i < m; ++i) {
        double* orow = out.data() + static_cast<std::size_t>(i) * n;
        for (int k = 0; k < inner; ++k) {
            const double aik = a(i, k);
            const double* brow = b.data() + static_cast<std::size_t>(k) * n;
            for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

double frobenius_norm(const Matrix& m) {
    // Same per-row partial-sum order as the OpenMP kernel, so the two
    // agree bitwise on every input.
    const int rows = m.rows();
    const int cols = m.cols();
    if (rows == 0 || cols == 0) return 0.0;
    const double* p = m.data();
    double total = 0.0;
    for (int i = 0; i < rows; ++i) {
        const double* row = p + static_cast<std::size_t>(i) * cols;
        double s = 0.0;
        for (int j = 0; j < cols; ++j) s += row[j] * row[j];
        total += s;
    }
    return std::sqrt(total);
}

}  // namespace serial

}  // namespace fedlora
