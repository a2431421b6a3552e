#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "fedlora/linalg.hpp"
#include "fedlora/matrix.hpp"
#include "fedlora/rng.hpp"
#include "oracles.hpp"

using fedlora::Matrix;
using fedlora::gaussian_matrix;

namespace {

double rel_err(const Matrix& got, const Matrix& want) {
    const double denom = std::max(1e-300, fedlora::frobenius_norm(want));
    return fedlora::frobenius_norm(fedlora::sub(got, want)) / denom;
}

// Largest deviation of m^T m from the identity.
double ortho_defect(const Matrix& m) {
    const Matrix g = fedlora::matmul(fedlora::transpose(m), m);
    double worst = 0.0;
    for (int i = 0; i < g.rows(); ++i) {
        for (int j = 0; j < g.cols(); ++j) {
            worst = std::max(worst, std::fabs(g(i, j) - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

Matrix reconstruct(const fedlora::SvdFactors& f) {
    Matrix us = f.u;
    for (int i = 0; i < us.rows(); ++i) {
        for (int c = 0; c < us.cols(); ++c) us(i, c) *= f.sigma[static_cast<std::size_t>(c)];
    }
    return fedlora::matmul(us, f.vt);
}

}  // namespace

TEST_CASE("eigenvalue oracle sanity") {
    Matrix d(3, 3, {5, 0, 0, 0, -1, 0, 0, 0, 2});
    const auto eig = oracle::symmetric_eigenvalues(d);
    CHECK(eig[0] == doctest::Approx(5.0));
    CHECK(eig[1] == doctest::Approx(2.0));
    CHECK(eig[2] == doctest::Approx(-1.0));

    Matrix s(2, 2, {2, 1, 1, 2});
    const auto eig2 = oracle::symmetric_eigenvalues(s);
    CHECK(eig2[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(eig2[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("matmul matches a hand example") {
    Matrix a(2, 2, {1, 2, 3, 4});
    Matrix b(2, 2, {5, 6, 7, 8});
    Matrix want(2, 2, {19, 22, 43, 50});
    CHECK(fedlora::matmul(a, b) == want);
    CHECK(fedlora::serial::matmul(a, b) == want);
}

TEST_CASE("matmul agrees bitwise with the serial reference") {
    const std::vector<std::tuple<int, int, int>> shapes = {
        {5, 7, 3}, {17, 17, 17}, {64, 48, 33}, {1, 9, 1}, {2, 1, 6}};
    std::uint64_t seed = 100;
    for (const auto& [m, k, n] : shapes) {
        const Matrix a = gaussian_matrix(m, k, 1.0, seed++);
        const Matrix b = gaussian_matrix(k, n, 1.0, seed++);
        CHECK(fedlora::matmul(a, b) == fedlora::serial::matmul(a, b));
    }
}

TEST_CASE("matmul over an empty inner dimension yields zeros") {
    const Matrix got = fedlora::matmul(Matrix(3, 0), Matrix(0, 4));
    CHECK(got.rows() == 3);
    CHECK(got.cols() == 4);
    CHECK(fedlora::frobenius_norm(got) == 0.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    CHECK_THROWS_AS(fedlora::matmul(Matrix(2, 3), Matrix(2, 2)), std::invalid_argument);
}

TEST_CASE("elementwise helpers") {
    Matrix a(2, 2, {1, 2, 3, 4});
    Matrix b(2, 2, {10, 20, 30, 40});
    CHECK(fedlora::add(a, b) == Matrix(2, 2, {11, 22, 33, 44}));
    CHECK(fedlora::sub(b, a) == Matrix(2, 2, {9, 18, 27, 36}));
    CHECK(fedlora::scale(a, 2.0) == Matrix(2, 2, {2, 4, 6, 8}));

    Matrix acc = a;
    fedlora::add_scaled(acc, b, 0.5);
    CHECK(acc == Matrix(2, 2, {6, 12, 18, 24}));

    CHECK(fedlora::transpose(Matrix(2, 3, {1, 2, 3, 4, 5, 6})) ==
          Matrix(3, 2, {1, 4, 2, 5, 3, 6}));

    CHECK_THROWS_AS(fedlora::add(a, Matrix(2, 3)), std::invalid_argument);
    CHECK_THROWS_AS(fedlora::sub(a, Matrix(3, 2)), std::invalid_argument);
    Matrix bad = a;
    CHECK_THROWS_AS(fedlora::add_scaled(bad, Matrix(1, 1), 1.0), std::invalid_argument);
}

TEST_CASE("frobenius norm") {
    CHECK(fedlora::frobenius_norm(Matrix(1, 2, {3, 4})) == doctest::Approx(5.0));
    CHECK(fedlora::frobenius_norm(Matrix(4, 0)) == 0.0);
    const Matrix m = gaussian_matrix(50, 37, 1.0, 7);
    CHECK(fedlora::frobenius_norm(m) == fedlora::serial::frobenius_norm(m));
}

TEST_CASE("max_abs and all_finite") {
    Matrix m(2, 2, {1, -7, 3, 2});
    CHECK(fedlora::max_abs(m) == 7.0);
    CHECK(fedlora::all_finite(m));
    m(1, 1) = std::numeric_limits<double>::infinity();
    CHECK_FALSE(fedlora::all_finite(m));
    m(1, 1) = std::nan("");
    CHECK_FALSE(fedlora::all_finite(m));
}

TEST_CASE("QR orthonormalizes and reconstructs a full-rank matrix") {
    const Matrix m = gaussian_matrix(12, 7, 1.0, 21);
    const fedlora::QrFactors f = fedlora::gram_schmidt_qr(m);
    CHECK(f.q.cols() == 7);
    CHECK(f.r.rows() == 7);
    CHECK(ortho_defect(f.q) < 1e-12);
    CHECK(rel_err(fedlora::matmul(f.q, f.r), m) < 1e-12);
    for (int i = 0; i < f.r.rows(); ++i) {
        for (int j = 0; j < i; ++j) {
            CHECK(f.r(i, j) == 0.0);  // no drops, so r is upper triangular
        }
    }
}

TEST_CASE("QR drops linearly dependent columns") {
    const Matrix x = gaussian_matrix(8, 3, 1.0, 33);
    Matrix m(8, 5);
    for (int i = 0; i < 8; ++i) {
        m(i, 0) = x(i, 0);
        m(i, 1) = x(i, 1);
        m(i, 2) = x(i, 2);
        m(i, 3) = x(i, 0) + x(i, 1);
        m(i, 4) = 2.0 * x(i, 2);
    }
    const fedlora::QrFactors f = fedlora::gram_schmidt_qr(m);
    CHECK(f.q.cols() == 3);
    CHECK(ortho_defect(f.q) < 1e-12);
    CHECK(rel_err(fedlora::matmul(f.q, f.r), m) < 1e-10);
}

TEST_CASE("QR of the zero matrix has no columns") {
    const fedlora::QrFactors f = fedlora::gram_schmidt_qr(Matrix(4, 3));
    CHECK(f.q.cols() == 0);
    CHECK(f.r.rows() == 0);
    CHECK(fedlora::matmul(f.q, f.r) == Matrix(4, 3));
}

TEST_CASE("svd singular values match the independent eigensolver") {
    const std::vector<std::pair<int, int>> shapes = {{9, 5}, {5, 9}, {12, 12}, {1, 6}, {7, 1}};
    std::uint64_t seed = 500;
    for (const auto& [rows, cols] : shapes) {
        const Matrix m = gaussian_matrix(rows, cols, 1.0, seed++);
        const fedlora::SvdFactors f = fedlora::svd(m);

        // Gram matrix of the smaller side so its eigenvalue count equals p.
        const Matrix g = rows >= cols
                             ? fedlora::matmul(fedlora::transpose(m), m)
                             : fedlora::matmul(m, fedlora::transpose(m));
        const auto eig = oracle::symmetric_eigenvalues(g);

        REQUIRE(f.sigma.size() == eig.size());
        const double tol = 1e-9 * std::max(1.0, f.sigma.front());
        for (std::size_t i = 0; i < eig.size(); ++i) {
            const double want = std::sqrt(std::max(0.0, eig[i]));
            CHECK(std::fabs(f.sigma[i] - want) < tol);
        }

        CHECK(rel_err(reconstruct(f), m) < 1e-12);
        CHECK(ortho_defect(f.u) < 1e-9);
        CHECK(ortho_defect(fedlora::transpose(f.vt)) < 1e-9);
        for (std::size_t i = 1; i < f.sigma.size(); ++i) {
            CHECK(f.sigma[i - 1] >= f.sigma[i]);
        }
    }
}

TEST_CASE("svd hand examples") {
    const fedlora::SvdFactors f = fedlora::svd(Matrix(2, 2, {0, 2, 3, 0}));
    CHECK(f.sigma[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(f.sigma[1] == doctest::Approx(2.0).epsilon(1e-12));

    const fedlora::SvdFactors g = fedlora::svd(Matrix(1, 1, {-5}));
    CHECK(g.sigma[0] == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(rel_err(reconstruct(g), Matrix(1, 1, {-5})) < 1e-15);
}

TEST_CASE("svd of zero and rank-one matrices") {
    const fedlora::SvdFactors z = fedlora::svd(Matrix(6, 4));
    for (double s : z.sigma) CHECK(s == 0.0);
    CHECK(ortho_defect(z.u) < 1e-12);
    CHECK(ortho_defect(fedlora::transpose(z.vt)) < 1e-12);

    const Matrix u = gaussian_matrix(6, 1, 1.0, 71);
    const Matrix v = gaussian_matrix(1, 4, 1.0, 72);
    const Matrix r1 = fedlora::matmul(u, v);
    const fedlora::SvdFactors f = fedlora::svd(r1);
    const double want = fedlora::frobenius_norm(u) * fedlora::frobenius_norm(v);
    CHECK(f.sigma[0] == doctest::Approx(want).epsilon(1e-10));
    for (std::size_t i = 1; i < f.sigma.size(); ++i) {
        CHECK(f.sigma[i] <= 1e-12 * f.sigma[0]);
    }
    CHECK(ortho_defect(f.u) < 1e-9);
}

TEST_CASE("svd rejects empty matrices") {
    CHECK_THROWS_AS(fedlora::svd(Matrix(0, 3)), std::invalid_argument);
    CHECK_THROWS_AS(fedlora::svd(Matrix(3, 0)), std::invalid_argument);
}

TEST_CASE("best_rank_approx leaves exactly the singular tail") {
    const Matrix m = gaussian_matrix(10, 8, 1.0, 90);
    const fedlora::SvdFactors f = fedlora::svd(m);
    for (int r : {0, 1, 3, 8}) {
        const Matrix approx = fedlora::best_rank_approx(m, r);
        double tail = 0.0;
        for (std::size_t i = static_cast<std::size_t>(r); i < f.sigma.size(); ++i) {
            tail += f.sigma[i] * f.sigma[i];
        }
        const double err = fedlora::frobenius_norm(fedlora::sub(m, approx));
        CHECK(std::fabs(err - std::sqrt(tail)) < 1e-9 * std::max(1.0, f.sigma.front()));
    }
    CHECK(rel_err(fedlora::best_rank_approx(m, 8), m) < 1e-12);
    CHECK(fedlora::best_rank_approx(m, 0) == Matrix(10, 8));
    CHECK_THROWS_AS(fedlora::best_rank_approx(m, 9), std::invalid_argument);
    CHECK_THROWS_AS(fedlora::best_rank_approx(m, -1), std::invalid_argument);
}

TEST_CASE("numerical_rank counts significant singular values") {
    CHECK(fedlora::numerical_rank(Matrix(5, 3)) == 0);
    CHECK(fedlora::numerical_rank(Matrix::identity(5)) == 5);

    const Matrix b = gaussian_matrix(9, 2, 1.0, 110);
    const Matrix a = gaussian_matrix(2, 6, 1.0, 111);
    CHECK(fedlora::numerical_rank(fedlora::matmul(b, a)) == 2);

    CHECK_THROWS_AS(fedlora::numerical_rank(Matrix::identity(2), 0.0),
                    std::invalid_argument);
}
