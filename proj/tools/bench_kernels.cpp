#include <cstdio>
#include <cstdlib>
#include <string>

#include <omp.h>

#include "fedlora/linalg.hpp"
#include "fedlora/matrix.hpp"
#include "fedlora/rng.hpp"

namespace {

double time_best_of(int reps, double (*work)(const fedlora::Matrix&, const fedlora::Matrix&),
                    const fedlora::Matrix& a, const fedlora::Matrix& b) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        const double t0 = omp_get_wtime();
        volatile double sink = work(a, b);
        const double t1 = omp_get_wtime();
        (void)sink;
        if (t1 - t0 < best) best = t1 - t0;
    }
    return best;
}

double run_parallel_matmul(const fedlora::Matrix& a, const fedlora::Matrix& b) {
    return fedlora::matmul(a, b)(0, 0);
}

double run_serial_matmul(const fedlora::Matrix& a, const fedlora::Matrix& b) {
    return fedlora::serial::matmul(a, b)(0, 0);
}

double run_parallel_frobenius(const fedlora::Matrix& a, const fedlora::Matrix&) {
    return fedlora::frobenius_norm(a);
}

double run_serial_frobenius(const fedlora::Matrix& a, const fedlora::Matrix&) {
    return fedlora::serial::frobenius_norm(a);
}

}  // namespace

int main(int argc, char** argv) {
    int max_dim = 512;
    if (argc > 1) {
        max_dim = std::atoi(argv[1]);
        if (max_dim < 32) {
            std::fprintf(stderr, "usage: %s [max_dim >= 32]\n", argv[0]);
            return 2;
        }
    }

    std::printf("threads available: %d\n", omp_get_max_threads());
    std::printf("%-12s %6s %12s %12s %9s %9s\n", "kernel", "dim", "serial_s",
                "parallel_s", "speedup", "match");

    for (int dim = 32; dim <= max_dim; dim *= 2) {
        const fedlora::Matrix a = fedlora::gaussian_matrix(dim, dim, 1.0, 7 + dim);
        const fedlora::Matrix b = fedlora::gaussian_matrix(dim, dim, 1.0, 9 + dim);
        const int reps = dim >= 512 ? 3 : 7;

        const fedlora::Matrix ref = fedlora::serial::matmul(a, b);
        const fedlora::Matrix par = fedlora::matmul(a, b);
        const bool mm_match = ref == par;  // bitwise: parallel must not reorder sums
        const double mm_serial = time_best_of(reps, run_serial_matmul, a, b);
        const double mm_parallel = time_best_of(reps, run_parallel_matmul, a, b);
        std::printf("%-12s %6d %12.6f %12.6f %8.2fx %9s\n", "matmul", dim, mm_serial,
                    mm_parallel, mm_serial / mm_parallel, mm_match ? "bitwise" : "DIFFERS");

        const bool fr_match =
            fedlora::serial::frobenius_norm(a) == fedlora::frobenius_norm(a);
        const double fr_serial = time_best_of(reps, run_serial_frobenius, a, b);
        const double fr_parallel = time_best_of(reps, run_parallel_frobenius, a, b);
        std::printf("%-12s %6d %12.6f %12.6f %8.2fx %9s\n", "frobenius", dim, fr_serial,
                    fr_parallel, fr_serial / fr_parallel, fr_match ? "bitwise" : "DIFFERS");
    }

    std::puts("note: speedups depend on the core count of this machine;");
    std::puts("      on a single hardware thread both columns should be comparable.");
    return 0;
}
