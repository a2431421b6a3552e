#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedlora {

/// Dense real matrix, row-major. The universal carrier for base weights,
/// adapter factors, residuals and gradients. Empty shapes (0 rows or
/// 0 columns) are legal so that rank-0 factorizations have a home.
class Matrix {
public:
    Matrix() = default;

    Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
        check_shape(rows, cols);
        data_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
    }

    Matrix(int rows, int cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        check_shape(rows, cols);
        if (data_.size() != static_cast<std::size_t>(rows) * cols) {
            throw std::invalid_argument("Matrix: data length " +
                                        std::to_string(data_.size()) +
                                        " does not match " + std::to_string(rows) +
                                        "x" + std::to_string(cols));
        }
    }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool operator==(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    static void check_shape(int rows, int cols) {
        if (rows < 0 || cols < 0) {
            throw std::invalid_argument("Matrix: negative dimension");
        }
    }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

}  // namespace fedlora
