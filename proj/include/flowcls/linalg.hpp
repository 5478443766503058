#pragma once

#include <cstddef>
#include <vector>

namespace flowcls::linalg {

/// Dense row-major matrix.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    static Matrix identity(std::size_t n);
    Matrix transpose() const;
    friend Matrix operator*(const Matrix& a, const Matrix& b);
};

struct EigenResult {
    std::vector<double> values;  // descending
    Matrix vectors;              // column j is the eigenvector of values[j]
    std::size_t sweeps = 0;
};

/// Cyclic Jacobi for symmetric matrices. Stops once the off-diagonal
/// Frobenius norm drops below `tolerance` or after `max_sweeps`. Each
/// eigenvector's largest-magnitude entry is made positive.
EigenResult jacobi_eigen(const Matrix& symmetric, double tolerance = 1e-12, std::size_t max_sweeps = 100);

}  // namespace flowcls::linalg
