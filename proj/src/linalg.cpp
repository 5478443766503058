#include "flowcls/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowcls/error.hpp"

namespace flowcls::linalg {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::transpose() const {
    Matrix t(cols, rows);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) t(c, r) = (*this)(r, c);
    }
    return t;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw Error(ErrorKind::shape_error, "linalg", "matrix product dimension mismatch");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double v = a(i, k);
            for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += v * b(k, j);
        }
    }
    return out;
}

namespace {

double off_diagonal_norm(const Matrix& a) {
    double s = 0;
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            if (i != j) s += a(i, j) * a(i, j);
        }
    }
    return std::sqrt(s);
}

}  // namespace

EigenResult jacobi_eigen(const Matrix& symmetric, double tolerance, std::size_t max_sweeps) {
    if (symmetric.rows != symmetric.cols) throw Error(ErrorKind::shape_error, "linalg", "matrix is not square");
    const std::size_t n = symmetric.rows;
    Matrix a = symmetric;
    Matrix v = Matrix::identity(n);
    EigenResult res;
    while (res.sweeps < max_sweeps && off_diagonal_norm(a) >= tolerance) {
        ++res.sweeps;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) > a(y, y); });
    res.values.resize(n);
    res.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        res.values[j] = a(src, src);
        std::size_t big = 0;
        for (std::size_t k = 1; k < n; ++k) {
            if (std::abs(v(k, src)) > std::abs(v(big, src))) big = k;
        }
        const double sign = v(big, src) < 0 ? -1.0 : 1.0;
        for (std::size_t k = 0; k < n; ++k) res.vectors(k, j) = sign * v(k, src);
    }
    return res;
}

}  // namespace flowcls::linalg
