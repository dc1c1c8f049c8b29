#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <vector>

namespace spanrec {

// Row-major dense matrix of doubles. Deliberately minimal: the gradient code
// is written as explicit loops so every term of the chain rule is visible.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

    std::size_t size() const { return data.size(); }
    void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

// y = A x
inline void matvec(const Matrix& a, const double* x, double* y) {
    for (int r = 0; r < a.rows; ++r) {
        const double* arow = a.row(r);
        double acc = 0.0;
        for (int c = 0; c < a.cols; ++c) acc += arow[c] * x[c];
        y[r] = acc;
    }
}

// y = A^T x  (x has a.rows entries, y has a.cols entries; y is accumulated)
inline void matvec_transpose_add(const Matrix& a, const double* x, double* y) {
    for (int r = 0; r < a.rows; ++r) {
        const double* arow = a.row(r);
        const double xr = x[r];
        for (int c = 0; c < a.cols; ++c) y[c] += xr * arow[c];
    }
}

// A += x y^T
inline void outer_add(Matrix& a, const double* x, const double* y) {
    for (int r = 0; r < a.rows; ++r) {
        double* arow = a.row(r);
        const double xr = x[r];
        for (int c = 0; c < a.cols; ++c) arow[c] += xr * y[c];
    }
}

inline double dot(const double* x, const double* y, int n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

inline void axpy(double a, const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace spanrec
