#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "brandrank/errors.hpp"

namespace brandrank {

using Vec = std::vector<double>;

// Dense row-major matrix of 64-bit floats. All model weights and optimizer
// accumulators live in this type; vectors are stored as n x 1.
class Matrix {
public:
    Matrix() = default;
    Matrix(size_t rows, size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t size() const { return data_.size(); }

    double& operator()(size_t i, size_t j) { return data_[i * cols_ + j]; }
    double operator()(size_t i, size_t j) const { return data_[i * cols_ + j]; }

    double& operator[](size_t k) { return data_[k]; }
    double operator[](size_t k) const { return data_[k]; }

    std::span<double> row(size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<double> flat() { return {data_.data(), data_.size()}; }
    std::span<const double> flat() const { return {data_.data(), data_.size()}; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix zeros_like(const Matrix& m) { return Matrix(m.rows(), m.cols()); }

inline Matrix identity(size_t n) {
    Matrix m(n, n);
    for (size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

// ---- span kernels -------------------------------------------------------

// Four independent accumulators so the reduction vectorizes without
// fast-math reassociation.
inline double dot(std::span<const double> a, std::span<const double> b) {
    const size_t n = a.size();
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(std::span<double> x, double alpha) {
    for (double& v : x) v *= alpha;
}

// y = A x
inline void matvec(const Matrix& a, std::span<const double> x, std::span<double> y) {
    if (x.size() != a.cols() || y.size() != a.rows())
        throw contract_error("matvec: shape mismatch");
    for (size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
}

// y += A x
inline void matvec_add(const Matrix& a, std::span<const double> x, std::span<double> y) {
    if (x.size() != a.cols() || y.size() != a.rows())
        throw contract_error("matvec_add: shape mismatch");
    for (size_t i = 0; i < a.rows(); ++i) y[i] += dot(a.row(i), x);
}

// y += A^T x; row-major friendly (streams one row of A at a time).
inline void matvec_t_add(const Matrix& a, std::span<const double> x, std::span<double> y) {
    if (x.size() != a.rows() || y.size() != a.cols())
        throw contract_error("matvec_t_add: shape mismatch");
    for (size_t i = 0; i < a.rows(); ++i) axpy(x[i], a.row(i), y);
}

// G += a b^T
inline void add_outer(Matrix& g, std::span<const double> a, std::span<const double> b) {
    if (a.size() != g.rows() || b.size() != g.cols())
        throw contract_error("add_outer: shape mismatch");
    for (size_t i = 0; i < g.rows(); ++i) axpy(a[i], b, g.row(i));
}

inline void require_finite(std::span<const double> v, const std::string& what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw numeric_error(what + ": non-finite value");
    }
}

} // namespace brandrank
