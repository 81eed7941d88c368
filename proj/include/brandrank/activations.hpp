#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "brandrank/errors.hpp"
#include "brandrank/matrix.hpp"

namespace brandrank {

// Numerically stable logistic function: never evaluates exp of a large
// positive argument.
inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double sigmoid_deriv_from_value(double s) { return s * (1.0 - s); }
inline double tanh_deriv_from_value(double t) { return 1.0 - t * t; }

inline void sigmoid_inplace(std::span<double> v) {
    require_finite(v, "sigmoid");
    for (double& x : v) x = sigmoid(x);
}

inline void tanh_inplace(std::span<double> v) {
    require_finite(v, "tanh");
    for (double& x : v) x = std::tanh(x);
}

// Max-subtracted softmax; output sums to 1 within 1e-12 for finite input.
inline void softmax_inplace(std::span<double> v) {
    if (v.empty()) throw contract_error("softmax: empty input");
    require_finite(v, "softmax");
    const double m = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double& x : v) {
        x = std::exp(x - m);
        sum += x;
    }
    for (double& x : v) x /= sum;
}

inline Vec sigmoid_vec(Vec v) {
    sigmoid_inplace(v);
    return v;
}

inline Vec tanh_vec(Vec v) {
    tanh_inplace(v);
    return v;
}

inline Vec softmax_vec(Vec v) {
    softmax_inplace(v);
    return v;
}

} // namespace brandrank
