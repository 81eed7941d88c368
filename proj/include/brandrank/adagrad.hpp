#pragma once

#include <cmath>
#include <vector>

#include "brandrank/errors.hpp"
#include "brandrank/matrix.hpp"

namespace brandrank {

struct AdagradConfig {
    double learning_rate = 0.01;
    double epsilon = 1e-8;
};

// Per-parameter squared-gradient accumulators, aligned with a fixed
// parameter ordering. Single-writer: one trainer mutates it at a time.
struct OptimizerState {
    AdagradConfig config;
    std::vector<Matrix> accum;

    static OptimizerState for_shapes(const std::vector<Matrix>& params, AdagradConfig cfg) {
        OptimizerState st;
        st.config = cfg;
        st.accum.reserve(params.size());
        for (const auto& p : params) st.accum.push_back(zeros_like(p));
        return st;
    }
};

// accum += grad^2; param -= lr * grad / (sqrt(accum) + eps), elementwise.
inline void adagrad_step(Matrix& param, const Matrix& grad, Matrix& accum,
                         const AdagradConfig& cfg) {
    if (!param.same_shape(grad) || !param.same_shape(accum))
        throw contract_error("adagrad_step: shape mismatch");
    auto p = param.flat();
    auto g = grad.flat();
    auto a = accum.flat();
    for (size_t i = 0; i < p.size(); ++i) {
        a[i] += g[i] * g[i];
        p[i] -= cfg.learning_rate * g[i] / (std::sqrt(a[i]) + cfg.epsilon);
    }
}

} // namespace brandrank
