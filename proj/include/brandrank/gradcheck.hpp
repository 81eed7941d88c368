#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "brandrank/errors.hpp"
#include "brandrank/matrix.hpp"

namespace brandrank {

// A named view into one parameter tensor. Model types expose their full
// parameter set as a vector of these, in a fixed canonical order.
struct ParamRef {
    std::string name;
    Matrix* tensor = nullptr;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    size_t worst_index = 0;
};

// Central-difference check of analytic gradients. `f` is a scalar function
// of the referenced parameters (evaluated with them mutated in place);
// `analytic` must match `params` in order and shape. Relative error per
// entry is |a - n| / max(1e-8, |a| + |n|); the maximum is returned.
template <typename F>
GradCheckResult finite_diff_check(F&& f, std::span<const ParamRef> params,
                                  const std::vector<Matrix>& analytic, double step) {
    if (step <= 0.0) throw contract_error("finite_diff_check: step must be positive");
    if (analytic.size() != params.size())
        throw contract_error("finite_diff_check: analytic gradient count mismatch");

    GradCheckResult result;
    for (size_t t = 0; t < params.size(); ++t) {
        Matrix& tensor = *params[t].tensor;
        if (!tensor.same_shape(analytic[t]))
            throw contract_error("finite_diff_check: shape mismatch for " + params[t].name);
        auto values = tensor.flat();
        for (size_t k = 0; k < values.size(); ++k) {
            const double saved = values[k];
            values[k] = saved + step;
            const double f_plus = f();
            values[k] = saved - step;
            const double f_minus = f();
            values[k] = saved;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
                throw numeric_error("finite_diff_check: non-finite objective at " +
                                    params[t].name);
            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double a = analytic[t][k];
            const double rel = std::fabs(a - numeric) /
                               std::max(1e-8, std::fabs(a) + std::fabs(numeric));
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_param = params[t].name;
                result.worst_index = k;
            }
        }
    }
    return result;
}

} // namespace brandrank
