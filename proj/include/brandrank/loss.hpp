#pragma once

#include <algorithm>
#include <cmath>

namespace brandrank {

// p is clamped into [kProbClamp, 1 - kProbClamp] before the log, bounding
// the loss and its gradient at the boundaries.
constexpr double kProbClamp = 1e-7;

// Weighted log loss: -log(p) for positives, -w * log(1 - p) for negatives.
// Negatives are down-weighted (w <= 1) because unlabeled positives may be
// mixed into them.
inline double instance_loss(double p, int label, double negative_weight,
                            double clamp = kProbClamp) {
    const double pc = std::clamp(p, clamp, 1.0 - clamp);
    return label == 1 ? -std::log(pc) : -negative_weight * std::log1p(-pc);
}

// d(loss)/dp at the clamped probability; magnitude bounded by 1/clamp.
inline double instance_loss_dp(double p, int label, double negative_weight,
                               double clamp = kProbClamp) {
    const double pc = std::clamp(p, clamp, 1.0 - clamp);
    return label == 1 ? -1.0 / pc : negative_weight / (1.0 - pc);
}

} // namespace brandrank
