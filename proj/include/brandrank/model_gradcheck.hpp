#pragma once

#include <string>
#include <vector>

#include "brandrank/gradcheck.hpp"
#include "brandrank/loss.hpp"
#include "brandrank/model.hpp"

namespace brandrank {

// Shared harness that checks the model's hand-derived gradients against
// central finite differences, per variant, on seeded random draws.
//
// Conditioning guard: a central difference at step h on a 64-bit objective
// of magnitude ~1 carries absolute noise around 1e-11; gradient entries
// below ~5e-7 sit under that resolution and would read as spurious error in
// the relative formula. Draws whose smallest nonzero analytic entry falls
// below the guard are skipped deterministically. The guard cannot hide a
// wrong gradient: on accepted draws a bad formula shows up as O(1) relative
// error, and a systematically vanishing analytic gradient exhausts the
// candidate scan, which is an error.
struct ModelGradCheckOptions {
    double step = 1e-5;
    size_t instances = 5;
    double min_gradient_entry = 2e-7;
    size_t max_candidates = 500;
    double negative_weight = 0.5;
    size_t history_length = 4;
    size_t brand_count = 3;
    double param_scale = 0.8;
    double min_delta_days = 0.3;  // near-zero intervals starve the Q_t path
};

namespace detail {

inline FeatureTable synthetic_feature_table(size_t n_brands, size_t dim, Rng& rng) {
    FeatureTable t;
    for (size_t b = 0; b < n_brands; ++b) {
        std::string id = std::to_string(b);
        t.brand_ids.push_back("b" + std::string(id.size() < 2 ? "0" : "") + id);
    }
    t.rebuild_index();
    t.raw = Matrix(n_brands, dim);
    t.normalized = Matrix(n_brands, dim);
    for (auto& v : t.normalized.flat()) v = rng.next_double();
    return t;
}

inline EncodedInstance synthetic_instance(size_t length, size_t n_brands, Rng& rng,
                                          int label, double min_delta_days) {
    EncodedInstance inst;
    inst.label = label;
    for (size_t m = 0; m < length; ++m) {
        EncodedStep step;
        const int brand = static_cast<int>(rng.next_below(n_brands));
        step.feature_row = brand;
        step.vocab_index = brand;
        step.action = action_one_hot(rng.next_double() < 0.5 ? ActionType::click
                                                             : ActionType::purchase);
        step.delta_t_seconds =
            rng.uniform(min_delta_days * kSecondsPerDay, 2.0 * kSecondsPerDay);
        inst.steps.push_back(step);
    }
    const int query = static_cast<int>(rng.next_below(n_brands));
    inst.query_feature_row = query;
    inst.query_vocab_index = query;
    return inst;
}

} // namespace detail

// Max relative error over `instances` accepted draws for one model variant.
inline GradCheckResult model_gradient_check(const ModelConfig& config, uint64_t seed,
                                            const ModelGradCheckOptions& opt = {}) {
    GradCheckResult worst;
    size_t accepted = 0;
    for (size_t candidate = 0; candidate < opt.max_candidates && accepted < opt.instances;
         ++candidate) {
        Rng rng(mix_seed(seed, candidate * 7919 + config.hash()));
        auto params = ModelParams::init(config, mix_seed(seed, candidate));
        randomize_params(params, rng, opt.param_scale);
        auto features =
            detail::synthetic_feature_table(opt.brand_count, config.feature_dim, rng);
        auto inst =
            detail::synthetic_instance(opt.history_length, opt.brand_count, rng,
                                       candidate % 2 == 0 ? 1 : 0, opt.min_delta_days);

        ForwardCache cache;
        forward(params, inst, features, cache);
        auto grads = params.zeros_like();
        backward(params, inst, features, cache, opt.negative_weight, grads);

        double min_nonzero = std::numeric_limits<double>::infinity();
        for (const Matrix* g : grads.param_tensors())
            for (double v : g->flat())
                if (v != 0.0) min_nonzero = std::min(min_nonzero, std::fabs(v));
        if (min_nonzero < opt.min_gradient_entry) continue;
        ++accepted;

        auto refs = params.param_refs();
        std::vector<Matrix> analytic;
        for (auto& g : grads.param_refs()) analytic.push_back(*g.tensor);
        auto objective = [&] {
            ForwardCache scratch;
            return instance_loss(forward(params, inst, features, scratch), inst.label,
                                 opt.negative_weight);
        };
        auto result = finite_diff_check(objective, refs, analytic, opt.step);
        if (result.max_rel_error > worst.max_rel_error) worst = result;
    }
    if (accepted < opt.instances)
        throw numeric_error(
            "model_gradient_check: could not find enough well-conditioned draws; "
            "analytic gradients may be vanishing");
    return worst;
}

// The standard variant list: all 8 modification combinations of the
// attention model plus the plain GRU baseline.
struct GradCheckVariant {
    std::string name;
    ModelConfig config;
};

inline std::vector<GradCheckVariant> gradcheck_variants(size_t hidden, size_t feature_dim,
                                                        size_t vocab) {
    std::vector<GradCheckVariant> out;
    for (int mask = 0; mask < 8; ++mask) {
        const bool mod1 = mask & 1, mod2 = mask & 2, mod3 = mask & 4;
        ModelConfig cfg;
        cfg.hidden_size = hidden;
        cfg.feature_dim = feature_dim;
        cfg.brand_vocab_size = vocab;
        cfg.use_attention = true;
        cfg.repr_mode = mod1 ? ReprMode::combined : ReprMode::one_hot;
        cfg.use_action_matrices = mod2;
        cfg.use_time_gate = mod3;
        // Day scaling keeps the concatenated interval column differentiable
        // so the check exercises it with live gradients.
        cfg.concat_delta_in_days = true;
        std::string name = "attn";
        name += mod1 ? "+m1" : "";
        name += mod2 ? "+m2" : "";
        name += mod3 ? "+m3" : "";
        out.push_back({name, cfg});
    }
    ModelConfig base;
    base.hidden_size = hidden;
    base.feature_dim = feature_dim;
    base.brand_vocab_size = vocab;
    base.use_attention = false;
    base.repr_mode = ReprMode::features;
    base.use_action_matrices = false;
    base.use_time_gate = false;
    base.concat_delta_in_days = true;
    out.push_back({"gru", base});
    return out;
}

} // namespace brandrank
