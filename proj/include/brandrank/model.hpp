#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "brandrank/activations.hpp"
#include "brandrank/dataset.hpp"
#include "brandrank/errors.hpp"
#include "brandrank/features.hpp"
#include "brandrank/gradcheck.hpp"
#include "brandrank/loss.hpp"
#include "brandrank/matrix.hpp"
#include "brandrank/rng.hpp"

namespace brandrank {

constexpr double kSecondsPerDay = 86400.0;

// Model zoo configuration. The three modifications toggle independently:
//   Modification 1 <-> repr_mode == combined (features + learned embedding)
//   Modification 2 <-> use_action_matrices (per-action-type transforms)
//   Modification 3 <-> use_time_gate (interval-driven gate)
// With use_attention off the model is the plain GRU baseline: it consumes
// the 10 history inputs plus the query representation and reads the query
// brand's probability from a softmax over the whole brand vocabulary.
struct ModelConfig {
    size_t hidden_size = 256;
    size_t feature_dim = kFeatureDim;
    size_t brand_vocab_size = 0;
    ReprMode repr_mode = ReprMode::combined;
    bool use_attention = true;
    bool use_action_matrices = true;
    bool use_time_gate = true;
    bool learnable_initial_state = false;
    // The time gate consumes intervals in days: raw seconds saturate
    // sigmoid(Q_t * delta) immediately and kill the Q_t gradient.
    bool gate_delta_in_days = true;
    // The input-concatenation path (Modification 3 off, and the baselines)
    // carries the interval as a raw-seconds scalar; day scaling is an
    // opt-in improvement over that encoding.
    bool concat_delta_in_days = false;

    bool needs_embedding() const { return repr_mode != ReprMode::features; }
    bool needs_features() const { return repr_mode != ReprMode::one_hot; }

    // Per-step encoder input: brand-action representation, plus the action
    // one-hot when Modification 2 is off, plus delta_t when Modification 3
    // is off (the interval then reaches the model only through this slot).
    size_t step_input_dim() const {
        return feature_dim + (use_action_matrices ? 0 : 2) + (use_time_gate ? 0 : 1);
    }

    // Decoder consumes the query representation concatenated with the glimpse.
    size_t decoder_input_dim() const { return feature_dim + hidden_size; }

    double gate_delta(double delta_seconds) const {
        return gate_delta_in_days ? delta_seconds / kSecondsPerDay : delta_seconds;
    }

    double concat_delta(double delta_seconds) const {
        return concat_delta_in_days ? delta_seconds / kSecondsPerDay : delta_seconds;
    }

    void validate() const {
        if (hidden_size == 0 || feature_dim == 0)
            throw contract_error("ModelConfig: zero dimension");
        if (needs_embedding() && brand_vocab_size == 0)
            throw contract_error("ModelConfig: repr mode needs a brand vocabulary");
        if (!use_attention && brand_vocab_size == 0)
            throw contract_error("ModelConfig: GRU baseline needs a brand vocabulary");
    }

    std::string canonical_string() const {
        std::string s;
        s += "hidden=" + std::to_string(hidden_size);
        s += ";feature_dim=" + std::to_string(feature_dim);
        s += ";vocab=" + std::to_string(brand_vocab_size);
        s += ";repr=" + std::string(to_string(repr_mode));
        s += ";attention=" + std::to_string(use_attention);
        s += ";action_matrices=" + std::to_string(use_action_matrices);
        s += ";time_gate=" + std::to_string(use_time_gate);
        s += ";learnable_s0=" + std::to_string(learnable_initial_state);
        s += ";gate_delta_days=" + std::to_string(gate_delta_in_days);
        s += ";concat_delta_days=" + std::to_string(concat_delta_in_days);
        return s;
    }

    uint64_t hash() const { return fnv1a(canonical_string()); }
};

struct GruWeights {
    Matrix W_z, U_z, W_r, U_r, W_h, U_h;
};

struct ModelParams {
    ModelConfig config;
    GruWeights enc;
    Matrix W_t, Q_t;                    // time gate weights (Modification 3)
    Matrix attn_W, attn_U, attn_v;      // additive attention: two projections + score
    GruWeights dec;
    Matrix V_out;                       // 2 x hidden: distribution over labels {1, 0}
    Matrix V_brands;                    // vocab x hidden: baseline output head
    Matrix M_embed;                     // feature_dim x vocab (Modification 1)
    Matrix M_click, M_purchase;         // feature_dim x feature_dim (Modification 2)
    Matrix s0_enc, s0_dec;              // hidden x 1 initial states
    uint64_t version = 0;               // bumped by the trainer on every update

    static ModelParams init(const ModelConfig& config, uint64_t seed);
    ModelParams zeros_like() const;
    std::vector<ParamRef> param_refs();
    std::vector<const Matrix*> param_tensors() const;
    bool all_finite() const;
};

namespace detail {

inline void glorot_uniform(Matrix& m, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (auto& v : m.flat()) v = rng.uniform(-a, a);
}

inline void small_uniform(Matrix& m, Rng& rng, double a) {
    for (auto& v : m.flat()) v = rng.uniform(-a, a);
}

} // namespace detail

inline ModelParams ModelParams::init(const ModelConfig& config, uint64_t seed) {
    config.validate();
    ModelParams p;
    p.config = config;
    Rng rng(mix_seed(seed, 0x6d6f64656cull));
    const size_t H = config.hidden_size;
    const size_t I = config.step_input_dim();
    const size_t F = config.feature_dim;
    const size_t N = config.brand_vocab_size;

    auto init_gru = [&](GruWeights& w, size_t input_dim) {
        w.W_z = Matrix(H, input_dim);
        w.U_z = Matrix(H, H);
        w.W_r = Matrix(H, input_dim);
        w.U_r = Matrix(H, H);
        w.W_h = Matrix(H, input_dim);
        w.U_h = Matrix(H, H);
        detail::glorot_uniform(w.W_z, rng);
        detail::glorot_uniform(w.U_z, rng);
        detail::glorot_uniform(w.W_r, rng);
        detail::glorot_uniform(w.U_r, rng);
        detail::glorot_uniform(w.W_h, rng);
        detail::glorot_uniform(w.U_h, rng);
    };

    init_gru(p.enc, I);
    if (config.use_time_gate) {
        p.W_t = Matrix(H, I);
        p.Q_t = Matrix(H, 1);
        detail::glorot_uniform(p.W_t, rng);
        detail::glorot_uniform(p.Q_t, rng);
    }
    if (config.use_attention) {
        p.attn_W = Matrix(H, H);
        p.attn_U = Matrix(H, H);
        p.attn_v = Matrix(H, 1);
        detail::glorot_uniform(p.attn_W, rng);
        detail::glorot_uniform(p.attn_U, rng);
        detail::glorot_uniform(p.attn_v, rng);
        init_gru(p.dec, config.decoder_input_dim());
        p.V_out = Matrix(2, H);
        detail::glorot_uniform(p.V_out, rng);
    } else {
        p.V_brands = Matrix(N, H);
        detail::glorot_uniform(p.V_brands, rng);
    }
    if (config.needs_embedding()) {
        // Small so the combined representation starts close to the
        // engineered features and the embedding fine-tunes from there.
        p.M_embed = Matrix(F, N);
        detail::small_uniform(p.M_embed, rng, 0.01);
    }
    if (config.use_action_matrices) {
        // Near-identity start: Modification 2 begins as a pass-through.
        p.M_click = identity(F);
        p.M_purchase = identity(F);
        Matrix noise(F, F);
        detail::small_uniform(noise, rng, 0.01);
        for (size_t k = 0; k < noise.size(); ++k) p.M_click[k] += noise[k];
        detail::small_uniform(noise, rng, 0.01);
        for (size_t k = 0; k < noise.size(); ++k) p.M_purchase[k] += noise[k];
    }
    p.s0_enc = Matrix(H, 1);
    if (config.use_attention) p.s0_dec = Matrix(H, 1);
    return p;
}

inline ModelParams ModelParams::zeros_like() const {
    ModelParams z;
    z.config = config;
    auto zero_gru = [](const GruWeights& src, GruWeights& dst) {
        dst.W_z = brandrank::zeros_like(src.W_z);
        dst.U_z = brandrank::zeros_like(src.U_z);
        dst.W_r = brandrank::zeros_like(src.W_r);
        dst.U_r = brandrank::zeros_like(src.U_r);
        dst.W_h = brandrank::zeros_like(src.W_h);
        dst.U_h = brandrank::zeros_like(src.U_h);
    };
    zero_gru(enc, z.enc);
    z.W_t = brandrank::zeros_like(W_t);
    z.Q_t = brandrank::zeros_like(Q_t);
    z.attn_W = brandrank::zeros_like(attn_W);
    z.attn_U = brandrank::zeros_like(attn_U);
    z.attn_v = brandrank::zeros_like(attn_v);
    zero_gru(dec, z.dec);
    z.V_out = brandrank::zeros_like(V_out);
    z.V_brands = brandrank::zeros_like(V_brands);
    z.M_embed = brandrank::zeros_like(M_embed);
    z.M_click = brandrank::zeros_like(M_click);
    z.M_purchase = brandrank::zeros_like(M_purchase);
    z.s0_enc = brandrank::zeros_like(s0_enc);
    z.s0_dec = brandrank::zeros_like(s0_dec);
    return z;
}

// Active parameters in a fixed canonical order; this ordering is shared by
// the optimizer state, gradient containers, checkpoints and the gradient
// checker.
inline std::vector<ParamRef> ModelParams::param_refs() {
    std::vector<ParamRef> refs;
    auto add_gru = [&](const std::string& prefix, GruWeights& w) {
        refs.push_back({prefix + ".W_z", &w.W_z});
        refs.push_back({prefix + ".U_z", &w.U_z});
        refs.push_back({prefix + ".W_r", &w.W_r});
        refs.push_back({prefix + ".U_r", &w.U_r});
        refs.push_back({prefix + ".W_h", &w.W_h});
        refs.push_back({prefix + ".U_h", &w.U_h});
    };
    add_gru("enc", enc);
    if (config.use_time_gate) {
        refs.push_back({"time.W_t", &W_t});
        refs.push_back({"time.Q_t", &Q_t});
    }
    if (config.use_attention) {
        refs.push_back({"attn.W", &attn_W});
        refs.push_back({"attn.U", &attn_U});
        refs.push_back({"attn.v", &attn_v});
        add_gru("dec", dec);
        refs.push_back({"out.V", &V_out});
    } else {
        refs.push_back({"out.V_brands", &V_brands});
    }
    if (config.needs_embedding()) refs.push_back({"repr.M_embed", &M_embed});
    if (config.use_action_matrices) {
        refs.push_back({"repr.M_click", &M_click});
        refs.push_back({"repr.M_purchase", &M_purchase});
    }
    if (config.learnable_initial_state) {
        refs.push_back({"s0.enc", &s0_enc});
        if (config.use_attention) refs.push_back({"s0.dec", &s0_dec});
    }
    return refs;
}

inline std::vector<const Matrix*> ModelParams::param_tensors() const {
    auto refs = const_cast<ModelParams*>(this)->param_refs();
    std::vector<const Matrix*> out;
    out.reserve(refs.size());
    for (const auto& r : refs) out.push_back(r.tensor);
    return out;
}

inline bool ModelParams::all_finite() const {
    for (const Matrix* t : param_tensors())
        if (!t->all_finite()) return false;
    return true;
}

// Refills every active parameter with O(1)-scale noise. Gradient checks use
// this instead of the training initialization: the training-time embedding
// scale (~1e-2) drives some gradients below the relative-error formula's
// noise floor.
inline void randomize_params(ModelParams& params, Rng& rng, double scale = 0.5) {
    for (auto& ref : params.param_refs())
        for (auto& v : ref.tensor->flat()) v = rng.uniform(-scale, scale);
}

// ---- representation ops ----------------------------------------------------

// Brand representation per mode: engineered features, embedding column, or
// their sum (Modification 1).
inline Vec brand_repr(const ModelParams& params, const FeatureTable& features,
                      int feature_row, int vocab_index) {
    const auto& cfg = params.config;
    Vec r(cfg.feature_dim, 0.0);
    if (cfg.needs_features()) {
        if (feature_row < 0) throw contract_error("brand_repr: missing feature row");
        auto v = features.normalized.row(static_cast<size_t>(feature_row));
        if (v.size() != cfg.feature_dim)
            throw contract_error("brand_repr: feature dimension mismatch");
        std::copy(v.begin(), v.end(), r.begin());
    }
    if (cfg.needs_embedding()) {
        if (vocab_index < 0 || static_cast<size_t>(vocab_index) >= cfg.brand_vocab_size)
            throw data_error("brand_repr: brand index out of vocabulary");
        for (size_t i = 0; i < cfg.feature_dim; ++i)
            r[i] += params.M_embed(i, static_cast<size_t>(vocab_index));
    }
    return r;
}

// Brand-action representation: per-action-type matrix transform when
// Modification 2 is on, otherwise the representation concatenated with the
// action one-hot.
inline Vec action_transform(const ModelParams& params, std::span<const double> repr,
                            const std::array<double, 2>& action) {
    const auto& cfg = params.config;
    if (cfg.use_action_matrices) {
        const Matrix& m = action[0] != 0.0 ? params.M_purchase : params.M_click;
        Vec out(cfg.feature_dim, 0.0);
        matvec(m, repr, out);
        return out;
    }
    Vec out(repr.begin(), repr.end());
    out.push_back(action[0]);
    out.push_back(action[1]);
    return out;
}

// ---- recurrent cells -------------------------------------------------------

struct GruStepState {
    Vec x;                 // step input (kept for the backward pass)
    Vec s_prev;
    Vec z, r, c, s;
    Vec gate, gate_inner;  // time gate T_m and sigma(Q_t * delta) when gated
    double delta_scaled = 0.0;
    bool time_gated = false;
};

namespace detail {

inline void gru_core_forward(const GruWeights& w, GruStepState& st) {
    const size_t H = w.U_z.rows();
    st.z.assign(H, 0.0);
    st.r.assign(H, 0.0);
    st.c.assign(H, 0.0);
    matvec(w.W_z, st.x, st.z);
    matvec_add(w.U_z, st.s_prev, st.z);
    sigmoid_inplace(st.z);
    matvec(w.W_r, st.x, st.r);
    matvec_add(w.U_r, st.s_prev, st.r);
    sigmoid_inplace(st.r);
    Vec gated(H);
    for (size_t i = 0; i < H; ++i) gated[i] = st.r[i] * st.s_prev[i];
    matvec(w.W_h, st.x, st.c);
    matvec_add(w.U_h, gated, st.c);
    tanh_inplace(st.c);
}

} // namespace detail

// z = sigmoid(W_z x + U_z s), r = sigmoid(W_r x + U_r s),
// s' = z . tanh(W_h x + U_h (r . s)) + (1 - z) . s
inline GruStepState gru_step(const GruWeights& w, std::span<const double> x,
                             std::span<const double> s_prev) {
    GruStepState st;
    st.x.assign(x.begin(), x.end());
    st.s_prev.assign(s_prev.begin(), s_prev.end());
    detail::gru_core_forward(w, st);
    const size_t H = st.z.size();
    st.s.resize(H);
    for (size_t i = 0; i < H; ++i)
        st.s[i] = st.z[i] * st.c[i] + (1.0 - st.z[i]) * st.s_prev[i];
    return st;
}

// Time-gated variant: T = sigmoid(W_t x + sigmoid(Q_t * delta)) filters the
// candidate state alongside the update gate.
inline GruStepState time_gated_gru_step(const GruWeights& w, const Matrix& W_t,
                                        const Matrix& Q_t, std::span<const double> x,
                                        std::span<const double> s_prev, double delta) {
    if (delta < 0.0) throw contract_error("time_gated_gru_step: negative delta_t");
    GruStepState st;
    st.time_gated = true;
    st.delta_scaled = delta;
    st.x.assign(x.begin(), x.end());
    st.s_prev.assign(s_prev.begin(), s_prev.end());
    detail::gru_core_forward(w, st);
    const size_t H = st.z.size();
    st.gate_inner.resize(H);
    for (size_t i = 0; i < H; ++i) st.gate_inner[i] = sigmoid(Q_t(i, 0) * delta);
    st.gate.assign(H, 0.0);
    matvec(W_t, st.x, st.gate);
    for (size_t i = 0; i < H; ++i) st.gate[i] += st.gate_inner[i];
    sigmoid_inplace(st.gate);
    st.s.resize(H);
    for (size_t i = 0; i < H; ++i)
        st.s[i] = st.z[i] * st.gate[i] * st.c[i] + (1.0 - st.z[i]) * st.s_prev[i];
    return st;
}

// Backward through one (possibly time-gated) GRU step. Gradients are
// accumulated into gw / gW_t / gQ_t / dx / ds_prev.
inline void gru_step_backward(const GruWeights& w, const Matrix* W_t,
                              const GruStepState& st, std::span<const double> ds,
                              GruWeights& gw, Matrix* gW_t, Matrix* gQ_t,
                              std::span<double> dx, std::span<double> ds_prev) {
    const size_t H = st.z.size();
    Vec dz(H), dc(H);
    if (st.time_gated) {
        Vec dgate(H);
        for (size_t i = 0; i < H; ++i) {
            dz[i] = ds[i] * (st.gate[i] * st.c[i] - st.s_prev[i]);
            dgate[i] = ds[i] * st.z[i] * st.c[i];
            dc[i] = ds[i] * st.z[i] * st.gate[i];
            ds_prev[i] += ds[i] * (1.0 - st.z[i]);
        }
        // T = sigmoid(W_t x + sigmoid(Q_t delta))
        Vec da_gate(H);
        for (size_t i = 0; i < H; ++i)
            da_gate[i] = dgate[i] * sigmoid_deriv_from_value(st.gate[i]);
        add_outer(*gW_t, da_gate, st.x);
        matvec_t_add(*W_t, da_gate, dx);
        for (size_t i = 0; i < H; ++i) {
            const double du =
                da_gate[i] * sigmoid_deriv_from_value(st.gate_inner[i]);
            (*gQ_t)(i, 0) += du * st.delta_scaled;
        }
    } else {
        for (size_t i = 0; i < H; ++i) {
            dz[i] = ds[i] * (st.c[i] - st.s_prev[i]);
            dc[i] = ds[i] * st.z[i];
            ds_prev[i] += ds[i] * (1.0 - st.z[i]);
        }
    }

    Vec da_c(H);
    for (size_t i = 0; i < H; ++i) da_c[i] = dc[i] * tanh_deriv_from_value(st.c[i]);
    add_outer(gw.W_h, da_c, st.x);
    Vec gated(H);
    for (size_t i = 0; i < H; ++i) gated[i] = st.r[i] * st.s_prev[i];
    add_outer(gw.U_h, da_c, gated);
    matvec_t_add(w.W_h, da_c, dx);
    Vec d_gated(H, 0.0);
    matvec_t_add(w.U_h, da_c, d_gated);
    Vec dr(H);
    for (size_t i = 0; i < H; ++i) {
        dr[i] = d_gated[i] * st.s_prev[i];
        ds_prev[i] += d_gated[i] * st.r[i];
    }

    Vec da_r(H);
    for (size_t i = 0; i < H; ++i) da_r[i] = dr[i] * sigmoid_deriv_from_value(st.r[i]);
    add_outer(gw.W_r, da_r, st.x);
    add_outer(gw.U_r, da_r, st.s_prev);
    matvec_t_add(w.W_r, da_r, dx);
    matvec_t_add(w.U_r, da_r, ds_prev);

    Vec da_z(H);
    for (size_t i = 0; i < H; ++i) da_z[i] = dz[i] * sigmoid_deriv_from_value(st.z[i]);
    add_outer(gw.W_z, da_z, st.x);
    add_outer(gw.U_z, da_z, st.s_prev);
    matvec_t_add(w.W_z, da_z, dx);
    matvec_t_add(w.U_z, da_z, ds_prev);
}

// ---- attention ---------------------------------------------------------------

struct AttendState {
    std::vector<Vec> keys;  // tanh(W s_prev + U h_j) per encoder state
    Vec scores;             // e_j
    Vec alpha;              // softmax(e)
    Vec glimpse;            // sum_j alpha_j h_j
};

// Additive attention: e_j = v . tanh(W s_prev + U h_j); alpha = softmax(e);
// glimpse = sum_j alpha_j h_j.
inline AttendState attend(const Matrix& W, const Matrix& U, const Matrix& v,
                          std::span<const double> s_prev, const std::vector<Vec>& h) {
    if (h.empty()) throw contract_error("attend: need at least one encoder state");
    const size_t A = W.rows();
    const size_t H = U.cols();
    AttendState st;
    Vec projected(A, 0.0);
    matvec(W, s_prev, projected);
    st.keys.resize(h.size());
    st.scores.resize(h.size());
    for (size_t j = 0; j < h.size(); ++j) {
        Vec key = projected;
        matvec_add(U, h[j], key);
        tanh_inplace(key);
        st.scores[j] = dot(v.flat(), key);
        st.keys[j] = std::move(key);
    }
    st.alpha = st.scores;
    softmax_inplace(st.alpha);
    st.glimpse.assign(H, 0.0);
    for (size_t j = 0; j < h.size(); ++j) axpy(st.alpha[j], h[j], st.glimpse);
    return st;
}

inline AttendState attend(const ModelParams& params, std::span<const double> s_prev,
                          const std::vector<Vec>& h) {
    return attend(params.attn_W, params.attn_U, params.attn_v, s_prev, h);
}

// Backward: given d(glimpse) and upstream gradients, accumulates into the
// attention weights and per-state dh. ds_prev picks up the W-projection path.
inline void attend_backward(const Matrix& W, const Matrix& U, const Matrix& v,
                            std::span<const double> s_prev, const std::vector<Vec>& h,
                            const AttendState& st, std::span<const double> dglimpse,
                            Matrix& gW, Matrix& gU, Matrix& gv,
                            std::vector<Vec>& dh, std::span<double> ds_prev) {
    const size_t L = h.size();
    const size_t A = W.rows();
    Vec dalpha(L);
    for (size_t j = 0; j < L; ++j) {
        dalpha[j] = dot(dglimpse, h[j]);
        axpy(st.alpha[j], dglimpse, dh[j]);
    }
    // softmax backward
    double inner = 0.0;
    for (size_t j = 0; j < L; ++j) inner += dalpha[j] * st.alpha[j];
    Vec de(L);
    for (size_t j = 0; j < L; ++j) de[j] = st.alpha[j] * (dalpha[j] - inner);

    Vec dproj_sum(A, 0.0);
    for (size_t j = 0; j < L; ++j) {
        Vec da_key(A);
        for (size_t i = 0; i < A; ++i) {
            gv(i, 0) += de[j] * st.keys[j][i];
            da_key[i] = de[j] * v(i, 0) * tanh_deriv_from_value(st.keys[j][i]);
        }
        add_outer(gU, da_key, h[j]);
        matvec_t_add(U, da_key, dh[j]);
        axpy(1.0, da_key, dproj_sum);
    }
    add_outer(gW, dproj_sum, s_prev);
    matvec_t_add(W, dproj_sum, ds_prev);
}

// ---- full forward / backward ---------------------------------------------

struct ForwardCache {
    std::vector<GruStepState> steps;  // encoder steps (incl. query step for baseline)
    std::vector<Vec> h;               // encoder states
    std::vector<Vec> step_repr;       // brand representation per step (pre action transform)
    AttendState attn;
    Vec query_repr;
    GruStepState decoder;
    Vec probs;                        // 2 (attention) or vocab (baseline)
    double p = 0.0;
    uint64_t params_version = 0;
    const EncodedInstance* instance = nullptr;
};

namespace detail {

// Assembles the per-step encoder input; `repr_out` receives the brand
// representation so the backward pass can route gradients through it.
inline Vec assemble_step_input(const ModelParams& params, const FeatureTable& features,
                               const EncodedStep& step, Vec& repr_out) {
    const auto& cfg = params.config;
    repr_out = brand_repr(params, features, step.feature_row, step.vocab_index);
    Vec x = action_transform(params, repr_out, step.action);
    if (!cfg.use_time_gate) x.push_back(cfg.concat_delta(step.delta_t_seconds));
    return x;
}

// The query has no action: its representation passes through untransformed,
// padded with a zero action slot (and zero interval) where the input layout
// has them.
inline Vec assemble_query_input(const ModelParams& params, const FeatureTable& features,
                                const EncodedInstance& inst, Vec& repr_out) {
    const auto& cfg = params.config;
    repr_out = brand_repr(params, features, inst.query_feature_row, inst.query_vocab_index);
    Vec x = repr_out;
    if (!cfg.use_action_matrices) {
        x.push_back(0.0);
        x.push_back(0.0);
    }
    if (!cfg.use_time_gate) x.push_back(0.0);
    return x;
}

} // namespace detail

// Scores one encoded instance: probability in (0,1) that the user acts on
// the query brand. The cache retains everything backward() needs.
inline double forward(const ModelParams& params, const EncodedInstance& inst,
                      const FeatureTable& features, ForwardCache& cache) {
    const auto& cfg = params.config;
    cfg.validate();
    if (inst.steps.empty()) throw contract_error("forward: empty history");
    const size_t L = inst.steps.size();

    cache.steps.clear();
    cache.h.clear();
    cache.step_repr.clear();
    cache.instance = &inst;
    cache.params_version = params.version;

    Vec s(params.s0_enc.flat().begin(), params.s0_enc.flat().end());
    if (!cfg.learnable_initial_state) std::fill(s.begin(), s.end(), 0.0);

    cache.steps.reserve(L + 1);
    cache.step_repr.reserve(L + 1);
    cache.h.reserve(L);
    for (size_t m = 0; m < L; ++m) {
        Vec repr;
        Vec x = detail::assemble_step_input(params, features, inst.steps[m], repr);
        cache.step_repr.push_back(std::move(repr));
        GruStepState st =
            cfg.use_time_gate
                ? time_gated_gru_step(params.enc, params.W_t, params.Q_t, x, s,
                                      cfg.gate_delta(inst.steps[m].delta_t_seconds))
                : gru_step(params.enc, x, s);
        s = st.s;
        cache.h.push_back(st.s);
        cache.steps.push_back(std::move(st));
    }

    if (cfg.use_attention) {
        Vec s0d(params.s0_dec.flat().begin(), params.s0_dec.flat().end());
        if (!cfg.learnable_initial_state) std::fill(s0d.begin(), s0d.end(), 0.0);
        cache.attn = attend(params, s0d, cache.h);
        cache.query_repr =
            brand_repr(params, features, inst.query_feature_row, inst.query_vocab_index);
        Vec d = cache.query_repr;
        d.insert(d.end(), cache.attn.glimpse.begin(), cache.attn.glimpse.end());
        cache.decoder = gru_step(params.dec, d, s0d);
        cache.probs.assign(2, 0.0);
        matvec(params.V_out, cache.decoder.s, cache.probs);
        softmax_inplace(cache.probs);
        cache.p = cache.probs[0];  // entry 0 is the label-1 probability
    } else {
        // Baseline: feed the query representation as an extra step, then read
        // the query brand's entry from a softmax over the whole vocabulary.
        if (inst.query_vocab_index < 0 ||
            static_cast<size_t>(inst.query_vocab_index) >= cfg.brand_vocab_size)
            throw data_error("forward: baseline needs the query brand in the vocabulary");
        Vec repr;
        Vec x = detail::assemble_query_input(params, features, inst, repr);
        cache.step_repr.push_back(std::move(repr));
        GruStepState st = cfg.use_time_gate
                              ? time_gated_gru_step(params.enc, params.W_t, params.Q_t,
                                                    x, s, 0.0)
                              : gru_step(params.enc, x, s);
        cache.steps.push_back(std::move(st));
        cache.probs.assign(cfg.brand_vocab_size, 0.0);
        matvec(params.V_brands, cache.steps.back().s, cache.probs);
        softmax_inplace(cache.probs);
        cache.p = cache.probs[static_cast<size_t>(inst.query_vocab_index)];
    }
    return cache.p;
}

namespace detail {

inline void repr_backward(const ModelParams& params, std::span<const double> drepr,
                          int vocab_index, ModelParams& grads) {
    if (!params.config.needs_embedding()) return;
    const size_t k = static_cast<size_t>(vocab_index);
    for (size_t i = 0; i < params.config.feature_dim; ++i)
        grads.M_embed(i, k) += drepr[i];
}

// Backward through assemble_step_input / assemble_query_input. `is_query`
// selects the untransformed representation path.
inline void input_backward(const ModelParams& params, const FeatureTable& features,
                           const EncodedStep* step, int vocab_index,
                           std::span<const double> repr, std::span<const double> dx,
                           bool is_query, ModelParams& grads) {
    const auto& cfg = params.config;
    const size_t F = cfg.feature_dim;
    // Drop gradient slots for the action one-hot / delta_t concatenations:
    // they are data, not parameters.
    if (!is_query && cfg.use_action_matrices) {
        const bool purchase = step->action[0] != 0.0;
        Matrix& gm = purchase ? grads.M_purchase : grads.M_click;
        const Matrix& m = purchase ? params.M_purchase : params.M_click;
        add_outer(gm, dx.subspan(0, F), repr);
        Vec drepr(F, 0.0);
        matvec_t_add(m, dx.subspan(0, F), drepr);
        repr_backward(params, drepr, vocab_index, grads);
    } else {
        repr_backward(params, dx.subspan(0, F), vocab_index, grads);
    }
    (void)features;
}

} // namespace detail

// Exact gradients of the weighted log loss with respect to every active
// parameter, accumulated into `grads` (shaped via zeros_like). Embedding
// columns of brands absent from the instance receive zero gradient.
inline void backward(const ModelParams& params, const EncodedInstance& inst,
                     const FeatureTable& features, const ForwardCache& cache,
                     double negative_weight, ModelParams& grads,
                     double prob_clamp = kProbClamp) {
    const auto& cfg = params.config;
    if (cache.instance != &inst || cache.params_version != params.version)
        throw contract_error("backward: stale forward cache");
    const size_t H = cfg.hidden_size;
    const size_t L = inst.steps.size();
    const double dLdp = instance_loss_dp(cache.p, inst.label, negative_weight, prob_clamp);

    std::vector<Vec> dh(cache.h.size(), Vec(H, 0.0));
    Vec ds_next(H, 0.0);

    if (cfg.use_attention) {
        // p = probs[0]; softmax jacobian row 0
        Vec dlogits(2);
        dlogits[0] = dLdp * cache.probs[0] * (1.0 - cache.probs[0]);
        dlogits[1] = -dLdp * cache.probs[0] * cache.probs[1];
        add_outer(grads.V_out, dlogits, cache.decoder.s);
        Vec ds1(H, 0.0);
        matvec_t_add(params.V_out, dlogits, ds1);

        Vec dd(cfg.decoder_input_dim(), 0.0);
        Vec ds0_dec(H, 0.0);
        gru_step_backward(params.dec, nullptr, cache.decoder, ds1, grads.dec, nullptr,
                          nullptr, dd, ds0_dec);

        std::span<const double> dy0(dd.data(), cfg.feature_dim);
        std::span<const double> dglimpse(dd.data() + cfg.feature_dim, H);
        detail::repr_backward(params, dy0, inst.query_vocab_index, grads);

        Vec s0d(params.s0_dec.flat().begin(), params.s0_dec.flat().end());
        if (!cfg.learnable_initial_state) std::fill(s0d.begin(), s0d.end(), 0.0);
        attend_backward(params.attn_W, params.attn_U, params.attn_v, s0d, cache.h,
                        cache.attn, dglimpse, grads.attn_W, grads.attn_U, grads.attn_v,
                        dh, ds0_dec);
        if (cfg.learnable_initial_state)
            for (size_t i = 0; i < H; ++i) grads.s0_dec(i, 0) += ds0_dec[i];
    } else {
        const size_t q = static_cast<size_t>(inst.query_vocab_index);
        const size_t N = cfg.brand_vocab_size;
        Vec dlogits(N);
        for (size_t j = 0; j < N; ++j)
            dlogits[j] = dLdp * cache.probs[q] * ((j == q ? 1.0 : 0.0) - cache.probs[j]);
        add_outer(grads.V_brands, dlogits, cache.steps.back().s);
        ds_next.assign(H, 0.0);
        matvec_t_add(params.V_brands, dlogits, ds_next);

        // query step backward
        const GruStepState& st = cache.steps.back();
        Vec dx(st.x.size(), 0.0);
        Vec ds_prev(H, 0.0);
        gru_step_backward(params.enc, cfg.use_time_gate ? &params.W_t : nullptr, st,
                          ds_next, grads.enc, cfg.use_time_gate ? &grads.W_t : nullptr,
                          cfg.use_time_gate ? &grads.Q_t : nullptr, dx, ds_prev);
        detail::input_backward(params, features, nullptr, inst.query_vocab_index,
                               cache.step_repr[L], dx, /*is_query=*/true, grads);
        ds_next = std::move(ds_prev);
    }

    // BPTT over the 10 history steps.
    for (size_t m = L; m-- > 0;) {
        Vec ds(H);
        for (size_t i = 0; i < H; ++i)
            ds[i] = ds_next[i] + (m < dh.size() ? dh[m][i] : 0.0);
        const GruStepState& st = cache.steps[m];
        Vec dx(st.x.size(), 0.0);
        Vec ds_prev(H, 0.0);
        gru_step_backward(params.enc, cfg.use_time_gate ? &params.W_t : nullptr, st, ds,
                          grads.enc, cfg.use_time_gate ? &grads.W_t : nullptr,
                          cfg.use_time_gate ? &grads.Q_t : nullptr, dx, ds_prev);
        detail::input_backward(params, features, &inst.steps[m],
                               inst.steps[m].vocab_index, cache.step_repr[m], dx,
                               /*is_query=*/false, grads);
        ds_next = std::move(ds_prev);
    }
    if (cfg.learnable_initial_state)
        for (size_t i = 0; i < H; ++i) grads.s0_enc(i, 0) += ds_next[i];
}

} // namespace brandrank
