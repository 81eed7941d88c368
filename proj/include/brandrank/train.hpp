#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "brandrank/adagrad.hpp"
#include "brandrank/errors.hpp"
#include "brandrank/eval.hpp"
#include "brandrank/loss.hpp"
#include "brandrank/model.hpp"

namespace brandrank {

struct TrainConfig {
    size_t epochs = 10;
    size_t batch_size = 64;
    double learning_rate = 0.01;
    double adagrad_epsilon = 1e-8;
    double negative_weight = 0.5;  // w in (0, 1]
    double prob_clamp = kProbClamp;
    double clip_norm = 5.0;
    uint64_t seed = 0;
    size_t threads = 1;

    void validate() const {
        if (batch_size < 1) throw contract_error("TrainConfig: batch_size must be >= 1");
        if (negative_weight <= 0.0 || negative_weight > 1.0)
            throw contract_error("TrainConfig: negative_weight must be in (0, 1]");
        if (prob_clamp <= 0.0 || prob_clamp >= 0.5)
            throw contract_error("TrainConfig: prob_clamp must be in (0, 0.5)");
        if (learning_rate <= 0.0) throw contract_error("TrainConfig: learning_rate > 0");
        if (threads < 1) throw contract_error("TrainConfig: threads must be >= 1");
    }

    std::string canonical_string() const {
        std::string s;
        s += "epochs=" + std::to_string(epochs);
        s += ";batch=" + std::to_string(batch_size);
        s += ";lr=" + format_double(learning_rate);
        s += ";eps=" + format_double(adagrad_epsilon);
        s += ";w=" + format_double(negative_weight);
        s += ";clamp=" + format_double(prob_clamp);
        s += ";clip=" + format_double(clip_norm);
        s += ";seed=" + std::to_string(seed);
        return s;
    }
};

struct EpochStats {
    size_t epoch = 0;
    double mean_loss = 0.0;
    double train_auc = 0.5;
};

struct Checkpoint {
    static constexpr uint32_t kFormatVersion = 1;
    ModelParams params;        // carries the model config
    TrainConfig train_config;
    std::vector<Matrix> accumulators;  // aligned with params.param_refs()
    uint64_t vocab_hash = 0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochStats> trace;
};

namespace detail {

// Sum of squared entries over all gradient tensors.
inline double global_grad_norm(const ModelParams& grads) {
    double sq = 0.0;
    for (const Matrix* g : grads.param_tensors())
        for (double v : g->flat()) sq += v * v;
    return std::sqrt(sq);
}

inline void scale_grads(ModelParams& grads, double factor) {
    for (auto& ref : grads.param_refs())
        for (auto& v : ref.tensor->flat()) v *= factor;
}

inline void accumulate_grads(ModelParams& into, const ModelParams& from) {
    auto dst = into.param_refs();
    auto src = const_cast<ModelParams&>(from).param_refs();
    for (size_t t = 0; t < dst.size(); ++t) {
        auto d = dst[t].tensor->flat();
        auto s = src[t].tensor->flat();
        for (size_t k = 0; k < d.size(); ++k) d[k] += s[k];
    }
}

} // namespace detail

// AdaGrad training with deterministic per-epoch shuffling, mini-batch mean
// gradients, and global-norm clipping. Gradients within a batch may fan out
// over a worker pool; reduction order is fixed (chunk 0, 1, ...), so a run
// is bit-reproducible for a given thread count.
inline TrainResult train(std::span<const TrainingInstance> instances,
                         const FeatureTable& features, const Vocab& vocab,
                         const ModelConfig& model_config, const TrainConfig& config) {
    config.validate();
    model_config.validate();
    if (instances.empty()) throw data_error("train: empty training set");

    std::vector<EncodedInstance> encoded;
    encoded.reserve(instances.size());
    for (const auto& inst : instances)
        encoded.push_back(encode_instance(inst, features, vocab, model_config.repr_mode,
                                          !model_config.use_attention));

    TrainResult result;
    result.checkpoint.params = ModelParams::init(model_config, config.seed);
    result.checkpoint.train_config = config;
    result.checkpoint.vocab_hash = vocab.hash();
    ModelParams& params = result.checkpoint.params;

    std::vector<Matrix> param_snapshot;
    for (const Matrix* t : params.param_tensors())
        param_snapshot.push_back(zeros_like(*t));
    result.checkpoint.accumulators = std::move(param_snapshot);

    AdagradConfig opt{config.learning_rate, config.adagrad_epsilon};

    std::vector<size_t> order(encoded.size());
    std::iota(order.begin(), order.end(), 0);

    for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(config.seed, 0x65706f63ull + epoch));
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        std::vector<double> epoch_scores(encoded.size());
        std::vector<int> epoch_labels(encoded.size());

        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            const size_t end = std::min(order.size(), start + config.batch_size);
            const size_t batch_n = end - start;

            ModelParams grads = params.zeros_like();
            const size_t n_workers = std::min(config.threads, batch_n);
            if (n_workers <= 1) {
                ForwardCache cache;
                for (size_t i = start; i < end; ++i) {
                    const size_t idx = order[i];
                    const double p = forward(params, encoded[idx], features, cache);
                    const double loss = instance_loss(p, encoded[idx].label,
                                                      config.negative_weight,
                                                      config.prob_clamp);
                    if (!std::isfinite(loss))
                        throw numeric_error(
                            "train: non-finite loss at instance " + std::to_string(idx) +
                            " (user " + instances[idx].history.user_id + ")");
                    loss_sum += loss;
                    epoch_scores[idx] = p;
                    epoch_labels[idx] = encoded[idx].label;
                    backward(params, encoded[idx], features, cache,
                             config.negative_weight, grads, config.prob_clamp);
                }
            } else {
                std::vector<ModelParams> worker_grads;
                std::vector<double> worker_loss(n_workers, 0.0);
                std::vector<std::string> worker_error(n_workers);
                worker_grads.reserve(n_workers);
                for (size_t w = 0; w < n_workers; ++w)
                    worker_grads.push_back(params.zeros_like());
                std::vector<std::thread> pool;
                for (size_t w = 0; w < n_workers; ++w) {
                    pool.emplace_back([&, w] {
                        try {
                            ForwardCache cache;
                            for (size_t i = start + w; i < end; i += n_workers) {
                                const size_t idx = order[i];
                                const double p =
                                    forward(params, encoded[idx], features, cache);
                                const double loss = instance_loss(
                                    p, encoded[idx].label, config.negative_weight,
                                    config.prob_clamp);
                                if (!std::isfinite(loss))
                                    throw numeric_error(
                                        "train: non-finite loss at instance " +
                                        std::to_string(idx));
                                worker_loss[w] += loss;
                                epoch_scores[idx] = p;
                                epoch_labels[idx] = encoded[idx].label;
                                backward(params, encoded[idx], features, cache,
                                         config.negative_weight, worker_grads[w],
                                         config.prob_clamp);
                            }
                        } catch (const std::exception& e) {
                            worker_error[w] = e.what();
                        }
                    });
                }
                for (auto& t : pool) t.join();
                for (size_t w = 0; w < n_workers; ++w) {
                    if (!worker_error[w].empty()) throw numeric_error(worker_error[w]);
                    loss_sum += worker_loss[w];
                    detail::accumulate_grads(grads, worker_grads[w]);
                }
            }

            detail::scale_grads(grads, 1.0 / static_cast<double>(batch_n));
            const double norm = detail::global_grad_norm(grads);
            if (config.clip_norm > 0.0 && norm > config.clip_norm)
                detail::scale_grads(grads, config.clip_norm / norm);

            auto refs = params.param_refs();
            auto grad_refs = grads.param_refs();
            for (size_t t = 0; t < refs.size(); ++t)
                adagrad_step(*refs[t].tensor, *grad_refs[t].tensor,
                             result.checkpoint.accumulators[t], opt);
            params.version++;
        }

        if (!params.all_finite())
            throw numeric_error("train: non-finite parameter after epoch " +
                                std::to_string(epoch));

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / static_cast<double>(encoded.size());
        const auto n_pos = std::count(epoch_labels.begin(), epoch_labels.end(), 1);
        stats.train_auc = (n_pos == 0 || static_cast<size_t>(n_pos) == epoch_labels.size())
                              ? 0.5
                              : auc(epoch_scores, epoch_labels);
        result.trace.push_back(stats);
    }
    return result;
}

// ---- checkpoint file format -----------------------------------------------

// Plain text, UTF-8. Doubles are written with 17 significant digits so a
// save/load round trip is bit-exact.
inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error(path + ": cannot open for writing");
    const auto& cfg = ckpt.params.config;
    out << "brandrank-checkpoint\n";
    out << "version " << Checkpoint::kFormatVersion << '\n';
    out << "hidden_size " << cfg.hidden_size << '\n';
    out << "feature_dim " << cfg.feature_dim << '\n';
    out << "brand_vocab_size " << cfg.brand_vocab_size << '\n';
    out << "repr_mode " << to_string(cfg.repr_mode) << '\n';
    out << "use_attention " << cfg.use_attention << '\n';
    out << "use_action_matrices " << cfg.use_action_matrices << '\n';
    out << "use_time_gate " << cfg.use_time_gate << '\n';
    out << "learnable_initial_state " << cfg.learnable_initial_state << '\n';
    out << "gate_delta_in_days " << cfg.gate_delta_in_days << '\n';
    out << "concat_delta_in_days " << cfg.concat_delta_in_days << '\n';
    out << "train " << ckpt.train_config.canonical_string() << '\n';
    char hex[32];
    snprintf(hex, sizeof hex, "%016llx",
             static_cast<unsigned long long>(ckpt.vocab_hash));
    out << "vocab_hash " << hex << '\n';

    auto refs = const_cast<ModelParams&>(ckpt.params).param_refs();
    auto write_tensor = [&](const std::string& kind, const std::string& name,
                            const Matrix& m) {
        out << kind << ' ' << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (size_t i = 0; i < m.rows(); ++i) {
            auto row = m.row(i);
            for (size_t j = 0; j < row.size(); ++j) {
                if (j) out << ' ';
                out << format_double(row[j]);
            }
            out << '\n';
        }
    };
    for (const auto& ref : refs) write_tensor("param", ref.name, *ref.tensor);
    for (size_t t = 0; t < refs.size(); ++t)
        write_tensor("accum", refs[t].name, ckpt.accumulators[t]);
    out << "end\n";
    out.close();
    if (!out) throw data_error(path + ": write failed");
}

namespace detail {

inline std::string expect_line(std::ifstream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line))
        throw data_error(path + ": truncated checkpoint");
    return line;
}

inline std::pair<std::string, std::string> split_kv(const std::string& line,
                                                    const std::string& path) {
    const auto space = line.find(' ');
    if (space == std::string::npos)
        throw data_error(path + ": malformed checkpoint line '" + line + "'");
    return {line.substr(0, space), line.substr(space + 1)};
}

} // namespace detail

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error(path + ": cannot open");
    if (detail::expect_line(in, path) != "brandrank-checkpoint")
        throw data_error(path + ": not a brandrank checkpoint");
    {
        auto [key, value] = detail::split_kv(detail::expect_line(in, path), path);
        if (key != "version")
            throw data_error(path + ": missing version field");
        if (std::stoul(value) != Checkpoint::kFormatVersion)
            throw data_error(path + ": incompatible checkpoint version " + value +
                             " (expected " + std::to_string(Checkpoint::kFormatVersion) +
                             ")");
    }
    ModelConfig cfg;
    TrainConfig tcfg;
    uint64_t vocab_hash = 0;
    for (;;) {
        auto line = detail::expect_line(in, path);
        auto [key, value] = detail::split_kv(line, path);
        if (key == "hidden_size") cfg.hidden_size = std::stoul(value);
        else if (key == "feature_dim") cfg.feature_dim = std::stoul(value);
        else if (key == "brand_vocab_size") cfg.brand_vocab_size = std::stoul(value);
        else if (key == "repr_mode") cfg.repr_mode = repr_mode_from_string(value);
        else if (key == "use_attention") cfg.use_attention = value == "1";
        else if (key == "use_action_matrices") cfg.use_action_matrices = value == "1";
        else if (key == "use_time_gate") cfg.use_time_gate = value == "1";
        else if (key == "learnable_initial_state")
            cfg.learnable_initial_state = value == "1";
        else if (key == "gate_delta_in_days") cfg.gate_delta_in_days = value == "1";
        else if (key == "concat_delta_in_days") cfg.concat_delta_in_days = value == "1";
        else if (key == "train") {
            // informational snapshot; parsed leniently
            std::stringstream ss(value);
            std::string field;
            while (std::getline(ss, field, ';')) {
                const auto eq = field.find('=');
                if (eq == std::string::npos) continue;
                const std::string k = field.substr(0, eq);
                const std::string v = field.substr(eq + 1);
                if (k == "epochs") tcfg.epochs = std::stoul(v);
                else if (k == "batch") tcfg.batch_size = std::stoul(v);
                else if (k == "lr") tcfg.learning_rate = std::stod(v);
                else if (k == "eps") tcfg.adagrad_epsilon = std::stod(v);
                else if (k == "w") tcfg.negative_weight = std::stod(v);
                else if (k == "clamp") tcfg.prob_clamp = std::stod(v);
                else if (k == "clip") tcfg.clip_norm = std::stod(v);
                else if (k == "seed") tcfg.seed = std::stoull(v);
            }
        } else if (key == "vocab_hash") {
            vocab_hash = std::stoull(value, nullptr, 16);
            break;
        } else {
            throw data_error(path + ": unexpected checkpoint field '" + key + "'");
        }
    }

    Checkpoint ckpt;
    ckpt.params = ModelParams::init(cfg, 0);
    ckpt.train_config = tcfg;
    ckpt.vocab_hash = vocab_hash;
    auto refs = ckpt.params.param_refs();
    for (auto& ref : refs) ref.tensor->fill(0.0);
    ckpt.accumulators.clear();
    for (const Matrix* t : ckpt.params.param_tensors())
        ckpt.accumulators.push_back(zeros_like(*t));

    auto read_tensor = [&](const std::string& kind, const std::string& name, Matrix& m) {
        auto header = detail::expect_line(in, path);
        std::stringstream ss(header);
        std::string got_kind, got_name;
        size_t rows = 0, cols = 0;
        ss >> got_kind >> got_name >> rows >> cols;
        if (got_kind != kind || got_name != name || rows != m.rows() || cols != m.cols())
            throw data_error(path + ": checkpoint tensor mismatch at '" + header +
                             "', expected " + kind + " " + name);
        for (size_t i = 0; i < rows; ++i) {
            auto line = detail::expect_line(in, path);
            const char* ptr = line.data();
            const char* end = line.data() + line.size();
            for (size_t j = 0; j < cols; ++j) {
                while (ptr < end && *ptr == ' ') ++ptr;
                double v = 0.0;
                auto [next, ec] = std::from_chars(ptr, end, v);
                if (ec != std::errc())
                    throw data_error(path + ": bad value in tensor " + name);
                m(i, j) = v;
                ptr = next;
            }
        }
    };
    for (auto& ref : refs) read_tensor("param", ref.name, *ref.tensor);
    for (size_t t = 0; t < refs.size(); ++t)
        read_tensor("accum", refs[t].name, ckpt.accumulators[t]);
    if (detail::expect_line(in, path) != "end")
        throw data_error(path + ": truncated checkpoint (missing end marker)");
    return ckpt;
}

} // namespace brandrank
