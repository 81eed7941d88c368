#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "brandrank/csv.hpp"
#include "brandrank/errors.hpp"
#include "brandrank/model.hpp"

namespace brandrank {

// Mann-Whitney rank AUC with 0.5 credit for ties, via average ranks in
// O(n log n). Equals the fraction of (positive, negative) pairs ranked
// correctly.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw contract_error("auc: scores and labels must align and be nonempty");
    const size_t n = scores.size();
    size_t n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw data_error("auc: labels must be 0 or 1");
        n_pos += static_cast<size_t>(l);
    }
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw data_error("auc: undefined for single-class input");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        // 1-based average rank over the tie block [i, j)
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    const double p = static_cast<double>(n_pos);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(n_neg));
}

// Predict positive iff score >= threshold; F1 = 2PR/(P+R), 0 when undefined.
inline double f1_at_threshold(std::span<const double> scores, std::span<const int> labels,
                              double threshold) {
    if (scores.size() != labels.size() || scores.empty())
        throw contract_error("f1_at_threshold: scores and labels must align");
    size_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        if (predicted && labels[i] == 1) ++tp;
        else if (predicted && labels[i] == 0) ++fp;
        else if (!predicted && labels[i] == 1) ++fn;
    }
    const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall)
                                    : 0.0;
}

struct EvalReport {
    std::string variant;
    double auc = 0.0;
    double f1 = 0.0;
    size_t n = 0;
    size_t n_pos = 0;
    double threshold = 0.5;
    uint64_t config_hash = 0;
};

// Scores every instance with the model and computes AUC / F1.
inline EvalReport evaluate(const ModelParams& params,
                           std::span<const TrainingInstance> instances,
                           const FeatureTable& features, const Vocab& vocab,
                           const std::string& variant, double threshold = 0.5) {
    if (instances.empty()) throw data_error("evaluate: empty test set");
    std::vector<double> scores(instances.size());
    std::vector<int> labels(instances.size());
    ForwardCache cache;
    for (size_t i = 0; i < instances.size(); ++i) {
        auto enc = encode_instance(instances[i], features, vocab,
                                   params.config.repr_mode,
                                   !params.config.use_attention);
        scores[i] = forward(params, enc, features, cache);
        labels[i] = instances[i].label;
    }
    EvalReport report;
    report.variant = variant;
    report.auc = auc(scores, labels);
    report.f1 = f1_at_threshold(scores, labels, threshold);
    report.n = instances.size();
    report.n_pos = static_cast<size_t>(
        std::count(labels.begin(), labels.end(), 1));
    report.threshold = threshold;
    report.config_hash = params.config.hash();
    return report;
}

inline std::string format_report_header() {
    return "variant\tauc\tf1\tn\tn_pos\tthreshold\tconfig_hash";
}

inline std::string format_report_row(const EvalReport& r) {
    char buf[256];
    snprintf(buf, sizeof buf, "%s\t%.6f\t%.6f\t%zu\t%zu\t%.2f\t%016llx",
             r.variant.c_str(), r.auc, r.f1, r.n, r.n_pos, r.threshold,
             static_cast<unsigned long long>(r.config_hash));
    return buf;
}

inline void save_report(std::span<const EvalReport> reports, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error(path + ": cannot open for writing");
    out << format_report_header() << '\n';
    for (const auto& r : reports) out << format_report_row(r) << '\n';
    if (!out) throw data_error(path + ": write failed");
}

} // namespace brandrank
