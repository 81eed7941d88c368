#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "brandrank/csv.hpp"
#include "brandrank/errors.hpp"
#include "brandrank/features.hpp"
#include "brandrank/rng.hpp"

namespace brandrank {

constexpr size_t kHistoryLength = 10;
constexpr size_t kWindowLength = kHistoryLength + 1;

enum class ActionType { click, purchase };

inline const char* to_string(ActionType a) {
    return a == ActionType::click ? "click" : "purchase";
}

// Action one-hot: purchase = [1, 0], click = [0, 1].
inline std::array<double, 2> action_one_hot(ActionType a) {
    return a == ActionType::purchase ? std::array<double, 2>{1.0, 0.0}
                                     : std::array<double, 2>{0.0, 1.0};
}

struct ActionTuple {
    std::string user_id;
    std::string brand_id;
    ActionType action_type = ActionType::click;
    int64_t timestamp = 0;
};

struct HistoryStep {
    std::string brand_id;
    ActionType action_type = ActionType::click;
    int64_t delta_t = 0;  // seconds to the next action (last step: to query time)
};

struct UserHistory {
    std::string user_id;
    std::vector<HistoryStep> steps;
};

struct TrainingInstance {
    UserHistory history;        // exactly 10 steps
    std::string query_brand;
    int64_t query_time = 0;
    int label = 0;              // 1 = user acted on query_brand at query_time
};

using UserActions = std::vector<std::pair<std::string, std::vector<ActionTuple>>>;

// ---- parsing -------------------------------------------------------------

// Per-user sequences sorted ascending by timestamp; ties keep file order.
// Users come out sorted by id so downstream output is input-order free.
inline UserActions parse_action_log(const std::string& path) {
    CsvReader reader(path, "user_id,brand_id,action_type,timestamp");
    std::unordered_map<std::string, std::vector<ActionTuple>> by_user;
    std::vector<std::string> f;
    while (reader.next(f)) {
        if (f.size() != 4) reader.fail("expected 4 columns");
        ActionTuple t;
        t.user_id = f[0];
        t.brand_id = f[1];
        if (f[2] == "click") t.action_type = ActionType::click;
        else if (f[2] == "purchase") t.action_type = ActionType::purchase;
        else reader.fail("unknown action_type '" + f[2] + "'");
        t.timestamp = reader.parse_int(f[3]);
        by_user[t.user_id].push_back(std::move(t));
    }
    UserActions users;
    users.reserve(by_user.size());
    for (auto& [id, actions] : by_user) {
        std::stable_sort(actions.begin(), actions.end(),
                         [](const ActionTuple& a, const ActionTuple& b) {
                             return a.timestamp < b.timestamp;
                         });
        users.emplace_back(id, std::move(actions));
    }
    std::sort(users.begin(), users.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return users;
}

// ---- sparsity filter -----------------------------------------------------

// Iteratively removes users with fewer than min_user_actions actions and
// brands with fewer than min_brand_actions actions until a fixed point.
inline UserActions filter_sparse(UserActions users, size_t min_user_actions,
                                 size_t min_brand_actions) {
    if (min_user_actions < 1 || min_brand_actions < 1)
        throw contract_error("filter_sparse: thresholds must be >= 1");
    bool changed = true;
    while (changed) {
        changed = false;
        for (auto it = users.begin(); it != users.end();) {
            if (it->second.size() < min_user_actions) {
                it = users.erase(it);
                changed = true;
            } else {
                ++it;
            }
        }
        std::unordered_map<std::string, size_t> brand_counts;
        for (const auto& [id, actions] : users)
            for (const auto& a : actions) ++brand_counts[a.brand_id];
        std::unordered_set<std::string> sparse_brands;
        for (const auto& [brand, count] : brand_counts)
            if (count < min_brand_actions) sparse_brands.insert(brand);
        if (!sparse_brands.empty()) {
            changed = true;
            for (auto& [id, actions] : users) {
                std::erase_if(actions, [&](const ActionTuple& a) {
                    return sparse_brands.count(a.brand_id) > 0;
                });
            }
        }
    }
    size_t total = 0;
    for (const auto& [id, actions] : users) total += actions.size();
    if (total == 0) throw data_error("filter_sparse: all actions filtered out");
    return users;
}

// ---- windowing -----------------------------------------------------------

// Consecutive blocks of 11 actions (configurable stride; 11 = the default
// non-overlapping cut). The first 10 actions form the history; the 11th
// supplies the query brand, query time and label 1. Remainders are dropped.
inline std::vector<TrainingInstance> window_sequences(
    const std::string& user_id, std::span<const ActionTuple> actions,
    size_t stride = kWindowLength) {
    if (stride < 1) throw contract_error("window_sequences: stride must be >= 1");
    std::vector<TrainingInstance> out;
    if (actions.size() < kWindowLength) return out;
    for (size_t start = 0; start + kWindowLength <= actions.size(); start += stride) {
        TrainingInstance inst;
        inst.history.user_id = user_id;
        inst.history.steps.reserve(kHistoryLength);
        for (size_t i = 0; i < kHistoryLength; ++i) {
            const auto& a = actions[start + i];
            const auto& next = actions[start + i + 1];
            inst.history.steps.push_back(
                {a.brand_id, a.action_type, next.timestamp - a.timestamp});
        }
        const auto& query = actions[start + kHistoryLength];
        inst.query_brand = query.brand_id;
        inst.query_time = query.timestamp;
        inst.label = 1;
        out.push_back(std::move(inst));
    }
    return out;
}

// ---- negative sampling ---------------------------------------------------

// Copy of the positive with label 0 and the query brand replaced by a
// uniform draw from brand_universe \ {positive query brand}.
inline TrainingInstance negative_sample(const TrainingInstance& positive,
                                        std::span<const std::string> brand_universe,
                                        Rng& rng) {
    if (brand_universe.size() < 2)
        throw data_error("negative_sample: need at least 2 brands in the universe");
    TrainingInstance neg = positive;
    neg.label = 0;
    auto it = std::lower_bound(brand_universe.begin(), brand_universe.end(),
                               positive.query_brand);
    const bool present =
        it != brand_universe.end() && *it == positive.query_brand;
    const size_t pos_idx = static_cast<size_t>(it - brand_universe.begin());
    if (present) {
        size_t j = rng.next_below(brand_universe.size() - 1);
        if (j >= pos_idx) ++j;
        neg.query_brand = brand_universe[j];
    } else {
        neg.query_brand = brand_universe[rng.next_below(brand_universe.size())];
    }
    return neg;
}

inline TrainingInstance negative_sample(const TrainingInstance& positive,
                                        std::span<const std::string> brand_universe,
                                        uint64_t seed) {
    Rng rng(seed);
    return negative_sample(positive, brand_universe, rng);
}

// ---- vocabulary ----------------------------------------------------------

struct Vocab {
    std::vector<std::string> ids;  // index -> brand id, sorted

    static Vocab from_brands(std::vector<std::string> brands) {
        std::sort(brands.begin(), brands.end());
        brands.erase(std::unique(brands.begin(), brands.end()), brands.end());
        Vocab v;
        v.ids = std::move(brands);
        v.rebuild();
        return v;
    }

    size_t size() const { return ids.size(); }

    int index_of(const std::string& brand_id) const {
        auto it = index_.find(brand_id);
        return it == index_.end() ? -1 : static_cast<int>(it->second);
    }

    uint64_t hash() const {
        uint64_t h = 0xcbf29ce484222325ull;
        for (size_t i = 0; i < ids.size(); ++i)
            h = fnv1a(ids[i] + "," + std::to_string(i) + "\n", h);
        return h;
    }

    void rebuild() {
        index_.clear();
        for (size_t i = 0; i < ids.size(); ++i) index_[ids[i]] = i;
    }

private:
    std::unordered_map<std::string, size_t> index_;
};

inline void save_vocab_csv(const Vocab& vocab, const std::string& path) {
    CsvWriter out(path);
    out.line("brand_id,index");
    for (size_t i = 0; i < vocab.ids.size(); ++i)
        out.row({vocab.ids[i], std::to_string(i)});
    out.close();
}

inline Vocab load_vocab_csv(const std::string& path) {
    CsvReader reader(path, "brand_id,index");
    Vocab v;
    std::vector<std::string> f;
    while (reader.next(f)) {
        if (f.size() != 2) reader.fail("expected 2 columns");
        if (reader.parse_int(f[1]) != static_cast<int64_t>(v.ids.size()))
            reader.fail("indices must be dense and ascending");
        v.ids.push_back(f[0]);
    }
    v.rebuild();
    return v;
}

// ---- encoding ------------------------------------------------------------

enum class ReprMode { features, one_hot, combined };

inline const char* to_string(ReprMode m) {
    switch (m) {
        case ReprMode::features: return "features";
        case ReprMode::one_hot: return "one_hot";
        case ReprMode::combined: return "combined";
    }
    return "?";
}

inline ReprMode repr_mode_from_string(const std::string& s) {
    if (s == "features") return ReprMode::features;
    if (s == "one_hot") return ReprMode::one_hot;
    if (s == "combined") return ReprMode::combined;
    throw data_error("unknown repr mode '" + s + "'");
}

struct EncodedStep {
    int feature_row = -1;                 // row in the feature table (features/combined)
    int vocab_index = -1;                 // dense brand index (one_hot/combined)
    std::array<double, 2> action{};      // purchase = [1,0], click = [0,1]
    double delta_t_seconds = 0.0;
};

// Numeric view of one instance. Feature vectors are referenced by row to
// keep large datasets compact; the model resolves rows via the table.
struct EncodedInstance {
    std::vector<EncodedStep> steps;
    int query_feature_row = -1;
    int query_vocab_index = -1;
    int label = 0;
};

// `include_vocab_index` forces dense indices regardless of mode; the GRU
// baseline needs them to read the query entry of its vocabulary softmax.
inline EncodedInstance encode_instance(const TrainingInstance& instance,
                                       const FeatureTable& features, const Vocab& vocab,
                                       ReprMode mode, bool include_vocab_index = false) {
    const bool need_features = mode != ReprMode::one_hot;
    const bool need_index = mode != ReprMode::features || include_vocab_index;
    auto resolve = [&](const std::string& brand_id, int& feature_row, int& vocab_index) {
        if (need_features) {
            if (!features.has(brand_id))
                throw data_error("brand '" + brand_id + "' has no feature vector");
            feature_row = static_cast<int>(features.row_of(brand_id));
        }
        if (need_index) {
            vocab_index = vocab.index_of(brand_id);
            if (vocab_index < 0)
                throw data_error("brand '" + brand_id + "' is not in the vocabulary");
        }
    };
    EncodedInstance enc;
    enc.label = instance.label;
    enc.steps.reserve(instance.history.steps.size());
    for (const auto& step : instance.history.steps) {
        if (step.delta_t < 0) throw data_error("negative delta_t in history");
        EncodedStep es;
        resolve(step.brand_id, es.feature_row, es.vocab_index);
        es.action = action_one_hot(step.action_type);
        es.delta_t_seconds = static_cast<double>(step.delta_t);
        enc.steps.push_back(es);
    }
    resolve(instance.query_brand, enc.query_feature_row, enc.query_vocab_index);
    return enc;
}

// ---- splitting and the jsonl interchange format ---------------------------

struct DatasetSplit {
    std::vector<TrainingInstance> train;
    std::vector<TrainingInstance> test;
};

// Temporal split: each user's last window goes to test, the rest to train.
// Negatives are drawn per positive within each split (negatives_per_positive
// is 1 unless configured otherwise), giving an exact positives:negatives
// ratio of 1:k.
inline DatasetSplit split_and_sample(const UserActions& users, const Vocab& vocab,
                                     uint64_t seed, size_t stride = kWindowLength,
                                     size_t negatives_per_positive = 1) {
    DatasetSplit split;
    for (const auto& [user_id, actions] : users) {
        auto windows = window_sequences(user_id, actions, stride);
        if (windows.empty()) continue;
        for (size_t w = 0; w + 1 < windows.size(); ++w)
            split.train.push_back(std::move(windows[w]));
        split.test.push_back(std::move(windows.back()));
    }
    auto add_negatives = [&](std::vector<TrainingInstance>& set, uint64_t tag) {
        const size_t n_pos = set.size();
        set.reserve(n_pos * (1 + negatives_per_positive));
        for (size_t i = 0; i < n_pos; ++i) {
            for (size_t k = 0; k < negatives_per_positive; ++k) {
                Rng rng(mix_seed(seed, tag ^ (i * negatives_per_positive + k)));
                set.push_back(negative_sample(set[i], vocab.ids, rng));
            }
        }
    };
    add_negatives(split.train, 0x7261696eull);
    add_negatives(split.test, 0x74657374ull);
    return split;
}

inline void save_instances_jsonl(std::span<const TrainingInstance> instances,
                                 const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error(path + ": cannot open for writing");
    for (const auto& inst : instances) {
        nlohmann::json steps = nlohmann::json::array();
        for (const auto& s : inst.history.steps)
            steps.push_back({s.brand_id, to_string(s.action_type), s.delta_t});
        nlohmann::json j{{"user", inst.history.user_id},
                         {"history", steps},
                         {"query_brand", inst.query_brand},
                         {"query_time", inst.query_time},
                         {"label", inst.label}};
        out << j.dump() << '\n';
    }
    if (!out) throw data_error(path + ": write failed");
}

inline std::vector<TrainingInstance> load_instances_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error(path + ": cannot open");
    std::vector<TrainingInstance> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw data_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        TrainingInstance inst;
        inst.history.user_id = j.at("user").get<std::string>();
        for (const auto& s : j.at("history")) {
            HistoryStep step;
            step.brand_id = s.at(0).get<std::string>();
            const std::string action = s.at(1).get<std::string>();
            if (action == "click") step.action_type = ActionType::click;
            else if (action == "purchase") step.action_type = ActionType::purchase;
            else
                throw data_error(path + ":" + std::to_string(line_no) +
                                 ": unknown action_type '" + action + "'");
            step.delta_t = s.at(2).get<int64_t>();
            inst.history.steps.push_back(std::move(step));
        }
        if (inst.history.steps.size() != kHistoryLength)
            throw data_error(path + ":" + std::to_string(line_no) +
                             ": history must have exactly 10 steps");
        inst.query_brand = j.at("query_brand").get<std::string>();
        inst.query_time = j.at("query_time").get<int64_t>();
        inst.label = j.at("label").get<int>();
        if (inst.label != 0 && inst.label != 1)
            throw data_error(path + ":" + std::to_string(line_no) + ": label must be 0 or 1");
        out.push_back(std::move(inst));
    }
    return out;
}

} // namespace brandrank
