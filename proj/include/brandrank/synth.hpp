#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "brandrank/csv.hpp"
#include "brandrank/dataset.hpp"
#include "brandrank/errors.hpp"
#include "brandrank/features.hpp"
#include "brandrank/matrix.hpp"
#include "brandrank/rng.hpp"

namespace brandrank {

// Deterministic clickstream generator with planted, individually tunable
// signals:
//   - latent user/brand affinity (drives both brand choice and purchases)
//   - a per-user preferred price level matching each brand's typical level
//     (this is the part of the preference that brand features can explain)
//   - recency: recently touched brands are revisited, decaying with the
//     configured half life (exercises the time gate)
//   - action memory: a past purchase signals much more future interest than
//     a past click when action_signal_strength > 0 (exercises the action
//     matrices)
//   - popularity skew: makes some brands rare (exercises the cold-start
//     value of the engineered features)
struct SynthConfig {
    size_t users = 5000;
    size_t brands = 100;
    size_t categories = 20;
    size_t items_per_brand = 12;
    size_t seq_len_min = 22;
    size_t seq_len_max = 33;
    size_t affinity_dim = 4;
    double affinity_strength = 1.5;
    double half_life_seconds = 2.0 * kSecondsPerDay;
    double recency_strength = 2.0;
    double action_signal_strength = 2.0;
    double price_pref_strength = 1.5;
    double popularity_skew = 0.0;
    uint64_t seed = 0;

    void validate() const {
        if (users < 1 || brands < 2 || categories < 1 || items_per_brand < 1 ||
            affinity_dim < 1)
            throw contract_error("SynthConfig: counts must be >= 1 (brands >= 2)");
        if (half_life_seconds <= 0.0)
            throw contract_error("SynthConfig: half_life_seconds must be positive");
        if (seq_len_min < 1 || seq_len_max < seq_len_min)
            throw contract_error("SynthConfig: bad sequence length range");
        if (brands / categories * items_per_brand < kNumPriceLevels)
            throw contract_error(
                "SynthConfig: need at least 7 items per category for price levels");
    }
};

// Everything needed to recompute the generator's exact next-brand
// probabilities: the static preference table plus each user's full action
// stream and the dynamic-term parameters.
struct GroundTruth {
    SynthConfig config;
    std::vector<std::string> user_ids;
    std::vector<std::string> brand_ids;
    Matrix static_scores;  // users x brands
    std::vector<std::vector<ActionTuple>> actions_by_user;

    size_t user_row(const std::string& user_id) const {
        auto it = user_index_.find(user_id);
        if (it == user_index_.end())
            throw data_error("ground truth: unknown user '" + user_id + "'");
        return it->second;
    }

    size_t brand_col(const std::string& brand_id) const {
        auto it = brand_index_.find(brand_id);
        if (it == brand_index_.end())
            throw data_error("ground truth: unknown brand '" + brand_id + "'");
        return it->second;
    }

    void rebuild_index() {
        user_index_.clear();
        brand_index_.clear();
        for (size_t i = 0; i < user_ids.size(); ++i) user_index_[user_ids[i]] = i;
        for (size_t i = 0; i < brand_ids.size(); ++i) brand_index_[brand_ids[i]] = i;
    }

private:
    std::unordered_map<std::string, size_t> user_index_;
    std::unordered_map<std::string, size_t> brand_index_;
};

struct SynthOutput {
    std::vector<ItemRecord> items;
    std::vector<EventRecord> events;
    UserActions actions;
    GroundTruth truth;
};

namespace detail {

inline std::string padded_id(char prefix, size_t value, int width) {
    char buf[32];
    snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, value);
    return buf;
}

struct BrandState {
    int64_t last_time = -1;
    bool last_was_purchase = false;
    bool seen = false;
};

// The dynamic part of a brand's logit given the user's most recent touch:
// recency decay scaled by how strongly the last action type signals intent.
inline double dynamic_logit(const SynthConfig& cfg, const BrandState& st, int64_t now) {
    if (!st.seen) return 0.0;
    const double tau = cfg.half_life_seconds / std::log(2.0);
    const double decay = std::exp(-static_cast<double>(now - st.last_time) / tau);
    const double action_weight = st.last_was_purchase
                                     ? 1.0 + cfg.action_signal_strength
                                     : 1.0 - 0.5 * cfg.action_signal_strength;
    return cfg.recency_strength * decay * action_weight;
}

} // namespace detail

inline SynthOutput generate(const SynthConfig& config) {
    config.validate();
    SynthOutput out;
    GroundTruth& truth = out.truth;
    truth.config = config;

    const size_t B = config.brands;
    const size_t D = config.affinity_dim;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D));

    Rng rng(mix_seed(config.seed, 0x73796e7468ull));

    // Brand latents, popularity offsets, categories and typical price levels.
    Matrix brand_latent(B, D);
    for (auto& v : brand_latent.flat()) v = rng.gaussian();
    std::vector<double> popularity(B, 0.0);
    for (auto& v : popularity) v = config.popularity_skew * rng.gaussian();

    std::vector<size_t> level_rank(B);
    for (size_t b = 0; b < B; ++b) level_rank[b] = b;
    std::sort(level_rank.begin(), level_rank.end(), [&](size_t a, size_t b) {
        return brand_latent(a, 0) < brand_latent(b, 0);
    });
    std::vector<size_t> typical_level(B, 1);
    for (size_t r = 0; r < B; ++r)
        typical_level[level_rank[r]] = 1 + r * kNumPriceLevels / B;

    for (size_t b = 0; b < B; ++b) truth.brand_ids.push_back(detail::padded_id('b', b, 3));

    // Items: prices concentrate around each brand's typical level so the
    // engineered level-major features identify the brand's price profile.
    std::vector<std::vector<size_t>> items_of_brand(B);
    for (size_t b = 0; b < B; ++b) {
        const std::string category = detail::padded_id('c', b % config.categories, 2);
        for (size_t i = 0; i < config.items_per_brand; ++i) {
            ItemRecord item;
            item.item_id = detail::padded_id('i', out.items.size(), 6);
            item.brand_id = truth.brand_ids[b];
            item.category_id = category;
            item.price = static_cast<double>(typical_level[b]) * 10.0 +
                         rng.uniform(0.5, 8.5);
            items_of_brand[b].push_back(out.items.size());
            out.items.push_back(std::move(item));
        }
    }

    // Users: latent affinity vector and preferred price level.
    truth.static_scores = Matrix(config.users, B);
    truth.actions_by_user.resize(config.users);
    Matrix user_latent(config.users, D);
    for (auto& v : user_latent.flat()) v = rng.gaussian();
    std::vector<size_t> preferred_level(config.users);
    for (auto& v : preferred_level) v = 1 + rng.next_below(kNumPriceLevels);

    for (size_t u = 0; u < config.users; ++u) {
        truth.user_ids.push_back(detail::padded_id('u', u, 5));
        for (size_t b = 0; b < B; ++b) {
            const double affinity =
                config.affinity_strength * inv_sqrt_d *
                dot(user_latent.row(u), brand_latent.row(b));
            const double price_match =
                typical_level[b] == preferred_level[u] ? config.price_pref_strength : 0.0;
            truth.static_scores(u, b) = affinity + price_match + popularity[b];
        }
    }
    truth.rebuild_index();

    // Per-user clickstreams from independent seeded substreams.
    const double tau = config.half_life_seconds / std::log(2.0);
    for (size_t u = 0; u < config.users; ++u) {
        Rng user_rng(mix_seed(config.seed, 0x75736572ull + u));
        const size_t len =
            config.seq_len_min +
            user_rng.next_below(config.seq_len_max - config.seq_len_min + 1);
        int64_t t = 1600000000 + static_cast<int64_t>(
                                     user_rng.next_below(30 * 24 * 3600));
        std::vector<detail::BrandState> state(B);
        std::vector<double> logits(B);
        auto& actions = truth.actions_by_user[u];
        actions.reserve(len);
        for (size_t step = 0; step < len; ++step) {
            for (size_t b = 0; b < B; ++b)
                logits[b] =
                    truth.static_scores(u, b) + detail::dynamic_logit(config, state[b], t);
            // categorical draw via max-subtracted softmax
            const double m = *std::max_element(logits.begin(), logits.end());
            double total = 0.0;
            for (double& v : logits) {
                v = std::exp(v - m);
                total += v;
            }
            double pick = user_rng.next_double() * total;
            size_t brand = B - 1;
            for (size_t b = 0; b < B; ++b) {
                pick -= logits[b];
                if (pick <= 0.0) {
                    brand = b;
                    break;
                }
            }
            // Purchases become likelier with affinity; the action-signal
            // knob controls how much the distinction matters downstream.
            const double purchase_logit =
                1.0 * (truth.static_scores(u, brand) - popularity[brand]) - 1.4;
            const bool purchase = user_rng.next_double() < sigmoid(purchase_logit);

            actions.push_back({truth.user_ids[u], truth.brand_ids[brand],
                               purchase ? ActionType::purchase : ActionType::click, t});
            state[brand].seen = true;
            state[brand].last_time = t;
            state[brand].last_was_purchase = purchase;

            // Session-shaped gaps: mostly short within-session steps, with
            // inter-session breaks spanning the decay curve.
            double gap = 0.0;
            if (user_rng.next_double() < 0.65) {
                gap = user_rng.uniform(30.0, 1800.0);
            } else {
                gap = std::exp(
                    user_rng.uniform(std::log(0.5 * tau), std::log(6.0 * tau)));
            }
            t += std::max<int64_t>(1, static_cast<int64_t>(gap));
        }

        // Derived event stream so the Table-1 metrics are computable.
        for (const auto& action : actions) {
            const size_t brand = truth.brand_col(action.brand_id);
            const auto& item_pool = items_of_brand[brand];
            const ItemRecord& item =
                out.items[item_pool[user_rng.next_below(item_pool.size())]];
            if (user_rng.next_double() < 0.3)
                out.events.push_back({action.user_id, item.item_id, EventType::search,
                                      action.timestamp - 60, 0.0});
            out.events.push_back({action.user_id, item.item_id, EventType::impression,
                                  action.timestamp - 30, 0.0});
            if (user_rng.next_double() < 0.5) {
                const size_t other = user_rng.next_below(out.items.size());
                out.events.push_back({action.user_id, out.items[other].item_id,
                                      EventType::impression, action.timestamp - 15, 0.0});
            }
            out.events.push_back({action.user_id, item.item_id, EventType::click,
                                  action.timestamp, 0.0});
            if (action.action_type == ActionType::purchase) {
                if (user_rng.next_double() < 0.65)
                    out.events.push_back({action.user_id, item.item_id,
                                          EventType::add_to_cart, action.timestamp + 60,
                                          0.0});
                out.events.push_back({action.user_id, item.item_id, EventType::purchase,
                                      action.timestamp + 120, item.price});
            }
        }
        out.actions.emplace_back(truth.user_ids[u], actions);
    }
    return out;
}

// The generator's true probability that the user's next action at
// query_time lands on the query brand, recomputed from the full prefix of
// the user's stream. Instances must come from the same generation run:
// query_time has to coincide with one of the user's action timestamps.
inline std::vector<double> oracle_scores(const GroundTruth& truth,
                                         std::span<const TrainingInstance> instances) {
    std::vector<double> scores;
    scores.reserve(instances.size());
    const size_t B = truth.brand_ids.size();
    for (const auto& inst : instances) {
        const size_t u = truth.user_row(inst.history.user_id);
        const size_t q = truth.brand_col(inst.query_brand);
        const auto& actions = truth.actions_by_user[u];
        size_t k = actions.size();
        for (size_t i = 0; i < actions.size(); ++i) {
            if (actions[i].timestamp == inst.query_time) {
                k = i;
                break;
            }
        }
        if (k == actions.size())
            throw data_error("oracle_scores: instance for user '" +
                             inst.history.user_id +
                             "' does not match this run's action stream");
        std::vector<detail::BrandState> state(B);
        for (size_t i = 0; i < k; ++i) {
            const size_t b = truth.brand_col(actions[i].brand_id);
            state[b].seen = true;
            state[b].last_time = actions[i].timestamp;
            state[b].last_was_purchase = actions[i].action_type == ActionType::purchase;
        }
        double max_logit = -1e300;
        std::vector<double> logits(B);
        for (size_t b = 0; b < B; ++b) {
            logits[b] = truth.static_scores(u, b) +
                        detail::dynamic_logit(truth.config, state[b], inst.query_time);
            max_logit = std::max(max_logit, logits[b]);
        }
        double total = 0.0;
        for (double& v : logits) {
            v = std::exp(v - max_logit);
            total += v;
        }
        scores.push_back(logits[q] / total);
    }
    return scores;
}

// ---- file emission ---------------------------------------------------------

inline void save_items_csv(std::span<const ItemRecord> items, const std::string& path) {
    CsvWriter out(path);
    out.line("item_id,brand_id,category_id,price");
    for (const auto& item : items)
        out.row({item.item_id, item.brand_id, item.category_id,
                 format_double(item.price)});
    out.close();
}

inline void save_events_csv(std::span<const EventRecord> events, const std::string& path) {
    CsvWriter out(path);
    out.line("user_id,item_id,event_type,timestamp,amount");
    for (const auto& ev : events)
        out.row({ev.user_id, ev.item_id, to_string(ev.event_type),
                 std::to_string(ev.timestamp), format_double(ev.amount)});
    out.close();
}

inline void save_actions_csv(const UserActions& actions, const std::string& path) {
    CsvWriter out(path);
    out.line("user_id,brand_id,action_type,timestamp");
    for (const auto& [user, list] : actions)
        for (const auto& a : list)
            out.row({a.user_id, a.brand_id, to_string(a.action_type),
                     std::to_string(a.timestamp)});
    out.close();
}

inline void save_truth_csv(const GroundTruth& truth, const std::string& path) {
    CsvWriter out(path);
    out.line("user_id,brand_id,score");
    for (size_t u = 0; u < truth.user_ids.size(); ++u)
        for (size_t b = 0; b < truth.brand_ids.size(); ++b)
            out.row({truth.user_ids[u], truth.brand_ids[b],
                     format_double(truth.static_scores(u, b))});
    out.close();
}

} // namespace brandrank
