#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "brandrank/csv.hpp"
#include "brandrank/errors.hpp"
#include "brandrank/matrix.hpp"

namespace brandrank {

constexpr size_t kNumPriceLevels = 7;
constexpr size_t kNumMetrics = 8;
constexpr size_t kFeatureDim = kNumPriceLevels * kNumMetrics;  // 56

// Metric order within one price-level block.
enum Metric : size_t {
    kCtr = 0,      // clicks / impressions
    kCvr = 1,      // purchases / clicks
    kGmv = 2,      // sum of purchase amounts
    kAtip = 3,     // GMV / number of transacted items
    kSearch = 4,
    kClick = 5,
    kCart = 6,
    kTxn = 7,
};

struct ItemRecord {
    std::string item_id;
    std::string brand_id;
    std::string category_id;
    double price = 0.0;
};

enum class EventType { search, impression, click, add_to_cart, purchase };

inline const char* to_string(EventType t) {
    switch (t) {
        case EventType::search: return "search";
        case EventType::impression: return "impression";
        case EventType::click: return "click";
        case EventType::add_to_cart: return "add_to_cart";
        case EventType::purchase: return "purchase";
    }
    return "?";
}

struct EventRecord {
    std::string user_id;
    std::string item_id;
    EventType event_type = EventType::impression;
    int64_t timestamp = 0;
    double amount = 0.0;  // purchase value; 0 for non-purchase events
};

// Seven ascending upper bounds; Level j = (boundary_{j-1}, boundary_j] with
// boundary_0 = 0. Prices above boundary_7 clamp to level 7.
struct PriceLevelTable {
    std::string category_id;
    std::array<double, kNumPriceLevels> boundaries{};
};

struct FeatureBuildOptions {
    // Categories with fewer than 7 items are rejected unless this is set,
    // in which case every item of the category falls into level 1.
    bool allow_small_categories = false;
};

// Engineered brand vectors plus the normalization metadata needed to map
// normalized entries back to raw aggregates.
struct FeatureTable {
    std::vector<std::string> brand_ids;  // row order, sorted
    Matrix raw;                          // brands x 56, raw aggregates
    Matrix normalized;                   // brands x 56, log1p + min-max to [0,1]
    std::array<double, kFeatureDim> col_min{};  // min/max of log1p(raw) per column
    std::array<double, kFeatureDim> col_max{};
    std::vector<std::string> warnings;   // cold brands etc.

    size_t row_of(const std::string& brand_id) const {
        auto it = index_.find(brand_id);
        if (it == index_.end()) throw data_error("unknown brand '" + brand_id + "'");
        return it->second;
    }

    bool has(const std::string& brand_id) const { return index_.count(brand_id) > 0; }

    std::span<const double> vector_of(const std::string& brand_id) const {
        return normalized.row(row_of(brand_id));
    }

    void rebuild_index() {
        index_.clear();
        for (size_t i = 0; i < brand_ids.size(); ++i) index_[brand_ids[i]] = i;
    }

    double denormalize(size_t col, double x) const {
        return std::expm1(x * (col_max[col] - col_min[col]) + col_min[col]);
    }

private:
    std::unordered_map<std::string, size_t> index_;
};

// Boundary j = p_{floor(j*n/7)} over the category's ascending prices
// (1-based index). Requires n >= 7 unless options allow the fallback.
inline PriceLevelTable compute_price_levels(std::span<const ItemRecord> items,
                                            const std::string& category_id,
                                            const FeatureBuildOptions& options = {}) {
    std::vector<double> prices;
    for (const auto& item : items) {
        if (item.category_id != category_id) continue;
        if (item.price <= 0.0)
            throw data_error("item '" + item.item_id + "': nonpositive price");
        prices.push_back(item.price);
    }
    PriceLevelTable table;
    table.category_id = category_id;
    const size_t n = prices.size();
    if (n < kNumPriceLevels) {
        if (!options.allow_small_categories)
            throw data_error("category '" + category_id + "': only " + std::to_string(n) +
                             " items, need at least 7 for price levels");
        const double top = n == 0 ? 0.0 : *std::max_element(prices.begin(), prices.end());
        table.boundaries.fill(top);
        return table;
    }
    std::sort(prices.begin(), prices.end());
    for (size_t j = 1; j <= kNumPriceLevels; ++j) {
        const size_t idx = j * n / kNumPriceLevels;  // 1-based floor
        table.boundaries[j - 1] = prices[idx - 1];
    }
    return table;
}

// Smallest level whose upper bound admits the price; out-of-table prices
// clamp to level 7.
inline size_t assign_price_level(const ItemRecord& item, const PriceLevelTable& table) {
    if (item.price <= 0.0)
        throw data_error("item '" + item.item_id + "': nonpositive price");
    if (item.category_id != table.category_id)
        throw contract_error("assign_price_level: category mismatch");
    for (size_t j = 0; j < kNumPriceLevels; ++j) {
        if (item.price <= table.boundaries[j]) return j + 1;
    }
    return kNumPriceLevels;
}

namespace detail {

struct MetricAccum {
    double impressions = 0, clicks = 0, purchases = 0;
    double gmv = 0, searches = 0, carts = 0;

    std::array<double, kNumMetrics> finalize() const {
        std::array<double, kNumMetrics> m{};
        m[kCtr] = impressions > 0 ? clicks / impressions : 0.0;
        m[kCvr] = clicks > 0 ? purchases / clicks : 0.0;
        m[kGmv] = gmv;
        m[kAtip] = purchases > 0 ? gmv / purchases : 0.0;
        m[kSearch] = searches;
        m[kClick] = clicks;
        m[kCart] = carts;
        m[kTxn] = purchases;
        return m;
    }

    void add(EventType t, double amount) {
        switch (t) {
            case EventType::search: searches += 1; break;
            case EventType::impression: impressions += 1; break;
            case EventType::click: clicks += 1; break;
            case EventType::add_to_cart: carts += 1; break;
            case EventType::purchase:
                purchases += 1;
                gmv += amount;
                break;
        }
    }
};

struct ItemIndex {
    std::unordered_map<std::string, size_t> by_id;       // item_id -> index
    std::vector<size_t> level;                           // per item, 1..7
    std::map<std::string, PriceLevelTable> tables;       // per category

    ItemIndex(std::span<const ItemRecord> items, const FeatureBuildOptions& options) {
        for (const auto& item : items) {
            if (!tables.count(item.category_id))
                tables.emplace(item.category_id,
                               compute_price_levels(items, item.category_id, options));
        }
        level.resize(items.size());
        for (size_t i = 0; i < items.size(); ++i) {
            by_id[items[i].item_id] = i;
            level[i] = assign_price_level(items[i], tables.at(items[i].category_id));
        }
    }
};

} // namespace detail

// Raw Table-1 metrics over events whose item belongs to (brand, level).
// Empty slices yield all zeros.
inline std::array<double, kNumMetrics> aggregate_brand_metrics(
    std::span<const EventRecord> events, std::span<const ItemRecord> items,
    const std::string& brand_id, size_t level, const FeatureBuildOptions& options = {}) {
    detail::ItemIndex index(items, options);
    detail::MetricAccum accum;
    for (const auto& ev : events) {
        auto it = index.by_id.find(ev.item_id);
        if (it == index.by_id.end())
            throw data_error("event references unknown item '" + ev.item_id + "'");
        const size_t i = it->second;
        if (items[i].brand_id != brand_id || index.level[i] != level) continue;
        accum.add(ev.event_type, ev.amount);
    }
    return accum.finalize();
}

// Per brand: the 8 metrics over levels 1..7, level-major, then each of the
// 56 columns normalized across brands by log(1+x) followed by min-max to
// [0,1]. A constant column normalizes to all 0.
inline FeatureTable build_brand_feature_vectors(std::span<const EventRecord> events,
                                                std::span<const ItemRecord> items,
                                                std::vector<std::string> brand_ids,
                                                const FeatureBuildOptions& options = {}) {
    std::sort(brand_ids.begin(), brand_ids.end());
    brand_ids.erase(std::unique(brand_ids.begin(), brand_ids.end()), brand_ids.end());

    FeatureTable table;
    table.brand_ids = std::move(brand_ids);
    table.rebuild_index();
    const size_t n_brands = table.brand_ids.size();
    table.raw = Matrix(n_brands, kFeatureDim);
    table.normalized = Matrix(n_brands, kFeatureDim);

    detail::ItemIndex index(items, options);

    std::vector<bool> has_items(n_brands, false);
    for (const auto& item : items) {
        if (table.has(item.brand_id)) has_items[table.row_of(item.brand_id)] = true;
    }
    for (size_t b = 0; b < n_brands; ++b) {
        if (!has_items[b])
            table.warnings.push_back("brand '" + table.brand_ids[b] +
                                     "' has no items; emitting zero vector (cold brand)");
    }

    // One accumulator per (brand row, level).
    std::vector<std::array<detail::MetricAccum, kNumPriceLevels>> accum(n_brands);
    for (const auto& ev : events) {
        auto it = index.by_id.find(ev.item_id);
        if (it == index.by_id.end())
            throw data_error("event references unknown item '" + ev.item_id + "'");
        const size_t i = it->second;
        if (!table.has(items[i].brand_id)) continue;
        accum[table.row_of(items[i].brand_id)][index.level[i] - 1].add(ev.event_type,
                                                                       ev.amount);
    }

    for (size_t b = 0; b < n_brands; ++b) {
        for (size_t lvl = 0; lvl < kNumPriceLevels; ++lvl) {
            const auto metrics = accum[b][lvl].finalize();
            for (size_t m = 0; m < kNumMetrics; ++m)
                table.raw(b, lvl * kNumMetrics + m) = metrics[m];
        }
    }

    for (size_t c = 0; c < kFeatureDim; ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (size_t b = 0; b < n_brands; ++b) {
            const double v = std::log1p(table.raw(b, c));
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (n_brands == 0) lo = hi = 0.0;
        table.col_min[c] = lo;
        table.col_max[c] = hi;
        const double range = hi - lo;
        for (size_t b = 0; b < n_brands; ++b) {
            table.normalized(b, c) =
                range > 0.0 ? (std::log1p(table.raw(b, c)) - lo) / range : 0.0;
        }
    }
    return table;
}

// ---- file formats --------------------------------------------------------

inline std::string features_csv_header() {
    std::string h = "brand_id";
    static const char* names[kNumMetrics] = {"ctr", "cvr",   "gmv",   "atip",
                                             "search", "click", "cart", "txn"};
    for (size_t lvl = 1; lvl <= kNumPriceLevels; ++lvl) {
        for (size_t m = 0; m < kNumMetrics; ++m) {
            h += ",L" + std::to_string(lvl) + "_" + names[m];
        }
    }
    return h;
}

inline std::vector<ItemRecord> load_items_csv(const std::string& path) {
    CsvReader reader(path, "item_id,brand_id,category_id,price");
    std::vector<ItemRecord> items;
    std::vector<std::string> f;
    while (reader.next(f)) {
        if (f.size() != 4) reader.fail("expected 4 columns");
        ItemRecord item{f[0], f[1], f[2], reader.parse_double(f[3])};
        if (item.price <= 0.0) reader.fail("nonpositive price");
        items.push_back(std::move(item));
    }
    return items;
}

inline std::vector<EventRecord> load_events_csv(const std::string& path) {
    CsvReader reader(path, "user_id,item_id,event_type,timestamp,amount");
    std::vector<EventRecord> events;
    std::vector<std::string> f;
    while (reader.next(f)) {
        if (f.size() != 5) reader.fail("expected 5 columns");
        EventRecord ev;
        ev.user_id = f[0];
        ev.item_id = f[1];
        if (f[2] == "search") ev.event_type = EventType::search;
        else if (f[2] == "impression") ev.event_type = EventType::impression;
        else if (f[2] == "click") ev.event_type = EventType::click;
        else if (f[2] == "add_to_cart") ev.event_type = EventType::add_to_cart;
        else if (f[2] == "purchase") ev.event_type = EventType::purchase;
        else reader.fail("unknown event_type '" + f[2] + "'");
        ev.timestamp = reader.parse_int(f[3]);
        ev.amount = reader.parse_double(f[4]);
        if (ev.amount > 0.0 && ev.event_type != EventType::purchase)
            reader.fail("nonzero amount on non-purchase event");
        events.push_back(std::move(ev));
    }
    return events;
}

inline void save_features_csv(const FeatureTable& table, const std::string& path) {
    CsvWriter out(path);
    out.line(features_csv_header());
    std::vector<std::string> fields;
    for (size_t b = 0; b < table.brand_ids.size(); ++b) {
        fields.clear();
        fields.push_back(table.brand_ids[b]);
        for (size_t c = 0; c < kFeatureDim; ++c)
            fields.push_back(format_double(table.normalized(b, c)));
        out.row(fields);
    }
    out.close();
}

// Loads normalized vectors only; raw aggregates and min/max metadata are
// not part of the interchange format.
inline FeatureTable load_features_csv(const std::string& path) {
    CsvReader reader(path, features_csv_header());
    FeatureTable table;
    std::vector<std::string> f;
    std::vector<std::array<double, kFeatureDim>> rows;
    while (reader.next(f)) {
        if (f.size() != 1 + kFeatureDim) reader.fail("expected 57 columns");
        table.brand_ids.push_back(f[0]);
        std::array<double, kFeatureDim> row{};
        for (size_t c = 0; c < kFeatureDim; ++c) row[c] = reader.parse_double(f[1 + c]);
        rows.push_back(row);
    }
    table.rebuild_index();
    table.normalized = Matrix(rows.size(), kFeatureDim);
    table.raw = Matrix(rows.size(), kFeatureDim);
    for (size_t b = 0; b < rows.size(); ++b)
        for (size_t c = 0; c < kFeatureDim; ++c) table.normalized(b, c) = rows[b][c];
    return table;
}

} // namespace brandrank
