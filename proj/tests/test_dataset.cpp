#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "brandrank/dataset.hpp"

using namespace brandrank;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& content) {
    auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    return path;
}

std::vector<ActionTuple> make_actions(const std::string& user, size_t n,
                                      int64_t t0 = 1000, int64_t dt = 60) {
    std::vector<ActionTuple> actions;
    for (size_t i = 0; i < n; ++i) {
        actions.push_back({user, "b" + std::to_string(i % 5),
                           i % 3 == 0 ? ActionType::purchase : ActionType::click,
                           t0 + static_cast<int64_t>(i) * dt});
    }
    return actions;
}

FeatureTable tiny_feature_table(const std::vector<std::string>& brands) {
    FeatureTable table;
    table.brand_ids = brands;
    std::sort(table.brand_ids.begin(), table.brand_ids.end());
    table.rebuild_index();
    table.raw = Matrix(brands.size(), kFeatureDim);
    table.normalized = Matrix(brands.size(), kFeatureDim);
    for (size_t b = 0; b < brands.size(); ++b)
        for (size_t c = 0; c < kFeatureDim; ++c)
            table.normalized(b, c) = static_cast<double>(b + 1) / (c + 2);
    return table;
}

} // namespace

TEST(ParseActionLog, DirectParse) {
    auto path = write_temp("brandrank_actions1.csv",
                           "user_id,brand_id,action_type,timestamp\n"
                           "u1,b1,click,100\n");
    auto users = parse_action_log(path.string());
    ASSERT_EQ(users.size(), 1u);
    EXPECT_EQ(users[0].first, "u1");
    ASSERT_EQ(users[0].second.size(), 1u);
    EXPECT_EQ(users[0].second[0].brand_id, "b1");
    EXPECT_EQ(users[0].second[0].action_type, ActionType::click);
    EXPECT_EQ(users[0].second[0].timestamp, 100);
    std::filesystem::remove(path);
}

TEST(ParseActionLog, SortsByTimestampStable) {
    auto path = write_temp("brandrank_actions2.csv",
                           "user_id,brand_id,action_type,timestamp\n"
                           "u1,late,click,300\n"
                           "u1,early,purchase,100\n"
                           "u1,tie_a,click,200\n"
                           "u1,tie_b,click,200\n");
    auto users = parse_action_log(path.string());
    ASSERT_EQ(users[0].second.size(), 4u);
    EXPECT_EQ(users[0].second[0].brand_id, "early");
    EXPECT_EQ(users[0].second[1].brand_id, "tie_a");  // file order kept on ties
    EXPECT_EQ(users[0].second[2].brand_id, "tie_b");
    EXPECT_EQ(users[0].second[3].brand_id, "late");
    std::filesystem::remove(path);
}

TEST(ParseActionLog, UnknownActionTypeNamesLine) {
    auto path = write_temp("brandrank_actions3.csv",
                           "user_id,brand_id,action_type,timestamp\n"
                           "u1,b1,click,100\n"
                           "u1,b1,view,200\n");
    try {
        parse_action_log(path.string());
        FAIL() << "expected data_error";
    } catch (const data_error& e) {
        EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("view"), std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST(ParseActionLog, MalformedRowNamesLine) {
    auto path = write_temp("brandrank_actions4.csv",
                           "user_id,brand_id,action_type,timestamp\n"
                           "u1,b1,click,notanumber\n");
    EXPECT_THROW(parse_action_log(path.string()), data_error);
    std::filesystem::remove(path);
}

TEST(FilterSparse, ThresholdOneIsIdentity) {
    UserActions users;
    users.emplace_back("u1", make_actions("u1", 3));
    auto filtered = filter_sparse(users, 1, 1);
    ASSERT_EQ(filtered.size(), 1u);
    EXPECT_EQ(filtered[0].second.size(), 3u);
}

TEST(FilterSparse, EverythingFilteredThrows) {
    UserActions users;
    users.emplace_back("u1", make_actions("u1", 5));
    EXPECT_THROW(filter_sparse(users, 11, 1), data_error);
}

TEST(FilterSparse, ChainRemovalReachesFixedPoint) {
    // u3 has 1 action -> removed; b2 then falls below the brand threshold ->
    // removed; u2 then falls below the user threshold -> removed.
    UserActions users;
    users.emplace_back("u1", std::vector<ActionTuple>{{"u1", "b1", ActionType::click, 1},
                                                      {"u1", "b1", ActionType::click, 2}});
    users.emplace_back("u2", std::vector<ActionTuple>{{"u2", "b1", ActionType::click, 1},
                                                      {"u2", "b2", ActionType::click, 2}});
    users.emplace_back("u3", std::vector<ActionTuple>{{"u3", "b2", ActionType::click, 1}});
    auto filtered = filter_sparse(users, 2, 2);
    ASSERT_EQ(filtered.size(), 1u);
    EXPECT_EQ(filtered[0].first, "u1");
    EXPECT_EQ(filtered[0].second.size(), 2u);
}

TEST(WindowSequences, ExactWindowGivesOneInstance) {
    auto actions = make_actions("u1", 11);
    auto instances = window_sequences("u1", actions);
    ASSERT_EQ(instances.size(), 1u);
    const auto& inst = instances[0];
    EXPECT_EQ(inst.history.steps.size(), kHistoryLength);
    EXPECT_EQ(inst.label, 1);
    EXPECT_EQ(inst.query_brand, actions[10].brand_id);
    EXPECT_EQ(inst.query_time, actions[10].timestamp);
}

TEST(WindowSequences, BelowWindowLengthGivesNothing) {
    auto actions = make_actions("u1", 10);
    EXPECT_TRUE(window_sequences("u1", actions).empty());
}

TEST(WindowSequences, NonOverlappingCutRule) {
    EXPECT_EQ(window_sequences("u", make_actions("u", 22)).size(), 2u);
    EXPECT_EQ(window_sequences("u", make_actions("u", 21)).size(), 1u);
}

TEST(WindowSequences, SlidingWindowBehindStride) {
    EXPECT_EQ(window_sequences("u", make_actions("u", 13), 1).size(), 3u);
}

TEST(WindowSequences, DeltaTChainIncludesQueryGap) {
    std::vector<ActionTuple> actions;
    for (size_t i = 0; i < 11; ++i) {
        actions.push_back({"u", "b", ActionType::click,
                           static_cast<int64_t>(100 + i * i * 10)});  // widening gaps
    }
    auto instances = window_sequences("u", actions);
    ASSERT_EQ(instances.size(), 1u);
    const auto& steps = instances[0].history.steps;
    for (size_t i = 0; i < kHistoryLength; ++i) {
        EXPECT_EQ(steps[i].delta_t, actions[i + 1].timestamp - actions[i].timestamp);
        EXPECT_GE(steps[i].delta_t, 0);
    }
    // Last step's interval reaches to the query time.
    EXPECT_EQ(steps[9].delta_t, instances[0].query_time - actions[9].timestamp);
}

TEST(WindowSequences, WindowsReproduceSequencePrefix) {
    auto actions = make_actions("u", 35);  // 3 windows, remainder 2 dropped
    auto instances = window_sequences("u", actions);
    ASSERT_EQ(instances.size(), 3u);
    size_t cursor = 0;
    for (const auto& inst : instances) {
        for (const auto& step : inst.history.steps) {
            EXPECT_EQ(step.brand_id, actions[cursor].brand_id);
            EXPECT_EQ(step.action_type, actions[cursor].action_type);
            ++cursor;
        }
        EXPECT_EQ(inst.query_brand, actions[cursor].brand_id);
        EXPECT_EQ(inst.query_time, actions[cursor].timestamp);
        ++cursor;
    }
    EXPECT_EQ(cursor, 33u);
}

TEST(NegativeSample, ForcedChoiceWithTwoBrands) {
    auto positives = window_sequences("u", make_actions("u", 11));
    positives[0].query_brand = "B";
    std::vector<std::string> universe = {"A", "B"};
    auto neg = negative_sample(positives[0], universe, uint64_t{7});
    EXPECT_EQ(neg.query_brand, "A");
    EXPECT_EQ(neg.label, 0);
    EXPECT_EQ(neg.query_time, positives[0].query_time);
}

TEST(NegativeSample, DeterministicGivenSeed) {
    auto positives = window_sequences("u", make_actions("u", 11));
    std::vector<std::string> universe = {"a", "b", "c", "d", "e", "f"};
    auto n1 = negative_sample(positives[0], universe, uint64_t{42});
    auto n2 = negative_sample(positives[0], universe, uint64_t{42});
    EXPECT_EQ(n1.query_brand, n2.query_brand);
}

TEST(NegativeSample, UniformOverComplement) {
    auto positives = window_sequences("u", make_actions("u", 11));
    positives[0].query_brand = "b2";
    std::vector<std::string> universe = {"b0", "b1", "b2", "b3", "b4"};
    Rng rng(123);
    std::map<std::string, int> counts;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i)
        ++counts[negative_sample(positives[0], universe, rng).query_brand];
    EXPECT_EQ(counts.count("b2"), 0u);  // never the positive brand
    for (const auto& [brand, count] : counts) {
        EXPECT_NEAR(static_cast<double>(count) / draws, 0.25, 0.02) << brand;
    }
}

TEST(NegativeSample, SingletonUniverseThrows) {
    auto positives = window_sequences("u", make_actions("u", 11));
    std::vector<std::string> universe = {"only"};
    EXPECT_THROW(negative_sample(positives[0], universe, uint64_t{1}), data_error);
}

TEST(Encode, ActionOneHotConvention) {
    auto actions = make_actions("u", 11);
    actions[0].action_type = ActionType::click;
    actions[1].action_type = ActionType::purchase;
    auto instances = window_sequences("u", actions);
    std::vector<std::string> brands = {"b0", "b1", "b2", "b3", "b4"};
    auto table = tiny_feature_table(brands);
    auto vocab = Vocab::from_brands(brands);
    auto enc = encode_instance(instances[0], table, vocab, ReprMode::combined);
    EXPECT_EQ(enc.steps[0].action[0], 0.0);  // click = [0, 1]
    EXPECT_EQ(enc.steps[0].action[1], 1.0);
    EXPECT_EQ(enc.steps[1].action[0], 1.0);  // purchase = [1, 0]
    EXPECT_EQ(enc.steps[1].action[1], 0.0);
}

TEST(Encode, DeltaTIsTimestampDifference) {
    std::vector<ActionTuple> actions;
    for (size_t i = 0; i < 11; ++i)
        actions.push_back({"u", "b0", ActionType::click,
                           static_cast<int64_t>(100 + 60 * i)});
    actions[1].timestamp = 160;  // delta from 100 -> 60
    auto instances = window_sequences("u", actions);
    auto table = tiny_feature_table({"b0"});
    Vocab vocab = Vocab::from_brands({"b0"});
    auto enc = encode_instance(instances[0], table, vocab, ReprMode::features);
    EXPECT_DOUBLE_EQ(enc.steps[0].delta_t_seconds, 60.0);
}

TEST(Encode, UnknownBrandInOneHotModeThrows) {
    auto instances = window_sequences("u", make_actions("u", 11));
    auto table = tiny_feature_table({"b0", "b1", "b2", "b3", "b4"});
    Vocab vocab = Vocab::from_brands({"b0", "b1"});  // missing most brands
    EXPECT_THROW(encode_instance(instances[0], table, vocab, ReprMode::one_hot),
                 data_error);
}

TEST(Split, LastWindowPerUserGoesToTest) {
    UserActions users;
    users.emplace_back("u1", make_actions("u1", 33));  // 3 windows
    users.emplace_back("u2", make_actions("u2", 22));  // 2 windows
    auto vocab = Vocab::from_brands({"b0", "b1", "b2", "b3", "b4"});
    auto split = split_and_sample(users, vocab, 5);
    // 3 positives in train (2 + 1), 2 in test; doubled by 1:1 negatives.
    EXPECT_EQ(split.train.size(), 6u);
    EXPECT_EQ(split.test.size(), 4u);
    size_t train_pos = 0, test_pos = 0;
    for (const auto& inst : split.train) train_pos += inst.label;
    for (const auto& inst : split.test) test_pos += inst.label;
    EXPECT_EQ(train_pos * 2, split.train.size());  // exact 1:1 ratio
    EXPECT_EQ(test_pos * 2, split.test.size());
}

TEST(Split, DeterministicGivenSeed) {
    UserActions users;
    users.emplace_back("u1", make_actions("u1", 44));
    auto vocab = Vocab::from_brands({"b0", "b1", "b2", "b3", "b4"});
    auto a = split_and_sample(users, vocab, 9);
    auto b = split_and_sample(users, vocab, 9);
    ASSERT_EQ(a.train.size(), b.train.size());
    for (size_t i = 0; i < a.train.size(); ++i) {
        EXPECT_EQ(a.train[i].query_brand, b.train[i].query_brand);
        EXPECT_EQ(a.train[i].label, b.train[i].label);
    }
}

TEST(Split, EveryInstanceHasTenStepsAndNonnegativeDeltas) {
    UserActions users;
    for (int u = 0; u < 5; ++u) {
        std::string id = "u" + std::to_string(u);
        users.emplace_back(id, make_actions(id, 25 + u * 3));
    }
    auto vocab = Vocab::from_brands({"b0", "b1", "b2", "b3", "b4"});
    auto split = split_and_sample(users, vocab, 17);
    for (const auto* set : {&split.train, &split.test}) {
        for (const auto& inst : *set) {
            EXPECT_EQ(inst.history.steps.size(), kHistoryLength);
            for (const auto& step : inst.history.steps) EXPECT_GE(step.delta_t, 0);
        }
    }
}

TEST(Jsonl, RoundTrip) {
    UserActions users;
    users.emplace_back("u1", make_actions("u1", 22));
    auto vocab = Vocab::from_brands({"b0", "b1", "b2", "b3", "b4"});
    auto split = split_and_sample(users, vocab, 3);
    auto path = std::filesystem::temp_directory_path() / "brandrank_instances.jsonl";
    save_instances_jsonl(split.train, path.string());
    auto loaded = load_instances_jsonl(path.string());
    ASSERT_EQ(loaded.size(), split.train.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        EXPECT_EQ(loaded[i].history.user_id, split.train[i].history.user_id);
        EXPECT_EQ(loaded[i].query_brand, split.train[i].query_brand);
        EXPECT_EQ(loaded[i].query_time, split.train[i].query_time);
        EXPECT_EQ(loaded[i].label, split.train[i].label);
        for (size_t s = 0; s < kHistoryLength; ++s) {
            EXPECT_EQ(loaded[i].history.steps[s].brand_id,
                      split.train[i].history.steps[s].brand_id);
            EXPECT_EQ(loaded[i].history.steps[s].delta_t,
                      split.train[i].history.steps[s].delta_t);
        }
    }
    std::filesystem::remove(path);
}

TEST(VocabCsv, RoundTripAndHash) {
    auto vocab = Vocab::from_brands({"zeta", "alpha", "mid"});
    EXPECT_EQ(vocab.ids.front(), "alpha");
    auto path = std::filesystem::temp_directory_path() / "brandrank_vocab.csv";
    save_vocab_csv(vocab, path.string());
    auto loaded = load_vocab_csv(path.string());
    EXPECT_EQ(loaded.ids, vocab.ids);
    EXPECT_EQ(loaded.hash(), vocab.hash());
    EXPECT_EQ(loaded.index_of("mid"), 1);
    EXPECT_EQ(loaded.index_of("zeta"), 2);
    EXPECT_EQ(loaded.index_of("nope"), -1);
    std::filesystem::remove(path);
}
