#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "brandrank/train.hpp"

using namespace brandrank;

namespace {

struct Toy {
    std::vector<TrainingInstance> instances;
    FeatureTable features;
    Vocab vocab;
};

// Planted rule: positives query the brand of the last history step.
Toy make_toy(size_t n_instances, uint64_t seed) {
    Toy toy;
    Rng rng(seed);
    std::vector<std::string> brands;
    for (int b = 0; b < 4; ++b) brands.push_back("b" + std::to_string(b));
    toy.features.brand_ids = brands;
    toy.features.rebuild_index();
    toy.features.raw = Matrix(brands.size(), kFeatureDim);
    toy.features.normalized = Matrix(brands.size(), kFeatureDim);
    for (auto& v : toy.features.normalized.flat()) v = rng.next_double();
    toy.vocab = Vocab::from_brands(brands);

    for (size_t i = 0; i < n_instances; ++i) {
        TrainingInstance inst;
        inst.history.user_id = "u" + std::to_string(i);
        for (size_t m = 0; m < kHistoryLength; ++m) {
            inst.history.steps.push_back(
                {brands[rng.next_below(brands.size())],
                 rng.next_double() < 0.3 ? ActionType::purchase : ActionType::click,
                 static_cast<int64_t>(rng.next_below(2 * kSecondsPerDay))});
        }
        const std::string& last = inst.history.steps.back().brand_id;
        inst.label = i % 2 == 0 ? 1 : 0;
        if (inst.label == 1) {
            inst.query_brand = last;
        } else {
            std::string other;
            do {
                other = brands[rng.next_below(brands.size())];
            } while (other == last);
            inst.query_brand = other;
        }
        inst.query_time = 1;
        toy.instances.push_back(std::move(inst));
    }
    return toy;
}

ModelConfig toy_model_config(const Toy& toy) {
    ModelConfig cfg;
    cfg.hidden_size = 16;
    cfg.brand_vocab_size = toy.vocab.size();
    cfg.repr_mode = ReprMode::combined;
    return cfg;
}

bool checkpoints_identical(const Checkpoint& a, const Checkpoint& b) {
    auto ta = a.params.param_tensors();
    auto tb = b.params.param_tensors();
    if (ta.size() != tb.size()) return false;
    for (size_t i = 0; i < ta.size(); ++i)
        if (!(*ta[i] == *tb[i])) return false;
    if (a.accumulators.size() != b.accumulators.size()) return false;
    for (size_t i = 0; i < a.accumulators.size(); ++i)
        if (!(a.accumulators[i] == b.accumulators[i])) return false;
    return a.vocab_hash == b.vocab_hash;
}

} // namespace

TEST(InstanceLoss, PositiveAtHalfIsLnTwo) {
    EXPECT_NEAR(instance_loss(0.5, 1, 0.5), std::log(2.0), 1e-15);
}

TEST(InstanceLoss, WeightedNegativeAtHalf) {
    EXPECT_NEAR(instance_loss(0.5, 0, 0.5), 0.5 * std::log(2.0), 1e-15);
}

TEST(InstanceLoss, ClampCeilingNearSixteen) {
    EXPECT_NEAR(instance_loss(1.0, 0, 1.0), -std::log(kProbClamp), 1e-6);
    EXPECT_NEAR(instance_loss(1.0, 0, 1.0), 16.118095650958319, 1e-6);
}

TEST(InstanceLoss, NonnegativeEverywhere) {
    Rng rng(41);
    for (int i = 0; i < 2000; ++i) {
        const double p = rng.uniform(-0.5, 1.5);  // clamping handles overshoot
        const int label = rng.next_double() < 0.5;
        const double w = rng.uniform(0.01, 1.0);
        EXPECT_GE(instance_loss(p, label, w), 0.0);
    }
}

TEST(InstanceLoss, UnitWeightIsSymmetricLogLoss) {
    Rng rng(42);
    for (int i = 0; i < 500; ++i) {
        const double p = rng.uniform(0.001, 0.999);
        EXPECT_NEAR(instance_loss(p, 0, 1.0), instance_loss(1.0 - p, 1, 1.0), 1e-12);
    }
}

TEST(InstanceLoss, GradientSignForPositiveLabel) {
    Rng rng(43);
    for (int i = 0; i < 200; ++i) {
        const double p = rng.uniform(0.01, 0.99);
        EXPECT_LT(instance_loss_dp(p, 1, 1.0), 0.0);  // raising p lowers the loss
        EXPECT_GT(instance_loss_dp(p, 0, 1.0), 0.0);
    }
}

TEST(Train, ZeroEpochsEqualsInitialization) {
    auto toy = make_toy(30, 51);
    auto cfg = toy_model_config(toy);
    TrainConfig tcfg;
    tcfg.epochs = 0;
    tcfg.seed = 9;
    auto result = train(toy.instances, toy.features, toy.vocab, cfg, tcfg);
    auto init = ModelParams::init(cfg, tcfg.seed);
    auto got = result.checkpoint.params.param_tensors();
    auto want = init.param_tensors();
    for (size_t i = 0; i < got.size(); ++i) EXPECT_EQ(*got[i], *want[i]);
    EXPECT_TRUE(result.trace.empty());
}

TEST(Train, DeterministicGivenSeed) {
    auto toy = make_toy(48, 52);
    auto cfg = toy_model_config(toy);
    TrainConfig tcfg;
    tcfg.epochs = 2;
    tcfg.batch_size = 16;
    tcfg.seed = 77;
    auto a = train(toy.instances, toy.features, toy.vocab, cfg, tcfg);
    auto b = train(toy.instances, toy.features, toy.vocab, cfg, tcfg);
    EXPECT_TRUE(checkpoints_identical(a.checkpoint, b.checkpoint));
    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (size_t e = 0; e < a.trace.size(); ++e)
        EXPECT_EQ(a.trace[e].mean_loss, b.trace[e].mean_loss);
}

TEST(Train, WorkerPoolIsDeterministicForFixedThreadCount) {
    auto toy = make_toy(60, 61);
    auto cfg = toy_model_config(toy);
    TrainConfig tcfg;
    tcfg.epochs = 2;
    tcfg.batch_size = 16;
    tcfg.threads = 3;
    tcfg.seed = 21;
    auto a = train(toy.instances, toy.features, toy.vocab, cfg, tcfg);
    auto b = train(toy.instances, toy.features, toy.vocab, cfg, tcfg);
    EXPECT_TRUE(checkpoints_identical(a.checkpoint, b.checkpoint));
    EXPECT_TRUE(a.checkpoint.params.all_finite());
}

TEST(Train, LossDescendsOnPlantedToy) {
    auto toy = make_toy(200, 53);
    auto cfg = toy_model_config(toy);
    TrainConfig tcfg;
    tcfg.epochs = 12;
    tcfg.batch_size = 32;
    tcfg.learning_rate = 0.08;
    tcfg.seed = 4;
    auto result = train(toy.instances, toy.features, toy.vocab, cfg, tcfg);
    ASSERT_EQ(result.trace.size(), 12u);
    EXPECT_LT(result.trace.back().mean_loss, result.trace.front().mean_loss);
    EXPECT_GT(result.trace.back().train_auc, 0.5);
}

TEST(Train, ShuffleIsPermutation) {
    Rng rng(54);
    std::vector<size_t> order(100);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Train, AccumulatorsNonnegative) {
    auto toy = make_toy(40, 55);
    auto cfg = toy_model_config(toy);
    TrainConfig tcfg;
    tcfg.epochs = 2;
    tcfg.seed = 3;
    auto result = train(toy.instances, toy.features, toy.vocab, cfg, tcfg);
    for (const auto& acc : result.checkpoint.accumulators)
        for (double v : acc.flat()) EXPECT_GE(v, 0.0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    auto toy = make_toy(32, 56);
    auto cfg = toy_model_config(toy);
    TrainConfig tcfg;
    tcfg.epochs = 1;
    tcfg.seed = 15;
    auto result = train(toy.instances, toy.features, toy.vocab, cfg, tcfg);
    auto path = std::filesystem::temp_directory_path() / "brandrank_ckpt_test.txt";
    save_checkpoint(result.checkpoint, path.string());
    auto loaded = load_checkpoint(path.string());
    EXPECT_TRUE(checkpoints_identical(result.checkpoint, loaded));
    EXPECT_EQ(loaded.params.config.canonical_string(),
              result.checkpoint.params.config.canonical_string());
    std::filesystem::remove(path);
}

TEST(Checkpoint, WrongVersionRejected) {
    auto toy = make_toy(16, 57);
    auto cfg = toy_model_config(toy);
    TrainConfig tcfg;
    tcfg.epochs = 0;
    auto result = train(toy.instances, toy.features, toy.vocab, cfg, tcfg);
    auto path = std::filesystem::temp_directory_path() / "brandrank_ckpt_badver.txt";
    save_checkpoint(result.checkpoint, path.string());
    // Bump the version field in place.
    std::ifstream in(path);
    std::string content((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
    in.close();
    auto pos = content.find("version 1");
    ASSERT_NE(pos, std::string::npos);
    content.replace(pos, 9, "version 9");
    std::ofstream out(path);
    out << content;
    out.close();
    EXPECT_THROW(load_checkpoint(path.string()), data_error);
    std::filesystem::remove(path);
}

TEST(Checkpoint, TruncatedFileRejected) {
    auto toy = make_toy(16, 58);
    auto cfg = toy_model_config(toy);
    TrainConfig tcfg;
    tcfg.epochs = 0;
    auto result = train(toy.instances, toy.features, toy.vocab, cfg, tcfg);
    auto path = std::filesystem::temp_directory_path() / "brandrank_ckpt_trunc.txt";
    save_checkpoint(result.checkpoint, path.string());
    std::ifstream in(path);
    std::string content((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path);
    out << content.substr(0, content.size() / 2);
    out.close();
    EXPECT_THROW(load_checkpoint(path.string()), data_error);
    std::filesystem::remove(path);
}

TEST(Checkpoint, StoresVocabularyHash) {
    auto toy = make_toy(16, 59);
    auto cfg = toy_model_config(toy);
    TrainConfig tcfg;
    tcfg.epochs = 0;
    auto result = train(toy.instances, toy.features, toy.vocab, cfg, tcfg);
    EXPECT_EQ(result.checkpoint.vocab_hash, toy.vocab.hash());
    auto other = Vocab::from_brands({"x", "y"});
    EXPECT_NE(result.checkpoint.vocab_hash, other.hash());
}

TEST(Checkpoint, LoadedModelScoresIdentically) {
    auto toy = make_toy(40, 60);
    auto cfg = toy_model_config(toy);
    TrainConfig tcfg;
    tcfg.epochs = 2;
    tcfg.seed = 8;
    auto result = train(toy.instances, toy.features, toy.vocab, cfg, tcfg);
    auto path = std::filesystem::temp_directory_path() / "brandrank_ckpt_score.txt";
    save_checkpoint(result.checkpoint, path.string());
    auto loaded = load_checkpoint(path.string());
    auto r1 = evaluate(result.checkpoint.params, toy.instances, toy.features, toy.vocab, "a");
    auto r2 = evaluate(loaded.params, toy.instances, toy.features, toy.vocab, "a");
    EXPECT_EQ(r1.auc, r2.auc);
    EXPECT_EQ(r1.f1, r2.f1);
    std::filesystem::remove(path);
}
