// brandrank: brand-level preference ranking pipeline.
//
// Subcommands cover the full workflow: synthesize a clickstream, engineer
// brand features, prepare training instances, train/evaluate the ranking
// models, run the ablation comparison, and check gradients.
//
// Exit codes: 0 success, 1 usage error, 2 data/contract error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "brandrank/brandrank.hpp"

namespace {

using namespace brandrank;

struct ModelFlags {
    std::string model = "attn3m";
    std::string mods = "1,2,3";
    std::string repr;  // empty = per-model default
    size_t hidden = 256;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--model", model, "Model variant: gru | attn | attn3m")
            ->check(CLI::IsMember({"gru", "attn", "attn3m"}));
        cmd->add_option("--mods", mods,
                        "Comma-separated modification subset for attn3m, e.g. 2,3 "
                        "(1 = brand embedding, 2 = action matrices, 3 = time gate)");
        cmd->add_option("--repr", repr,
                        "Brand representation: features | one_hot | combined "
                        "(default: combined when mod 1 is on, features for "
                        "gru/attn, one_hot for ablated attn3m)")
            ->check(CLI::IsMember({"features", "one_hot", "combined"}));
        cmd->add_option("--hidden", hidden, "Hidden state size")->check(CLI::PositiveNumber);
    }

    ModelConfig resolve(size_t vocab_size) const {
        std::set<int> mod_set;
        if (!mods.empty()) {
            std::stringstream ss(mods);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                if (tok.empty()) continue;
                if (tok != "1" && tok != "2" && tok != "3")
                    throw CLI::ValidationError("--mods", "must list values from {1,2,3}");
                mod_set.insert(std::stoi(tok));
            }
        }
        ModelConfig cfg;
        cfg.hidden_size = hidden;
        cfg.brand_vocab_size = vocab_size;
        if (model == "gru" || model == "attn") {
            cfg.use_attention = model == "attn";
            cfg.use_action_matrices = false;
            cfg.use_time_gate = false;
            cfg.repr_mode = repr.empty() ? ReprMode::features : repr_mode_from_string(repr);
        } else {
            cfg.use_attention = true;
            cfg.use_action_matrices = mod_set.count(2) > 0;
            cfg.use_time_gate = mod_set.count(3) > 0;
            if (mod_set.count(1)) {
                if (!repr.empty() && repr != "combined")
                    throw CLI::ValidationError(
                        "--repr", "modification 1 is the combined representation");
                cfg.repr_mode = ReprMode::combined;
            } else {
                cfg.repr_mode =
                    repr.empty() ? ReprMode::one_hot : repr_mode_from_string(repr);
            }
        }
        return cfg;
    }
};

void print_trace(const TrainResult& result) {
    for (const auto& stats : result.trace) {
        printf("epoch %zu mean_loss %.6f train_auc %.4f\n", stats.epoch,
               stats.mean_loss, stats.train_auc);
    }
}

int run(int argc, char** argv) {
    CLI::App app{"brand-level ranking pipeline"};
    app.require_subcommand(1);

    // ---- synth ----
    auto* synth_cmd = app.add_subcommand(
        "synth",
        "Generate a synthetic clickstream with planted preference structure.\n"
        "Writes items.csv (item_id,brand_id,category_id,price),\n"
        "events.csv (user_id,item_id,event_type,timestamp,amount),\n"
        "actions.csv (user_id,brand_id,action_type,timestamp) and\n"
        "truth.csv (user_id,brand_id,score).");
    std::string synth_out;
    SynthConfig synth_cfg;
    synth_cmd->add_option("--out", synth_out, "Output directory")->required();
    synth_cmd->add_option("--users", synth_cfg.users, "User count");
    synth_cmd->add_option("--brands", synth_cfg.brands, "Brand count");
    synth_cmd->add_option("--categories", synth_cfg.categories, "Category count");
    synth_cmd->add_option("--items-per-brand", synth_cfg.items_per_brand,
                          "Items per brand");
    synth_cmd->add_option("--seq-len-min", synth_cfg.seq_len_min,
                          "Minimum actions per user");
    synth_cmd->add_option("--seq-len-max", synth_cfg.seq_len_max,
                          "Maximum actions per user");
    synth_cmd->add_option("--affinity-dim", synth_cfg.affinity_dim,
                          "Latent affinity dimensionality");
    synth_cmd->add_option("--affinity-strength", synth_cfg.affinity_strength,
                          "Latent affinity logit scale");
    synth_cmd->add_option("--half-life-seconds", synth_cfg.half_life_seconds,
                          "Recency half life in seconds");
    synth_cmd->add_option("--recency-strength", synth_cfg.recency_strength,
                          "Recency (time-decay) logit scale");
    synth_cmd->add_option("--action-strength", synth_cfg.action_signal_strength,
                          "How much purchases outweigh clicks in future intent");
    synth_cmd->add_option("--price-strength", synth_cfg.price_pref_strength,
                          "Price-level preference logit scale");
    synth_cmd->add_option("--popularity-skew", synth_cfg.popularity_skew,
                          "Brand popularity spread (cold brands when > 0)");
    synth_cmd->add_option("--seed", synth_cfg.seed, "Generator seed");

    // ---- featurize ----
    auto* feat_cmd = app.add_subcommand(
        "featurize",
        "Aggregate events into 56-dimensional brand feature vectors\n"
        "(7 price levels x 8 metrics: ctr,cvr,gmv,atip,search,click,cart,txn),\n"
        "normalized per column by log1p + min-max. Writes features.csv\n"
        "with header brand_id,L1_ctr,...,L7_txn (57 columns).");
    std::string feat_items, feat_events, feat_out;
    bool feat_allow_small = false;
    feat_cmd->add_option("--items", feat_items, "items.csv path")->required();
    feat_cmd->add_option("--events", feat_events, "events.csv path")->required();
    feat_cmd->add_option("--out", feat_out, "Output features.csv path")->required();
    feat_cmd->add_flag("--allow-small-categories", feat_allow_small,
                       "Categories with < 7 items collapse to a single level "
                       "instead of failing");

    // ---- prepare ----
    auto* prep_cmd = app.add_subcommand(
        "prepare",
        "Filter sparse users/brands, cut per-user windows of 11 actions\n"
        "(10 history + 1 query), sample negatives, and split by time\n"
        "(each user's last window goes to test). Writes train.jsonl,\n"
        "test.jsonl and vocab.csv (brand_id,index).");
    std::string prep_actions, prep_out_dir;
    size_t prep_min_user = 11, prep_min_brand = 20, prep_stride = kWindowLength;
    size_t prep_negatives = 1;
    uint64_t prep_seed = 0;
    prep_cmd->add_option("--actions", prep_actions, "actions.csv path")->required();
    prep_cmd->add_option("--out-dir", prep_out_dir, "Output directory")->required();
    prep_cmd->add_option("--min-user-actions", prep_min_user,
                         "Drop users with fewer actions");
    prep_cmd->add_option("--min-brand-actions", prep_min_brand,
                         "Drop brands with fewer actions");
    prep_cmd->add_option("--stride", prep_stride,
                         "Window stride (11 = non-overlapping cut, 1 = sliding)");
    prep_cmd->add_option("--negatives-per-positive", prep_negatives,
                         "Negative instances drawn per positive");
    prep_cmd->add_option("--seed", prep_seed, "Negative sampling seed");

    // ---- train ----
    auto* train_cmd = app.add_subcommand(
        "train", "Train a ranking model with AdaGrad on prepared instances.");
    std::string train_train, train_features, train_vocab, train_out;
    ModelFlags train_model;
    TrainConfig train_cfg;
    train_cmd->add_option("--train", train_train, "train.jsonl path")->required();
    train_cmd->add_option("--features", train_features, "features.csv path")->required();
    train_cmd->add_option("--vocab", train_vocab, "vocab.csv path")->required();
    train_cmd->add_option("--out", train_out, "Output checkpoint path")->required();
    train_model.add_to(train_cmd);
    train_cmd->add_option("--epochs", train_cfg.epochs, "Training epochs");
    train_cmd->add_option("--batch", train_cfg.batch_size, "Mini-batch size")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", train_cfg.learning_rate, "AdaGrad learning rate");
    train_cmd->add_option("--adagrad-eps", train_cfg.adagrad_epsilon, "AdaGrad epsilon");
    train_cmd->add_option("--w", train_cfg.negative_weight,
                          "Negative-instance loss weight, in (0,1]");
    train_cmd->add_option("--prob-clamp", train_cfg.prob_clamp,
                          "Probability clamp epsilon inside the loss");
    train_cmd->add_option("--clip", train_cfg.clip_norm,
                          "Global gradient clip norm (0 disables)");
    train_cmd->add_option("--threads", train_cfg.threads, "Worker threads per batch");
    train_cmd->add_option("--seed", train_cfg.seed, "Init/shuffle seed");

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand(
        "eval",
        "Score a test set with a checkpoint and report AUC / F1.\n"
        "Report columns: variant, auc, f1, n, n_pos, threshold, config_hash.");
    std::string eval_ckpt, eval_test, eval_features, eval_vocab, eval_out;
    std::string eval_variant = "model";
    double eval_threshold = 0.5;
    eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required();
    eval_cmd->add_option("--test", eval_test, "test.jsonl path")->required();
    eval_cmd->add_option("--features", eval_features, "features.csv path")->required();
    eval_cmd->add_option("--vocab", eval_vocab, "vocab.csv path")->required();
    eval_cmd->add_option("--threshold", eval_threshold, "F1 decision threshold");
    eval_cmd->add_option("--variant", eval_variant, "Variant name for the report row");
    eval_cmd->add_option("--out", eval_out, "Also write the report to this path");

    // ---- ablate ----
    auto* abl_cmd = app.add_subcommand(
        "ablate",
        "Train and evaluate the full model, the three single-modification\n"
        "ablations, and the GRU / Attention-GRU baselines on one dataset;\n"
        "emit one report row per variant.");
    std::string abl_train, abl_test, abl_features, abl_vocab, abl_out;
    size_t abl_hidden = 64;
    TrainConfig abl_cfg;
    double abl_threshold = 0.5;
    abl_cmd->add_option("--train", abl_train, "train.jsonl path")->required();
    abl_cmd->add_option("--test", abl_test, "test.jsonl path")->required();
    abl_cmd->add_option("--features", abl_features, "features.csv path")->required();
    abl_cmd->add_option("--vocab", abl_vocab, "vocab.csv path")->required();
    abl_cmd->add_option("--hidden", abl_hidden, "Hidden size for every variant");
    abl_cmd->add_option("--epochs", abl_cfg.epochs, "Training epochs");
    abl_cmd->add_option("--batch", abl_cfg.batch_size, "Mini-batch size");
    abl_cmd->add_option("--lr", abl_cfg.learning_rate, "AdaGrad learning rate");
    abl_cmd->add_option("--w", abl_cfg.negative_weight, "Negative loss weight");
    abl_cmd->add_option("--threads", abl_cfg.threads, "Worker threads per batch");
    abl_cmd->add_option("--threshold", abl_threshold, "F1 decision threshold");
    abl_cmd->add_option("--seed", abl_cfg.seed, "Init/shuffle seed");
    abl_cmd->add_option("--out", abl_out, "Also write the report to this path");

    // ---- gradcheck ----
    auto* gc_cmd = app.add_subcommand(
        "gradcheck",
        "Check hand-derived gradients against central finite differences for\n"
        "all 8 modification combinations plus the GRU baseline.");
    uint64_t gc_seed = 7;
    size_t gc_hidden = 8, gc_feature_dim = 6, gc_length = 4, gc_instances = 5;
    double gc_step = 1e-5, gc_tolerance = 1e-4;
    gc_cmd->add_option("--seed", gc_seed, "Draw seed");
    gc_cmd->add_option("--hidden", gc_hidden, "Hidden size");
    gc_cmd->add_option("--feature-dim", gc_feature_dim, "Brand feature dimensionality");
    gc_cmd->add_option("--length", gc_length, "History length per instance");
    gc_cmd->add_option("--instances", gc_instances, "Checked draws per variant");
    gc_cmd->add_option("--step", gc_step, "Central difference step");
    gc_cmd->add_option("--tolerance", gc_tolerance, "Maximum relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors are exit 1
    }

    if (synth_cmd->parsed()) {
        auto out = generate(synth_cfg);
        std::filesystem::create_directories(synth_out);
        const std::filesystem::path dir(synth_out);
        save_items_csv(out.items, (dir / "items.csv").string());
        save_events_csv(out.events, (dir / "events.csv").string());
        save_actions_csv(out.actions, (dir / "actions.csv").string());
        save_truth_csv(out.truth, (dir / "truth.csv").string());
        size_t n_actions = 0;
        for (const auto& [user, list] : out.actions) n_actions += list.size();
        printf("synth: %zu users, %zu brands, %zu items, %zu actions, %zu events\n",
               synth_cfg.users, synth_cfg.brands, out.items.size(), n_actions,
               out.events.size());
        return 0;
    }

    if (feat_cmd->parsed()) {
        auto items = load_items_csv(feat_items);
        auto events = load_events_csv(feat_events);
        std::vector<std::string> brands;
        for (const auto& item : items) brands.push_back(item.brand_id);
        FeatureBuildOptions options;
        options.allow_small_categories = feat_allow_small;
        auto table = build_brand_feature_vectors(events, items, brands, options);
        for (const auto& warning : table.warnings)
            fprintf(stderr, "warning: %s\n", warning.c_str());
        save_features_csv(table, feat_out);
        printf("featurize: %zu brands x %zu features -> %s\n", table.brand_ids.size(),
               kFeatureDim, feat_out.c_str());
        return 0;
    }

    if (prep_cmd->parsed()) {
        auto users = parse_action_log(prep_actions);
        users = filter_sparse(users, prep_min_user, prep_min_brand);
        std::vector<std::string> brands;
        for (const auto& [user, actions] : users)
            for (const auto& a : actions) brands.push_back(a.brand_id);
        auto vocab = Vocab::from_brands(std::move(brands));
        auto split = split_and_sample(users, vocab, prep_seed, prep_stride,
                                      prep_negatives);
        std::filesystem::create_directories(prep_out_dir);
        const std::filesystem::path dir(prep_out_dir);
        save_instances_jsonl(split.train, (dir / "train.jsonl").string());
        save_instances_jsonl(split.test, (dir / "test.jsonl").string());
        save_vocab_csv(vocab, (dir / "vocab.csv").string());
        printf("prepare: %zu train, %zu test instances over %zu brands\n",
               split.train.size(), split.test.size(), vocab.size());
        return 0;
    }

    if (train_cmd->parsed()) {
        auto features = load_features_csv(train_features);
        auto vocab = load_vocab_csv(train_vocab);
        auto instances = load_instances_jsonl(train_train);
        auto model_cfg = train_model.resolve(vocab.size());
        auto result = train(instances, features, vocab, model_cfg, train_cfg);
        print_trace(result);
        save_checkpoint(result.checkpoint, train_out);
        printf("train: %zu instances, %zu epochs -> %s\n", instances.size(),
               train_cfg.epochs, train_out.c_str());
        return 0;
    }

    if (eval_cmd->parsed()) {
        auto ckpt = load_checkpoint(eval_ckpt);
        auto features = load_features_csv(eval_features);
        auto vocab = load_vocab_csv(eval_vocab);
        if (ckpt.vocab_hash != vocab.hash())
            fprintf(stderr,
                    "warning: vocabulary hash mismatch between checkpoint and %s\n",
                    eval_vocab.c_str());
        auto instances = load_instances_jsonl(eval_test);
        auto report = evaluate(ckpt.params, instances, features, vocab, eval_variant,
                               eval_threshold);
        printf("%s\n%s\n", format_report_header().c_str(),
               format_report_row(report).c_str());
        if (!eval_out.empty()) save_report({&report, 1}, eval_out);
        return 0;
    }

    if (abl_cmd->parsed()) {
        auto features = load_features_csv(abl_features);
        auto vocab = load_vocab_csv(abl_vocab);
        auto train_set = load_instances_jsonl(abl_train);
        auto test_set = load_instances_jsonl(abl_test);

        struct Variant {
            const char* name;
            const char* model;
            const char* mods;
        };
        const Variant variants[] = {
            {"attn3m", "attn3m", "1,2,3"}, {"attn3m-no1", "attn3m", "2,3"},
            {"attn3m-no2", "attn3m", "1,3"}, {"attn3m-no3", "attn3m", "1,2"},
            {"attn", "attn", ""},            {"gru", "gru", ""},
        };
        std::vector<EvalReport> reports;
        for (const auto& variant : variants) {
            ModelFlags flags;
            flags.model = variant.model;
            flags.mods = variant.mods;
            flags.hidden = abl_hidden;
            auto cfg = flags.resolve(vocab.size());
            auto result = train(train_set, features, vocab, cfg, abl_cfg);
            reports.push_back(evaluate(result.checkpoint.params, test_set, features,
                                       vocab, variant.name, abl_threshold));
        }
        printf("%s\n", format_report_header().c_str());
        for (const auto& r : reports) printf("%s\n", format_report_row(r).c_str());
        if (!abl_out.empty()) save_report(reports, abl_out);
        return 0;
    }

    if (gc_cmd->parsed()) {
        ModelGradCheckOptions options;
        options.step = gc_step;
        options.instances = gc_instances;
        options.history_length = gc_length;
        bool all_pass = true;
        printf("%-12s %-14s %s\n", "variant", "max_rel_error", "worst_entry");
        for (const auto& variant :
             gradcheck_variants(gc_hidden, gc_feature_dim, options.brand_count)) {
            auto result = model_gradient_check(variant.config, gc_seed, options);
            const bool pass = result.max_rel_error <= gc_tolerance;
            all_pass = all_pass && pass;
            printf("%-12s %-14.3e %s[%zu]%s\n", variant.name.c_str(),
                   result.max_rel_error, result.worst_param.c_str(), result.worst_index,
                   pass ? "" : "  FAIL");
        }
        if (!all_pass) {
            fprintf(stderr, "gradcheck: tolerance %g exceeded\n", gc_tolerance);
            return 2;
        }
        return 0;
    }

    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CLI::ParseError& e) {
        fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
