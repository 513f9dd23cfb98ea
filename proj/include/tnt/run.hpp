// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "tnt/checkpoint.hpp"
#include "tnt/config.hpp"
#include "tnt/trainer.hpp"

namespace tnt {

/// Model assembly from a run configuration; all randomness flows from the
/// master seed through per-layer named streams.
inline Model build_model(const RunConfig& cfg) {
    Model model;
    Rng master(cfg.seed);
    std::size_t cur_width = 0;
    bool first = true;

    for (const auto& spec : cfg.layers) {
        if (spec.kind == "ttm_embedding") {
            if (!first)
                throw ConfigError("layer " + spec.name + ": embedding must be the first layer");
            auto emb = TTMEmbedding::create(spec.row_factors, spec.col_factors, spec.rank,
                                            master.split(spec.name), 1.0);
            cur_width = emb.width();
            model.set_embedding(std::make_unique<EmbeddingFrontend>(spec.name, std::move(emb)));
            first = false;
            continue;
        }
        if (spec.kind == "tt_linear") {
            auto layer = TTLinearLayer::create(spec.in_factors, spec.out_factors, spec.rank,
                                               master.split(spec.name));
            if (!first && layer.in_features() != cur_width)
                throw ConfigError("layer " + spec.name + ": input features " +
                                  std::to_string(layer.in_features()) +
                                  " do not match previous width " + std::to_string(cur_width));
            cur_width = layer.out_features();
            model.add_layer(std::make_unique<TTLinear>(spec.name, std::move(layer)));
        } else if (spec.kind == "dense") {
            if (!first && spec.in != cur_width)
                throw ConfigError("layer " + spec.name + ": input features " +
                                  std::to_string(spec.in) + " do not match previous width " +
                                  std::to_string(cur_width));
            cur_width = spec.out;
            model.add_layer(
                std::make_unique<DenseLinear>(spec.name, spec.in, spec.out, master.split(spec.name)));
        } else if (spec.kind == "gelu") {
            model.add_layer(std::make_unique<Gelu>(spec.name));
        } else if (spec.kind == "identity") {
            model.add_layer(std::make_unique<Identity>(spec.name));
        } else {
            throw ConfigError("unknown layer kind '" + spec.kind + "'");
        }
        first = false;
    }

    if (cfg.head == "mse")
        model.set_head(HeadKind::mse);
    else if (cfg.head == "softmax_ce")
        model.set_head(HeadKind::softmax_ce);
    else
        model.set_head(HeadKind::bce);
    return model;
}

struct TaskData {
    Dataset train, test;
    double oracle_mse = 0.0;  // planted regression only
};

inline TaskData build_task(const RunConfig& cfg) {
    TaskData out;
    if (cfg.task == "planted_regression") {
        Shape in_f = cfg.task_in_factors, out_f = cfg.task_out_factors;
        if (in_f.empty() || out_f.empty())
            throw ConfigError("planted_regression needs [task] in_factors and out_factors");
        auto t = make_planted_tt_regression(cfg.seed, cfg.n_train, cfg.n_test, in_f, out_f,
                                            cfg.planted_rank, cfg.noise_sigma);
        out.train = std::move(t.train);
        out.test = std::move(t.test);
        out.oracle_mse = t.oracle_mse;
    } else if (cfg.task == "gmm_classification") {
        auto t = make_gaussian_mixture_classification(cfg.seed, cfg.n_train, cfg.n_test, cfg.dim,
                                                      cfg.classes, cfg.spread);
        out.train = std::move(t.train);
        out.test = std::move(t.test);
    } else {
        if (cfg.row_factors.empty() || cfg.col_factors.empty())
            throw ConfigError("toy_recommender needs [task] row_factors and col_factors");
        auto t = make_toy_recommender(cfg.seed, cfg.n_train, cfg.n_test, cfg.row_factors,
                                      cfg.col_factors);
        out.train = std::move(t.train);
        out.test = std::move(t.test);
    }
    return out;
}

struct RunResult {
    double final_eval = 0.0;
    double eval_after_early = 0.0;
    std::size_t size_after_early = 0;
    ModelSizes final_sizes;
    PruneSummary early_prune, late_prune;
    std::string metrics_path, checkpoint_path;
};

/// Full training run: early stage, prune, optional late stage, prune, save.
inline RunResult run_training(const RunConfig& cfg, Model* model_out = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    Model model = build_model(cfg);
    TaskData data = build_task(cfg);

    RankTrainState state;
    state.epsilon = cfg.epsilon;
    state.epsilon_relative = cfg.epsilon_relative;

    std::unique_ptr<Optimizer> opt;
    if (cfg.optimizer == "adam")
        opt = std::make_unique<Adam>(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    else
        opt = std::make_unique<Sgd>(SgdConfig{cfg.lr});

    TrainOptions options;
    options.batch_size = cfg.batch_size;
    options.prune_each_epoch = cfg.prune_each_epoch;
    options.proximal_diag_update = cfg.proximal_diag_update;

    RunResult result;
    result.metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
    result.checkpoint_path = (fs::path(cfg.out_dir) / "model.ckpt").string();
    CsvMetricsSink sink(result.metrics_path);
    Rng data_rng = Rng(cfg.seed).split("batching");

    if (cfg.early_epochs > 0) {
        EarlyStageConfig early{cfg.gamma, cfg.beta};
        run_early_stage(model, data.train, data.test, cfg.early_epochs, early, state, *opt,
                        options, data_rng.split("early"), sink);
        result.early_prune = prune_model(model, state);
        opt->reset();
    }
    result.eval_after_early = eval_model(model, data.test);
    result.size_after_early = model_sizes(model, state).exact;

    if (cfg.late_epochs > 0) {
        Batch full = data.train.all();
        DenseTensor preds = model.forward(full, false);
        const double cur_loss = compute_loss(model.head(), preds, full).loss;
        const double cur_size = static_cast<double>(model_sizes(model, state).exact);

        LateStageConfig late;
        late.L0 = cfg.l0.is_auto ? cur_loss : cfg.l0.value;
        if (!cfg.s0.is_auto)
            late.S0 = cfg.s0.value;
        else if (cfg.s0_ratio > 0.0)
            late.S0 = cfg.s0_ratio * cur_size;
        else
            late.S0 = cur_size;
        late.rho = cfg.rho;
        late.beta = cfg.beta;
        late.w1 = cfg.w1.is_auto ? 1.0 / std::max(std::abs(late.L0), 1.0) : cfg.w1.value;
        late.w2 = cfg.w2.is_auto ? 1.0 / std::max(late.S0, 1.0) : cfg.w2.value;

        StageResult lr = run_late_stage(model, data.train, data.test, cfg.late_epochs, late,
                                        state, *opt, options, data_rng.split("late"), sink);
        result.late_prune = lr.prune;
    }

    result.final_eval = eval_model(model, data.test);
    result.final_sizes = model_sizes(model, state);
    sink.flush();

    CheckpointMeta meta;
    meta.task = cfg.task;
    meta.seed = cfg.seed;
    meta.config_text = cfg.config_text;
    const Adam* adam = dynamic_cast<const Adam*>(opt.get());
    const Rng rng_now = data_rng;
    save_checkpoint(result.checkpoint_path, model, meta, adam, &rng_now);

    if (model_out) *model_out = std::move(model);
    return result;
}

}  // namespace tnt
