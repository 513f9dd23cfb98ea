// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tnt/metrics.hpp"
#include "tnt/model.hpp"
#include "tnt/optimizer.hpp"
#include "tnt/rank_optimizer.hpp"
#include "tnt/tasks.hpp"

namespace tnt {

struct TrainOptions {
    std::size_t batch_size = 32;
    bool shuffle = true;
    bool prune_each_epoch = false;      // default: prune once at stage end
    bool proximal_diag_update = false;  // soft-threshold diags instead of subgradients
};

/// Higher-is-better for classification accuracy; lower-is-better otherwise.
inline double eval_model(Model& model, const Dataset& data) {
    Batch batch = data.all();
    DenseTensor preds = model.forward(batch, false);
    switch (model.head()) {
        case HeadKind::softmax_ce: {
            const std::size_t c = preds.dim(1);
            std::size_t correct = 0;
            for (std::size_t i = 0; i < batch.labels.size(); ++i) {
                std::size_t arg = 0;
                for (std::size_t j = 1; j < c; ++j)
                    if (preds[i * c + j] > preds[i * c + arg]) arg = j;
                if (static_cast<int>(arg) == batch.labels[i]) ++correct;
            }
            return static_cast<double>(correct) / static_cast<double>(batch.labels.size());
        }
        case HeadKind::mse:
        case HeadKind::bce:
            return compute_loss(model.head(), preds, batch).loss;
    }
    return 0.0;
}

namespace detail {

inline std::string max_ranks_string(Model& model) {
    std::string out;
    TensorizedView v = tensorized_view(model);
    auto append = [&out](std::size_t r) {
        if (!out.empty()) out += '|';
        out += std::to_string(r);
    };
    auto max_internal = [](const std::vector<std::size_t>& chain) {
        std::size_t m = 0;
        for (std::size_t i = 1; i + 1 < chain.size(); ++i) m = std::max(m, chain[i]);
        return m;
    };
    if (v.embedding) append(max_internal(v.embedding->inner().table().rank_chain()));
    for (auto* l : v.tt_layers) append(max_internal(l->inner().weight().rank_chain()));
    return out;
}

inline std::vector<std::size_t> epoch_order(std::size_t n, bool shuffle, Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (shuffle) {
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = rng.uniform_index(i);
            std::swap(order[i - 1], order[j]);
        }
    }
    return order;
}

/// Soft-threshold every diagonal entry by lr times its relaxed-size
/// coefficient (proximal step for the l1 term).
template <typename Tensor>
void proximal_shrink_tensor(Tensor& t, double shat_coeff, double lr) {
    std::vector<std::vector<double>> sub;
    // reuse the subgradient coefficients with unit signs: recompute weights
    const std::size_t d = t.order();
    std::vector<std::size_t> mode_elems(d);
    for (std::size_t i = 0; i < d; ++i) {
        if constexpr (std::is_same_v<Tensor, TTMTensor>)
            mode_elems[i] = t.cores[i].dim(1) * t.cores[i].dim(2);
        else
            mode_elems[i] = t.cores[i].dim(1);
    }
    std::vector<double> l1(d + 1, 1.0);
    for (std::size_t j = 0; j < t.diag_controls.size(); ++j) {
        double s = 0.0;
        for (double v : t.diag_controls[j]) s += std::abs(v);
        l1[j + 1] = s;
    }
    for (std::size_t j = 0; j < t.diag_controls.size(); ++j) {
        const double w = static_cast<double>(mode_elems[j]) * l1[j] +
                         static_cast<double>(mode_elems[j + 1]) * l1[j + 2];
        const double thr = lr * shat_coeff * w;
        for (auto& v : t.diag_controls[j]) {
            if (v > thr)
                v -= thr;
            else if (v < -thr)
                v += thr;
            else
                v = 0.0;
        }
    }
}

inline void proximal_shrink(Model& model, double shat_coeff, double lr) {
    TensorizedView v = tensorized_view(model);
    for (auto* l : v.tt_layers) proximal_shrink_tensor(l->inner().weight(), shat_coeff, lr);
    if (v.embedding) proximal_shrink_tensor(v.embedding->inner().table(), shat_coeff, lr);
}

}  // namespace detail

struct StageResult {
    std::vector<double> epoch_loss;
    std::vector<double> epoch_relaxed_size;
    std::vector<std::size_t> epoch_exact_size;
    double final_eval = 0.0;
    PruneSummary prune;
};

namespace detail {

enum class StageKind { early, late };

struct StepObjective {
    ObjectiveEval obj;
    Branch branch = Branch::loss;
};

template <typename SelectObjective>
StageResult run_stage(Model& model, const Dataset& train, const Dataset& eval_set,
                      std::size_t epochs, RankTrainState& state, Optimizer& opt,
                      const TrainOptions& options, Rng rng, MetricsSink& sink,
                      StageKind stage_kind, SelectObjective select) {
    StageResult result;
    const std::size_t n = train.size();
    const std::size_t bs = std::max<std::size_t>(1, options.batch_size);
    state.stage = stage_kind == StageKind::early ? Stage::early : Stage::late;
    double last_eval = eval_model(model, eval_set);

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const auto order = detail::epoch_order(n, options.shuffle, rng);
        double epoch_loss_acc = 0.0;
        std::size_t steps_in_epoch = 0;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t end = std::min(n, start + bs);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
            Batch batch = train.gather(idx);

            model.zero_grads();
            DenseTensor preds = model.forward(batch, true);
            LossResult lr = compute_loss(model.head(), preds, batch);
            if (!std::isfinite(lr.loss))
                throw DivergenceError("training loss is not finite at step " +
                                      std::to_string(state.step));

            ModelSizes sizes = model_sizes(model, state);
            const double core_sq = core_sq_norm(model);
            StepObjective so = select(lr.loss, sizes, core_sq);

            model.backward(lr.grad);
            auto params = model.params();
            if (so.obj.loss_coeff != 1.0)
                for (auto& p : params)
                    for (std::size_t i = 0; i < p.size; ++i) p.grad[i] *= so.obj.loss_coeff;
            ObjectiveEval reg = so.obj;
            if (options.proximal_diag_update) reg.shat_coeff = 0.0;
            accumulate_regularizer_grads(model, reg);
            opt.step(params);
            if (options.proximal_diag_update && so.obj.shat_coeff > 0.0)
                detail::proximal_shrink(model, so.obj.shat_coeff, opt.learning_rate());
            model.on_params_changed();

            ++state.step;
            state.last_branch = so.branch;
            epoch_loss_acc += lr.loss;
            ++steps_in_epoch;

            MetricsRow row;
            row.step = state.step;
            row.epoch = epoch;
            row.stage = stage_name(state.stage);
            row.branch = stage_kind == StageKind::early ? "-" : branch_name(so.branch);
            row.train_loss = lr.loss;
            row.eval_metric = last_eval;
            row.s_hat = sizes.relaxed;
            row.s_eps = sizes.exact;
            row.total_params = sizes.total_current();
            row.compression_ratio = sizes.compression_ratio();
            row.max_ranks = detail::max_ranks_string(model);
            sink.log(row);
        }
        last_eval = eval_model(model, eval_set);
        ModelSizes sizes = model_sizes(model, state);
        result.epoch_loss.push_back(epoch_loss_acc / std::max<std::size_t>(1, steps_in_epoch));
        result.epoch_relaxed_size.push_back(sizes.relaxed);
        result.epoch_exact_size.push_back(sizes.exact);
        if (options.prune_each_epoch && epoch + 1 < epochs) {
            prune_model(model, state);
            opt.reset();
        }
    }
    result.final_eval = last_eval;
    return result;
}

}  // namespace detail

/// Early stage: minimize loss + gamma * relaxed_size + beta * |cores|^2 with
/// mini-batches; records per-epoch (loss, relaxed size, thresholded size).
inline StageResult run_early_stage(Model& model, const Dataset& train, const Dataset& eval_set,
                                   std::size_t epochs, const EarlyStageConfig& cfg,
                                   RankTrainState& state, Optimizer& opt,
                                   const TrainOptions& options, Rng rng, MetricsSink& sink) {
    auto select = [&](double loss, const ModelSizes& sizes, double core_sq) {
        detail::StepObjective so;
        so.obj = early_objective(loss, sizes.relaxed, core_sq, cfg);
        return so;
    };
    return detail::run_stage(model, train, eval_set, epochs, state, opt, options, rng, sink,
                             detail::StageKind::early, select);
}

/// Late stage: per-step branch selection per the achievement scalarization,
/// then one optimizer step on the selected branch objective. Prunes at the
/// stage end (per-epoch pruning is the config option).
inline StageResult run_late_stage(Model& model, const Dataset& train, const Dataset& eval_set,
                                  std::size_t epochs, const LateStageConfig& cfg,
                                  RankTrainState& state, Optimizer& opt,
                                  const TrainOptions& options, Rng rng, MetricsSink& sink) {
    cfg.validate();
    auto select = [&](double loss, const ModelSizes& sizes, double core_sq) {
        detail::StepObjective so;
        so.branch = late_step_select(loss, static_cast<double>(sizes.exact), cfg);
        so.obj = late_objective(so.branch, loss, sizes.relaxed, core_sq, cfg);
        return so;
    };
    StageResult res = detail::run_stage(model, train, eval_set, epochs, state, opt, options, rng,
                                        sink, detail::StageKind::late, select);
    res.prune = prune_model(model, state);
    opt.reset();
    res.final_eval = eval_model(model, eval_set);
    return res;
}

}  // namespace tnt
