// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tnt/model.hpp"
#include "tnt/tt.hpp"

namespace tnt {

/// Early-stage linear scalarization: loss + gamma * relaxed_size + beta * |cores|^2.
struct EarlyStageConfig {
    double gamma = 0.0;
    double beta = 0.0;
};

/// Late-stage achievement scalarization toward a preferred (L0, S0) point.
/// w1/w2 scale the two gap terms; rho keeps a small pull on both objectives.
struct LateStageConfig {
    double w1 = 1.0;
    double w2 = 1.0;
    double rho = 1e-3;
    double L0 = 0.0;
    double S0 = 0.0;
    double beta = 0.0;

    void validate() const {
        if (!(w1 > 0) || !(w2 > 0) || !(rho > 0))
            throw ConfigError("late stage needs w1, w2, rho > 0");
    }

    /// Default objective scaling: 1/max(|L0|,1) and 1/max(S0,1).
    static LateStageConfig with_auto_weights(double l0, double s0, double rho, double beta) {
        LateStageConfig cfg;
        cfg.L0 = l0;
        cfg.S0 = s0;
        cfg.rho = rho;
        cfg.beta = beta;
        cfg.w1 = 1.0 / std::max(std::abs(l0), 1.0);
        cfg.w2 = 1.0 / std::max(s0, 1.0);
        return cfg;
    }
};

enum class Branch { loss, size };
enum class Stage { early, late };

inline const char* branch_name(Branch b) { return b == Branch::loss ? "loss" : "size"; }
inline const char* stage_name(Stage s) { return s == Stage::early ? "early" : "late"; }

struct RankTrainState {
    Stage stage = Stage::early;
    std::uint64_t step = 0;
    Branch last_branch = Branch::loss;
    double epsilon = 1e-4;
    bool epsilon_relative = true;  // threshold scales with each bond's max |d|
};

/// Aggregate size accounting over every tensorized layer of a model.
struct ModelSizes {
    double relaxed = 0.0;        // sum of relaxed (l1) sizes
    std::size_t exact = 0;       // sum of thresholded l0 sizes
    std::size_t dense_params = 0;  // untensorized parameters (weights, biases)
    std::size_t dense_equivalent = 0;
    std::size_t total_current() const { return exact + dense_params; }
    double compression_ratio() const {
        const std::size_t cur = total_current();
        return cur == 0 ? 0.0 : static_cast<double>(dense_equivalent) / static_cast<double>(cur);
    }
};

namespace detail {

template <typename Tensor>
std::vector<double> bond_thresholds(const Tensor& t, const RankTrainState& st) {
    if (!st.epsilon_relative)
        return std::vector<double>(t.diag_controls.size(), st.epsilon);
    return relative_bond_thresholds(t, st.epsilon);
}

template <typename Tensor>
SizeReport thresholded_report(const Tensor& t, const RankTrainState& st) {
    if (!st.epsilon_relative) return param_count(t, st.epsilon);
    // per-bond relative thresholds: count each bond against its own cutoff
    const auto thr = relative_bond_thresholds(t, st.epsilon);
    // reuse param_count per bond by thresholding manually
    Tensor copy = t;
    for (std::size_t j = 0; j < copy.diag_controls.size(); ++j)
        for (auto& v : copy.diag_controls[j])
            if (std::abs(v) <= thr[j]) v = 0.0;
    return param_count(copy, 0.0);
}

template <typename Tensor>
void accumulate_shat_subgradient(const Tensor& t, double coeff,
                                 std::vector<std::vector<double>>& out) {
    // d relaxed_size / d D_j[k] = coeff_j * sign(D_j[k]); sign(0) := 0 so a
    // pruned channel stays pruned.
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
    out.resize(t.diag_controls.size());
    for (std::size_t j = 0; j < t.diag_controls.size(); ++j) {
        // bond j+1 couples cores j (left) and j+1 (right)
        const double w = static_cast<double>(mode_elems[j]) * l1[j] +
                         static_cast<double>(mode_elems[j + 1]) * l1[j + 2];
        out[j].assign(t.diag_controls[j].size(), 0.0);
        for (std::size_t k = 0; k < t.diag_controls[j].size(); ++k) {
            const double v = t.diag_controls[j][k];
            out[j][k] = v > 0 ? coeff * w : (v < 0 ? -coeff * w : 0.0);
        }
    }
}

}  // namespace detail

/// Tensorized-layer views of a model (TT linear layers and the embedding).
struct TensorizedView {
    std::vector<TTLinear*> tt_layers;
    EmbeddingFrontend* embedding = nullptr;
};

inline void collect_tensorized(std::vector<std::unique_ptr<Layer>>& layers, TensorizedView& v) {
    for (auto& l : layers) {
        if (auto* t = dynamic_cast<TTLinear*>(l.get()))
            v.tt_layers.push_back(t);
        else if (auto* r = dynamic_cast<Residual*>(l.get()))
            collect_tensorized(r->stack(), v);
    }
}

inline TensorizedView tensorized_view(Model& model) {
    TensorizedView v;
    v.embedding = model.embedding();
    collect_tensorized(model.layers(), v);
    return v;
}

inline ModelSizes model_sizes(Model& model, const RankTrainState& st) {
    ModelSizes out;
    TensorizedView v = tensorized_view(model);
    for (auto* l : v.tt_layers) {
        const auto rep = detail::thresholded_report(l->inner().weight(), st);
        out.relaxed += rep.relaxed_size;
        out.exact += rep.exact_size;
        out.dense_equivalent += l->dense_equivalent_params();
        out.dense_params += l->inner().bias().size();  // bias stays dense on both sides
    }
    if (v.embedding) {
        const auto rep = detail::thresholded_report(v.embedding->inner().table(), st);
        out.relaxed += rep.relaxed_size;
        out.exact += rep.exact_size;
        out.dense_equivalent += v.embedding->dense_equivalent_params();
    }
    for (auto& l : model.layers()) {
        if (dynamic_cast<TTLinear*>(l.get()) || dynamic_cast<Residual*>(l.get())) continue;
        std::size_t n = l->dense_equivalent_params();
        out.dense_params += n;
        out.dense_equivalent += n;
    }
    // dense layers nested inside residual stacks
    struct Walker {
        static void walk(std::vector<std::unique_ptr<Layer>>& ls, ModelSizes& out) {
            for (auto& l : ls) {
                if (auto* r = dynamic_cast<Residual*>(l.get())) {
                    walk(r->stack(), out);
                } else if (!dynamic_cast<TTLinear*>(l.get())) {
                    const std::size_t n = l->dense_equivalent_params();
                    out.dense_params += n;
                    out.dense_equivalent += n;
                }
            }
        }
    };
    for (auto& l : model.layers())
        if (auto* r = dynamic_cast<Residual*>(l.get())) Walker::walk(r->stack(), out);
    return out;
}

/// Sum of squared core entries over every tensorized layer (the l2 term).
inline double core_sq_norm(Model& model) {
    double acc = 0.0;
    TensorizedView v = tensorized_view(model);
    for (auto* l : v.tt_layers)
        for (const auto& c : l->inner().weight().cores) acc += frobenius_norm_sq(c);
    if (v.embedding)
        for (const auto& c : v.embedding->inner().table().cores) acc += frobenius_norm_sq(c);
    return acc;
}

/// Scalarized objective value with the coefficients the trainer applies to
/// the three gradient sources (task loss, relaxed size, core l2).
struct ObjectiveEval {
    double value = 0.0;
    double loss_coeff = 1.0;  // multiplies task-loss gradients
    double shat_coeff = 0.0;  // multiplies relaxed-size subgradients
    double l2_coeff = 0.0;    // beta; core gradient contribution is 2*beta*G
};

inline ObjectiveEval early_objective(double loss, double relaxed_size, double core_norm_sq,
                                     const EarlyStageConfig& cfg) {
    ObjectiveEval e;
    e.value = loss + cfg.gamma * relaxed_size + cfg.beta * core_norm_sq;
    e.loss_coeff = 1.0;
    e.shat_coeff = cfg.gamma;
    e.l2_coeff = cfg.beta;
    return e;
}

/// Alg. 1 branch test: the loss branch wins when
/// w1 (L - L0) >= w2 (S - S0), with S the thresholded exact size.
inline Branch late_step_select(double loss, double size_exact, const LateStageConfig& cfg) {
    return cfg.w1 * (loss - cfg.L0) >= cfg.w2 * (size_exact - cfg.S0) ? Branch::loss
                                                                      : Branch::size;
}

inline ObjectiveEval late_objective(Branch branch, double loss, double relaxed_size,
                                    double core_norm_sq, const LateStageConfig& cfg) {
    ObjectiveEval e;
    if (branch == Branch::loss) {
        e.value = cfg.w1 * (loss - cfg.L0) + cfg.rho * (loss + relaxed_size) +
                  cfg.beta * core_norm_sq;
        e.loss_coeff = cfg.w1 + cfg.rho;
        e.shat_coeff = cfg.rho;
    } else {
        e.value = cfg.w2 * (relaxed_size - cfg.S0) + cfg.rho * (loss + relaxed_size) +
                  cfg.beta * core_norm_sq;
        e.loss_coeff = cfg.rho;
        e.shat_coeff = cfg.w2 + cfg.rho;
    }
    e.l2_coeff = cfg.beta;
    return e;
}

/// Add the regularizer gradient contributions (relaxed-size subgradients on
/// the diagonals, 2*beta*G on the cores) into the model's gradient buffers.
/// Task-loss gradients must already be accumulated and scaled by loss_coeff
/// at the call site (the trainer does both).
inline void accumulate_regularizer_grads(Model& model, const ObjectiveEval& obj) {
    TensorizedView v = tensorized_view(model);
    std::vector<ParamView> params = model.params();

    // map diag parameter blocks by pointer for in-place accumulation
    auto add_for_tensor = [&](auto& tensor, const std::string& prefix) {
        std::vector<std::vector<double>> sub;
        detail::accumulate_shat_subgradient(tensor, obj.shat_coeff, sub);
        for (std::size_t j = 0; j < tensor.diag_controls.size(); ++j) {
            for (auto& p : params) {
                if (p.name == prefix + ".diag" + std::to_string(j)) {
                    for (std::size_t k = 0; k < p.size; ++k) p.grad[k] += sub[j][k];
                }
            }
        }
        if (obj.l2_coeff != 0.0) {
            for (std::size_t i = 0; i < tensor.cores.size(); ++i) {
                for (auto& p : params) {
                    if (p.name == prefix + ".core" + std::to_string(i)) {
                        for (std::size_t k = 0; k < p.size; ++k)
                            p.grad[k] += 2.0 * obj.l2_coeff * tensor.cores[i][k];
                    }
                }
            }
        }
    };
    for (auto* l : v.tt_layers) add_for_tensor(l->inner().weight(), l->name());
    if (v.embedding) add_for_tensor(v.embedding->inner().table(), v.embedding->name());
}

/// Prune every tensorized layer at the state's epsilon. Returns true when
/// any layer became removable (a bond hit rank 0).
struct PruneSummary {
    bool any_removable = false;
    std::vector<std::string> removable_layers;
    std::size_t removed_channels = 0;
};

inline PruneSummary prune_model(Model& model, const RankTrainState& st) {
    PruneSummary out;
    TensorizedView v = tensorized_view(model);
    for (auto* l : v.tt_layers) {
        const auto thr = detail::bond_thresholds(l->inner().weight(), st);
        auto res = l->inner().prune_weight(thr);
        for (auto c : res.removed) out.removed_channels += c;
        if (res.removable) {
            out.any_removable = true;
            out.removable_layers.push_back(l->name());
        }
        l->resync_grads();
    }
    if (v.embedding) {
        const auto thr = detail::bond_thresholds(v.embedding->inner().table(), st);
        auto res = v.embedding->inner().prune_table(thr);
        for (auto c : res.removed) out.removed_channels += c;
        if (res.removable) {
            out.any_removable = true;
            out.removable_layers.push_back(v.embedding->name());
        }
        v.embedding->resync_grads();
    }
    model.on_params_changed();
    return out;
}

}  // namespace tnt
