// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "tnt/tensor.hpp"
#include "tnt/tt_linear.hpp"
#include "tnt/ttm_embedding.hpp"

namespace tnt {

enum class ParamKind { core, diag, dense, bias };

/// Flat view of one parameter block and its gradient buffer.
struct ParamView {
    std::string name;
    ParamKind kind;
    double* value;
    double* grad;
    std::size_t size;
};

struct Batch {
    DenseTensor x;                   // dense features (unused when ids drive the model)
    std::vector<std::int64_t> ids;   // embedding row ids
    DenseTensor y;                   // regression / binary targets
    std::vector<int> labels;         // class labels
    std::size_t size() const { return ids.empty() ? x.dim(0) : ids.size(); }
};

class Layer {
  public:
    explicit Layer(std::string name) : name_(std::move(name)) {}
    virtual ~Layer() = default;

    virtual const char* kind() const = 0;
    const std::string& name() const { return name_; }

    virtual DenseTensor forward(const DenseTensor& x, bool training) = 0;
    /// Accumulates parameter gradients, returns the input gradient.
    virtual DenseTensor backward(const DenseTensor& g_out) = 0;

    virtual void collect_params(std::vector<ParamView>& out) = 0;
    virtual void zero_grads() = 0;
    virtual void on_params_changed() {}

    /// Tensorized layers expose their factorized weight for size accounting
    /// and pruning; others return nullptr.
    virtual TTTensor* tt_weight() { return nullptr; }
    virtual TTMTensor* ttm_weight() { return nullptr; }
    virtual std::size_t dense_equivalent_params() const { return 0; }

  private:
    std::string name_;
};

// ---------------------------------------------------------------------------

class TTLinear final : public Layer {
  public:
    TTLinear(std::string name, TTLinearLayer layer)
        : Layer(std::move(name)), layer_(std::move(layer)) {
        alloc_grads();
    }

    const char* kind() const override { return "tt_linear"; }
    TTLinearLayer& inner() { return layer_; }
    const TTLinearLayer& inner() const { return layer_; }

    DenseTensor forward(const DenseTensor& x, bool training) override {
        return layer_.forward(x, training);
    }

    DenseTensor backward(const DenseTensor& g_out) override {
        TTLinearGrads g = layer_.backward(g_out);
        for (std::size_t i = 0; i < g_cores_.size(); ++i)
            for (std::size_t k = 0; k < g_cores_[i].size(); ++k)
                g_cores_[i][k] += g.g_cores[i][k];
        for (std::size_t j = 0; j < g_diags_.size(); ++j)
            for (std::size_t k = 0; k < g_diags_[j].size(); ++k)
                g_diags_[j][k] += g.g_diags[j][k];
        for (std::size_t k = 0; k < g_bias_.size(); ++k) g_bias_[k] += g.g_bias[k];
        return g.g_input;
    }

    void collect_params(std::vector<ParamView>& out) override {
        auto& w = layer_.weight();
        for (std::size_t i = 0; i < w.cores.size(); ++i)
            out.push_back({name() + ".core" + std::to_string(i), ParamKind::core,
                           w.cores[i].data(), g_cores_[i].data(), w.cores[i].size()});
        for (std::size_t j = 0; j < w.diag_controls.size(); ++j)
            out.push_back({name() + ".diag" + std::to_string(j), ParamKind::diag,
                           w.diag_controls[j].data(), g_diags_[j].data(),
                           w.diag_controls[j].size()});
        out.push_back({name() + ".bias", ParamKind::bias, layer_.bias().data(), g_bias_.data(),
                       layer_.bias().size()});
    }

    void zero_grads() override {
        for (auto& c : g_cores_) std::fill(c.values().begin(), c.values().end(), 0.0);
        for (auto& d : g_diags_) std::fill(d.begin(), d.end(), 0.0);
        std::fill(g_bias_.begin(), g_bias_.end(), 0.0);
    }

    void on_params_changed() override { layer_.mark_params_changed(); }

    /// Re-allocate gradient buffers after pruning changed the rank chain.
    void resync_grads() { alloc_grads(); }

    TTTensor* tt_weight() override { return &layer_.weight(); }
    std::size_t dense_equivalent_params() const override {
        return layer_.in_features() * layer_.out_features() + layer_.out_features();
    }

  private:
    void alloc_grads() {
        const auto& w = layer_.weight();
        g_cores_.clear();
        g_diags_.clear();
        for (const auto& c : w.cores) g_cores_.emplace_back(c.shape());
        for (const auto& d : w.diag_controls) g_diags_.emplace_back(d.size(), 0.0);
        g_bias_.assign(layer_.bias().size(), 0.0);
    }

    TTLinearLayer layer_;
    std::vector<DenseTensor> g_cores_;
    std::vector<std::vector<double>> g_diags_;
    std::vector<double> g_bias_;
};

// ---------------------------------------------------------------------------

class DenseLinear final : public Layer {
  public:
    DenseLinear(std::string name, std::size_t in, std::size_t out, Rng rng)
        : Layer(std::move(name)), w_({in, out}), b_(out, 0.0), gw_({in, out}), gb_(out, 0.0) {
        const double sigma = std::sqrt(2.0 / static_cast<double>(in));
        for (auto& v : w_.values()) v = sigma * rng.normal();
    }

    DenseLinear(std::string name, DenseTensor w, std::vector<double> b)
        : Layer(std::move(name)), w_(std::move(w)), b_(std::move(b)), gw_(w_.shape()),
          gb_(b_.size(), 0.0) {}

    const char* kind() const override { return "dense"; }
    DenseTensor& weight() { return w_; }
    std::vector<double>& bias_vec() { return b_; }

    DenseTensor forward(const DenseTensor& x, bool training) override {
        if (training) x_ = x;
        DenseTensor y = einsum("bn,nm->bm", {x, w_});
        const std::size_t b = y.dim(0), m = y.dim(1);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < m; ++j) y[i * m + j] += b_[j];
        return y;
    }

    DenseTensor backward(const DenseTensor& g) override {
        DenseTensor gw = einsum("bn,bm->nm", {x_, g});
        for (std::size_t k = 0; k < gw.size(); ++k) gw_[k] += gw[k];
        const std::size_t b = g.dim(0), m = g.dim(1);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < m; ++j) gb_[j] += g[i * m + j];
        return einsum("bm,nm->bn", {g, w_});
    }

    void collect_params(std::vector<ParamView>& out) override {
        out.push_back({name() + ".w", ParamKind::dense, w_.data(), gw_.data(), w_.size()});
        out.push_back({name() + ".b", ParamKind::bias, b_.data(), gb_.data(), b_.size()});
    }

    void zero_grads() override {
        std::fill(gw_.values().begin(), gw_.values().end(), 0.0);
        std::fill(gb_.begin(), gb_.end(), 0.0);
    }

    std::size_t dense_equivalent_params() const override { return w_.size() + b_.size(); }

  private:
    DenseTensor w_;
    std::vector<double> b_;
    DenseTensor gw_;
    std::vector<double> gb_;
    DenseTensor x_;
};

// ---------------------------------------------------------------------------

class Gelu final : public Layer {
  public:
    explicit Gelu(std::string name) : Layer(std::move(name)) {}
    const char* kind() const override { return "gelu"; }

    DenseTensor forward(const DenseTensor& x, bool training) override {
        if (training) x_ = x;
        DenseTensor y = x;
        for (auto& v : y.values()) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
        return y;
    }

    DenseTensor backward(const DenseTensor& g) override {
        DenseTensor out = g;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double x = x_[i];
            const double phi = std::exp(-0.5 * x * x) * kInvSqrt2Pi;
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            out[i] *= cdf + x * phi;
        }
        return out;
    }

    void collect_params(std::vector<ParamView>&) override {}
    void zero_grads() override {}

  private:
    static constexpr double kInvSqrt2 = 0.70710678118654752440;
    static constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    DenseTensor x_;
};

class Identity final : public Layer {
  public:
    explicit Identity(std::string name) : Layer(std::move(name)) {}
    const char* kind() const override { return "identity"; }
    DenseTensor forward(const DenseTensor& x, bool) override { return x; }
    DenseTensor backward(const DenseTensor& g) override { return g; }
    void collect_params(std::vector<ParamView>&) override {}
    void zero_grads() override {}
};

// ---------------------------------------------------------------------------

/// out = x + gain * stack(x). A frozen gain of zero makes the wrapped stack
/// provably redundant while keeping its parameters in the model, which is
/// the construction used to exercise whole-layer removal.
class Residual final : public Layer {
  public:
    Residual(std::string name, std::vector<std::unique_ptr<Layer>> stack, double gain)
        : Layer(std::move(name)), stack_(std::move(stack)), gain_(gain) {}

    const char* kind() const override { return "residual"; }
    double gain() const { return gain_; }
    std::vector<std::unique_ptr<Layer>>& stack() { return stack_; }

    DenseTensor forward(const DenseTensor& x, bool training) override {
        DenseTensor h = x;
        for (auto& l : stack_) h = l->forward(h, training);
        if (h.shape() != x.shape())
            throw ShapeError("Residual: stack must preserve shape");
        DenseTensor y = x;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += gain_ * h[i];
        return y;
    }

    DenseTensor backward(const DenseTensor& g) override {
        DenseTensor scaled = g;
        for (auto& v : scaled.values()) v *= gain_;
        DenseTensor h = scaled;
        for (std::size_t i = stack_.size(); i-- > 0;) h = stack_[i]->backward(h);
        DenseTensor out = g;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += h[i];
        return out;
    }

    void collect_params(std::vector<ParamView>& out) override {
        for (auto& l : stack_) l->collect_params(out);
    }
    void zero_grads() override {
        for (auto& l : stack_) l->zero_grads();
    }
    void on_params_changed() override {
        for (auto& l : stack_) l->on_params_changed();
    }
    std::size_t dense_equivalent_params() const override {
        std::size_t n = 0;
        for (const auto& l : stack_) n += l->dense_equivalent_params();
        return n;
    }

  private:
    std::vector<std::unique_ptr<Layer>> stack_;
    double gain_;
};

// ---------------------------------------------------------------------------

/// Embedding front-end: consumes row ids instead of a dense activation.
class EmbeddingFrontend {
  public:
    EmbeddingFrontend(std::string name, TTMEmbedding emb)
        : name_(std::move(name)), emb_(std::move(emb)) {
        alloc_grads();
    }

    const std::string& name() const { return name_; }
    TTMEmbedding& inner() { return emb_; }
    const TTMEmbedding& inner() const { return emb_; }

    DenseTensor forward(const std::vector<std::int64_t>& ids, bool training) {
        if (training) ids_ = ids;
        return emb_.lookup(ids);
    }

    void backward(const DenseTensor& g_out) {
        auto g = emb_.backward(ids_, g_out);
        for (std::size_t i = 0; i < g_cores_.size(); ++i)
            for (std::size_t k = 0; k < g_cores_[i].size(); ++k)
                g_cores_[i][k] += g.g_cores[i][k];
        for (std::size_t j = 0; j < g_diags_.size(); ++j)
            for (std::size_t k = 0; k < g_diags_[j].size(); ++k)
                g_diags_[j][k] += g.g_diags[j][k];
    }

    void collect_params(std::vector<ParamView>& out) {
        auto& t = emb_.table();
        for (std::size_t i = 0; i < t.cores.size(); ++i)
            out.push_back({name_ + ".core" + std::to_string(i), ParamKind::core,
                           t.cores[i].data(), g_cores_[i].data(), t.cores[i].size()});
        for (std::size_t j = 0; j < t.diag_controls.size(); ++j)
            out.push_back({name_ + ".diag" + std::to_string(j), ParamKind::diag,
                           t.diag_controls[j].data(), g_diags_[j].data(),
                           t.diag_controls[j].size()});
    }

    void zero_grads() {
        for (auto& c : g_cores_) std::fill(c.values().begin(), c.values().end(), 0.0);
        for (auto& d : g_diags_) std::fill(d.begin(), d.end(), 0.0);
    }

    void on_params_changed() { emb_.mark_params_changed(); }
    void resync_grads() { alloc_grads(); }

    std::size_t dense_equivalent_params() const {
        return emb_.vocab_size() * emb_.width();
    }

  private:
    void alloc_grads() {
        const auto& t = emb_.table();
        g_cores_.clear();
        g_diags_.clear();
        for (const auto& c : t.cores) g_cores_.emplace_back(c.shape());
        for (const auto& d : t.diag_controls) g_diags_.emplace_back(d.size(), 0.0);
    }

    std::string name_;
    TTMEmbedding emb_;
    std::vector<std::int64_t> ids_;
    std::vector<DenseTensor> g_cores_;
    std::vector<std::vector<double>> g_diags_;
};

// ---------------------------------------------------------------------------

enum class HeadKind { softmax_ce, mse, bce };

inline const char* head_kind_name(HeadKind k) {
    switch (k) {
        case HeadKind::softmax_ce: return "softmax_ce";
        case HeadKind::mse: return "mse";
        case HeadKind::bce: return "bce";
    }
    return "?";
}

struct LossResult {
    double loss = 0.0;
    DenseTensor grad;  // d loss / d predictions
};

/// Mean loss over the batch with its prediction gradient. Cross-entropy and
/// binary cross-entropy are evaluated in log-sum-exp form.
inline LossResult compute_loss(HeadKind head, const DenseTensor& preds, const Batch& batch) {
    LossResult res;
    res.grad = DenseTensor(preds.shape());
    const std::size_t b = preds.dim(0);
    switch (head) {
        case HeadKind::mse: {
            const std::size_t k = preds.dim(1);
            const double scale = 1.0 / static_cast<double>(b * k);
            for (std::size_t i = 0; i < preds.size(); ++i) {
                const double d = preds[i] - batch.y[i];
                res.loss += d * d * scale;
                res.grad[i] = 2.0 * d * scale;
            }
            break;
        }
        case HeadKind::softmax_ce: {
            const std::size_t c = preds.dim(1);
            const double scale = 1.0 / static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i) {
                const double* z = preds.data() + i * c;
                double zmax = z[0];
                for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
                double lse = 0.0;
                for (std::size_t j = 0; j < c; ++j) lse += std::exp(z[j] - zmax);
                lse = zmax + std::log(lse);
                const int label = batch.labels[i];
                res.loss += (lse - z[label]) * scale;
                for (std::size_t j = 0; j < c; ++j) {
                    const double p = std::exp(z[j] - lse);
                    res.grad[i * c + j] =
                        (p - (static_cast<int>(j) == label ? 1.0 : 0.0)) * scale;
                }
            }
            break;
        }
        case HeadKind::bce: {
            const double scale = 1.0 / static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i) {
                const double z = preds[i];
                const double y = batch.y[i];
                res.loss += (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)))) *
                            scale;
                const double sig = 1.0 / (1.0 + std::exp(-z));
                res.grad[i] = (sig - y) * scale;
            }
            break;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------

/// Ordered layer stack with an optional embedding front-end and a loss head.
class Model {
  public:
    Model() = default;

    void set_embedding(std::unique_ptr<EmbeddingFrontend> e) { embedding_ = std::move(e); }
    void add_layer(std::unique_ptr<Layer> l) { layers_.push_back(std::move(l)); }
    void set_head(HeadKind h) { head_ = h; }

    HeadKind head() const { return head_; }
    EmbeddingFrontend* embedding() { return embedding_.get(); }
    const EmbeddingFrontend* embedding() const { return embedding_.get(); }
    std::vector<std::unique_ptr<Layer>>& layers() { return layers_; }
    const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

    DenseTensor forward(const Batch& batch, bool training = false) {
        DenseTensor h = embedding_ ? embedding_->forward(batch.ids, training) : batch.x;
        for (auto& l : layers_) h = l->forward(h, training);
        return h;
    }

    /// Gradient of the loss w.r.t. every parameter (accumulated into the
    /// layer buffers); forward(batch, true) must precede this.
    void backward(const DenseTensor& g_pred) {
        DenseTensor g = g_pred;
        for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g);
        if (embedding_) embedding_->backward(g);
    }

    std::vector<ParamView> params() {
        std::vector<ParamView> out;
        if (embedding_) embedding_->collect_params(out);
        for (auto& l : layers_) l->collect_params(out);
        return out;
    }

    void zero_grads() {
        if (embedding_) embedding_->zero_grads();
        for (auto& l : layers_) l->zero_grads();
    }

    void on_params_changed() {
        if (embedding_) embedding_->on_params_changed();
        for (auto& l : layers_) l->on_params_changed();
    }

  private:
    std::unique_ptr<EmbeddingFrontend> embedding_;
    std::vector<std::unique_ptr<Layer>> layers_;
    HeadKind head_ = HeadKind::mse;
};

}  // namespace tnt
