// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tnt/model.hpp"

namespace tnt {

class Optimizer {
  public:
    virtual ~Optimizer() = default;
    virtual void step(const std::vector<ParamView>& params) = 0;
    /// Drop state; required after pruning changes parameter shapes.
    virtual void reset() = 0;
    virtual double learning_rate() const = 0;
};

struct SgdConfig {
    double lr = 0.01;
};

class Sgd final : public Optimizer {
  public:
    explicit Sgd(SgdConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::vector<ParamView>& params) override {
        for (const auto& p : params)
            for (std::size_t i = 0; i < p.size; ++i) p.value[i] -= cfg_.lr * p.grad[i];
    }
    void reset() override {}
    double learning_rate() const override { return cfg_.lr; }

  private:
    SgdConfig cfg_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam over the flattened parameter list. Moment buffers are
/// keyed by position, so a reset is mandatory whenever the parameter layout
/// changes (pruning does this between stages).
class Adam final : public Optimizer {
  public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::vector<ParamView>& params) override {
        std::size_t total = 0;
        for (const auto& p : params) total += p.size;
        if (m_.size() != total) {
            m_.assign(total, 0.0);
            v_.assign(total, 0.0);
            t_ = 0;
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        std::size_t off = 0;
        for (const auto& p : params) {
            for (std::size_t i = 0; i < p.size; ++i, ++off) {
                const double g = p.grad[i];
                m_[off] = cfg_.beta1 * m_[off] + (1.0 - cfg_.beta1) * g;
                v_[off] = cfg_.beta2 * v_[off] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m_[off] / bc1;
                const double vhat = v_[off] / bc2;
                p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    void reset() override {
        m_.clear();
        v_.clear();
        t_ = 0;
    }

    double learning_rate() const override { return cfg_.lr; }
    std::uint64_t step_count() const { return t_; }
    const std::vector<double>& m() const { return m_; }
    const std::vector<double>& v() const { return v_; }
    void restore(std::vector<double> m, std::vector<double> v, std::uint64_t t) {
        m_ = std::move(m);
        v_ = std::move(v);
        t_ = t;
    }

  private:
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    std::uint64_t t_ = 0;
};

}  // namespace tnt
