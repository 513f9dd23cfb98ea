// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnt/einsum.hpp"
#include "tnt/tensor.hpp"
#include "tnt/tt.hpp"

namespace tnt {

/// Gradients of one TT linear layer application: input gradient plus
/// per-core, per-diagonal, and bias gradients with shapes mirroring the layer.
struct TTLinearGrads {
    DenseTensor g_input;
    std::vector<DenseTensor> g_cores;
    std::vector<std::vector<double>> g_diags;
    std::vector<double> g_bias;
};

/// TT-compressed linear layer y = x W + bias with W factorized over
/// (n_1..n_d | n_{d+1}..n_{2d}): the first `d` cores carry the input modes
/// and the rest the output modes. Forward and backward follow the fixed
/// empirical contraction path: cached chain products A_i / A_{-i} (input
/// side) and B_i / B_{-i} (output side) are rebuilt once per parameter
/// update, then every batch pass costs two einsum steps per direction.
///
/// Bond diagonals are folded into the right-hand core of each bond when the
/// caches are built; gradients are carried back to the unfolded cores and
/// diagonals by the product rule.
class TTLinearLayer {
  public:
    TTLinearLayer() = default;

    TTLinearLayer(TTTensor weight, std::size_t input_core_count)
        : weight_(std::move(weight)), d_(input_core_count) {
        weight_.validate();
        if (d_ == 0 || d_ >= weight_.order())
            throw ShapeError("TTLinearLayer: split must leave cores on both sides");
        const Shape dims = weight_.dims();
        n_in_ = 1;
        n_out_ = 1;
        for (std::size_t i = 0; i < d_; ++i) n_in_ *= dims[i];
        for (std::size_t i = d_; i < dims.size(); ++i) n_out_ *= dims[i];
        bias_.assign(n_out_, 0.0);
        mark_params_changed();
    }

    /// Random layer: in/out mode factorizations and a uniform internal rank
    /// (clamped at the boundaries like any valid chain).
    static TTLinearLayer create(const Shape& in_modes, const Shape& out_modes, std::size_t rank,
                                Rng rng) {
        Shape dims = in_modes;
        dims.insert(dims.end(), out_modes.begin(), out_modes.end());
        std::vector<std::size_t> ranks(dims.size() + 1, rank);
        ranks.front() = ranks.back() = 1;
        std::size_t n_in = 1;
        for (std::size_t m : in_modes) n_in *= m;
        TTTensor w = init_tt(dims, ranks, rng, 2.0 / static_cast<double>(n_in));
        return TTLinearLayer(std::move(w), in_modes.size());
    }

    const TTTensor& weight() const { return weight_; }
    TTTensor& weight() { return weight_; }
    /// Cached chain products (valid after build_prefix_products): entry k of
    /// the forward lists spans the first k+1 cores of its side, entry k of
    /// the reverse lists the last k+1.
    const std::vector<DenseTensor>& input_prefixes() const { return a_fwd_; }
    const std::vector<DenseTensor>& output_prefixes() const { return b_fwd_; }
    const std::vector<DenseTensor>& input_suffixes() const { return a_rev_; }
    const std::vector<DenseTensor>& output_suffixes() const { return b_rev_; }
    std::vector<double>& bias() { return bias_; }
    const std::vector<double>& bias() const { return bias_; }
    std::size_t input_core_count() const { return d_; }
    std::size_t in_features() const { return n_in_; }
    std::size_t out_features() const { return n_out_; }
    std::uint64_t forward_stamp() const { return forward_stamp_; }

    /// Call after mutating cores or diagonals; invalidates the chain caches
    /// and any stored forward intermediates.
    void mark_params_changed() {
        cache_valid_ = false;
        forward_stamp_ = 0;
    }

    /// Replace the weight with its pruned version (bond channels below the
    /// given thresholds removed). Returns per-bond removal counts.
    PruneResult<TTTensor> prune_weight(const std::vector<double>& per_bond_eps) {
        auto res = prune(weight_, per_bond_eps);
        weight_ = res.tensor;
        mark_params_changed();
        return res;
    }

    /// Build every prefix/suffix chain product of the folded cores,
    /// retaining all intermediates for the backward pass.
    void build_prefix_products() {
        folded_.assign(weight_.order(), DenseTensor());
        for (std::size_t i = 0; i < weight_.order(); ++i)
            folded_[i] = i == 0 ? weight_.cores[0]
                                : detail::scale_left_axis(weight_.cores[i],
                                                          weight_.diag_controls[i - 1]);
        const std::size_t two_d = weight_.order();
        a_fwd_ = build_chain_forward(0, d_ - 1);
        b_fwd_ = build_chain_forward(d_, two_d - 1);
        a_rev_ = build_chain_reverse(0, d_ - 1);
        b_rev_ = build_chain_reverse(d_, two_d - 1);
        cache_valid_ = true;
        forward_stamp_ = 0;
    }

    /// Y = X W + bias, X of shape (b, N1). Costs exactly
    /// b*N1*r_d + b*r_d*N2 multiply-adds once the caches are built.
    DenseTensor forward(const DenseTensor& x, bool keep_cache = true) {
        if (x.ndim() != 2 || x.dim(1) != n_in_)
            throw ShapeError("TTLinearLayer::forward: expected (b, " + std::to_string(n_in_) +
                             "), got " + shape_to_string(x.shape()));
        if (!cache_valid_) build_prefix_products();
        const std::size_t r_d = mid_rank();
        const DenseTensor a_d = reshape(a_fwd_.back(), {n_in_, r_d});
        const DenseTensor b_d = reshape(b_fwd_.back(), {r_d, n_out_});
        DenseTensor t1 = einsum("bn,nr->br", {x, a_d});
        DenseTensor y = einsum("br,rm->bm", {t1, b_d});
        const std::size_t b = x.dim(0);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < n_out_; ++j) y[i * n_out_ + j] += bias_[j];
        if (keep_cache) {
            t1_ = std::move(t1);
            x_ = x;
            ++forward_stamp_;
        }
        return y;
    }

    /// Reverse pass against the most recent forward call.
    TTLinearGrads backward(const DenseTensor& g_y) const {
        if (forward_stamp_ == 0)
            throw ShapeError("TTLinearLayer::backward: no cached forward pass");
        if (g_y.ndim() != 2 || g_y.dim(1) != n_out_ || g_y.dim(0) != x_.dim(0))
            throw ShapeError("TTLinearLayer::backward: gradient shape mismatch");

        const std::size_t two_d = weight_.order();
        const std::size_t r_d = mid_rank();
        const DenseTensor a_d = reshape(a_fwd_.back(), {n_in_, r_d});
        const DenseTensor b_d = reshape(b_fwd_.back(), {r_d, n_out_});

        TTLinearGrads g;
        DenseTensor u1 = einsum("bm,rm->br", {g_y, b_d});
        g.g_input = einsum("br,nr->bn", {u1, a_d});
        DenseTensor t2 = einsum("br,bm->rm", {t1_, g_y});
        DenseTensor u2 = einsum("br,bn->rn", {u1, x_});

        // gradients w.r.t. the folded cores
        std::vector<DenseTensor> g_folded(two_d);
        for (std::size_t i = d_; i < two_d; ++i) g_folded[i] = grad_output_core(t2, i);
        for (std::size_t i = 0; i < d_; ++i) g_folded[i] = grad_input_core(u2, i);

        // unfold: dL/dG_i scales by the bond diagonal, dL/dD by the raw core
        g.g_cores.resize(two_d);
        g.g_diags.resize(two_d - 1);
        for (std::size_t i = 0; i < two_d; ++i) {
            const DenseTensor& gf = g_folded[i];
            if (i == 0) {
                g.g_cores[0] = gf;
                continue;
            }
            const auto& diag = weight_.diag_controls[i - 1];
            const auto& core = weight_.cores[i];
            DenseTensor gc = gf;
            const std::size_t r = core.dim(0);
            const std::size_t rest = r == 0 ? 0 : core.size() / r;
            std::vector<double> gd(r, 0.0);
            for (std::size_t a = 0; a < r; ++a) {
                for (std::size_t k = 0; k < rest; ++k) {
                    gd[a] += gf[a * rest + k] * core[a * rest + k];
                    gc[a * rest + k] *= diag[a];
                }
            }
            g.g_cores[i] = std::move(gc);
            g.g_diags[i - 1] = std::move(gd);
        }

        g.g_bias.assign(n_out_, 0.0);
        for (std::size_t i = 0; i < g_y.dim(0); ++i)
            for (std::size_t j = 0; j < n_out_; ++j) g.g_bias[j] += g_y[i * n_out_ + j];
        return g;
    }

    /// Dense equivalent (N1, N2) of the current weight, diagonals applied.
    DenseTensor dense_weight() const {
        return reshape(tt_reconstruct(weight_, true), {n_in_, n_out_});
    }

    /// Multiply-add count of the batch-dependent forward steps (T1 and Y).
    std::uint64_t flop_estimate(std::size_t b) const {
        return static_cast<std::uint64_t>(b) * mid_rank() * (n_in_ + n_out_);
    }

    std::uint64_t dense_flop_estimate(std::size_t b) const {
        return static_cast<std::uint64_t>(b) * n_in_ * n_out_;
    }

  private:
    std::size_t mid_rank() const { return weight_.cores[d_ - 1].dim(2); }

    // chain product of folded cores [lo..hi], prefixes retained:
    // entry k is the product over [lo, lo+k], stored as (r_left, modes, r_right)
    std::vector<DenseTensor> build_chain_forward(std::size_t lo, std::size_t hi) {
        std::vector<DenseTensor> out;
        DenseTensor cur = folded_[lo];  // (r_{lo-1}, n, r_lo)
        out.push_back(cur);
        for (std::size_t i = lo + 1; i <= hi; ++i) {
            const DenseTensor& c = folded_[i];
            DenseTensor lhs = reshape(cur, {cur.dim(0) * cur.dim(1), cur.dim(2)});
            DenseTensor rhs = reshape(c, {c.dim(0), c.dim(1) * c.dim(2)});
            DenseTensor nxt = einsum("ar,rk->ak", {lhs, rhs});
            cur = reshape(nxt, {out.front().dim(0), cur.dim(1) * c.dim(1), c.dim(2)});
            out.push_back(cur);
        }
        return out;
    }

    // suffix products over [lo..hi]: entry k is the product over [hi-k, hi]
    std::vector<DenseTensor> build_chain_reverse(std::size_t lo, std::size_t hi) {
        std::vector<DenseTensor> out;
        DenseTensor cur = folded_[hi];
        out.push_back(cur);
        for (std::size_t i = hi; i-- > lo;) {
            const DenseTensor& c = folded_[i];
            DenseTensor lhs = reshape(c, {c.dim(0) * c.dim(1), c.dim(2)});
            DenseTensor rhs = reshape(cur, {cur.dim(0), cur.dim(1) * cur.dim(2)});
            DenseTensor nxt = einsum("ar,rk->ak", {lhs, rhs});
            cur = reshape(nxt, {c.dim(0), c.dim(1) * cur.dim(1), cur.dim(2)});
            out.push_back(cur);
        }
        return out;
    }

    // dL/d(folded core i), i >= d: contract T2 with the cached output-side
    // prefix/suffix products around core i
    DenseTensor grad_output_core(const DenseTensor& t2, std::size_t i) const {
        const std::size_t two_d = weight_.order();
        const auto& core = weight_.cores[i];
        const std::size_t rl = core.dim(0), n = core.dim(1), rr = core.dim(2);
        const std::size_t r_d = mid_rank();
        std::size_t left_n = 1, right_n = 1;
        for (std::size_t k = d_; k < i; ++k) left_n *= weight_.cores[k].dim(1);
        for (std::size_t k = i + 1; k < two_d; ++k) right_n *= weight_.cores[k].dim(1);
        DenseTensor t2r = reshape(t2, {r_d, left_n, n, right_n});
        DenseTensor cur;
        std::string cur_sub;
        if (i == d_) {
            cur = reshape(t2r, {r_d, n, right_n});
            cur_sub = "pnr";  // p = r_{i-1} = r_d
        } else {
            const DenseTensor left = reshape(b_fwd_[i - d_ - 1], {r_d, left_n, rl});
            cur = einsum("alnr,alp->pnr", {t2r, left});
            cur_sub = "pnr";
        }
        if (i + 1 == two_d) {
            return reshape(cur, {rl, n, 1});
        }
        const DenseTensor right = reshape(b_rev_[two_d - i - 2], {rr, right_n});
        return einsum(cur_sub + ",qr->pnq", {cur, right});
    }

    // dL/d(folded core i), i < d
    DenseTensor grad_input_core(const DenseTensor& u2, std::size_t i) const {
        const auto& core = weight_.cores[i];
        const std::size_t rl = core.dim(0), n = core.dim(1), rr = core.dim(2);
        const std::size_t r_d = mid_rank();
        std::size_t left_n = 1, right_n = 1;
        for (std::size_t k = 0; k < i; ++k) left_n *= weight_.cores[k].dim(1);
        for (std::size_t k = i + 1; k < d_; ++k) right_n *= weight_.cores[k].dim(1);
        DenseTensor u2r = reshape(u2, {r_d, left_n, n, right_n});
        DenseTensor cur;
        if (i == 0) {
            cur = reshape(u2r, {r_d, n, right_n});  // (a, n, r-modes)
        } else {
            const DenseTensor left = reshape(a_fwd_[i - 1], {left_n, rl});
            cur = einsum("alnr,lp->apnr", {u2r, left});
        }
        if (i + 1 == d_) {
            // remaining right modes are empty; the r_d axis is the core's own
            // right bond
            if (i == 0) return reshape(einsum("anr->na", {reshape(cur, {r_d, n, 1})}),
                                       {1, n, r_d});
            return reshape(einsum("apnr->pna", {reshape(cur, {r_d, rl, n, 1})}), {rl, n, r_d});
        }
        const DenseTensor right = reshape(a_rev_[d_ - i - 2], {rr, right_n, r_d});
        if (i == 0) return reshape(einsum("anr,qra->nq", {cur, right}), {1, n, rr});
        return einsum("apnr,qra->pnq", {cur, right});
    }

    TTTensor weight_;
    std::size_t d_ = 0;
    std::size_t n_in_ = 0, n_out_ = 0;
    std::vector<double> bias_;

    std::vector<DenseTensor> folded_;
    std::vector<DenseTensor> a_fwd_, b_fwd_, a_rev_, b_rev_;
    bool cache_valid_ = false;
    std::uint64_t forward_stamp_ = 0;
    DenseTensor t1_, x_;
};

}  // namespace tnt
