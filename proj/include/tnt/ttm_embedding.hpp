// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "tnt/einsum.hpp"
#include "tnt/tensor.hpp"
#include "tnt/tt.hpp"

namespace tnt {

/// Deduplicated lookup plan for a batch of row ids.
///
/// unique_rows holds the distinct ids in first-occurrence order; inverse_map
/// sends each batch position to its unique row. Each unique row id splits
/// into a (left, right) coordinate pair over the grouped row-mode products,
/// and those pair coordinates are deduplicated again with their own inverse
/// maps.
struct LookupPlan {
    std::vector<std::int64_t> unique_rows;
    std::vector<std::size_t> inverse_map;

    std::vector<std::size_t> j1, j2;                 // pair coords per unique row
    std::vector<std::size_t> unique_left_pairs;      // distinct j1 values
    std::vector<std::size_t> unique_right_pairs;     // distinct j2 values
    std::vector<std::size_t> left_inverse;           // unique row -> left pair slot
    std::vector<std::size_t> right_inverse;          // unique row -> right pair slot
};

/// TTM-compressed embedding table with the two-level deduplicated lookup.
///
/// Cores [0, g) group into A1 of shape (M1, NL, r_g) and cores [g, d) into
/// A2 of shape (r_g, M2, NR), where M* are grouped row-mode products and N*
/// grouped column-mode products. The groups are rebuilt when parameters
/// change (once per optimizer step); a lookup then costs one gather plus a
/// batched contraction over the unique rows only.
class TTMEmbedding {
  public:
    TTMEmbedding() = default;

    TTMEmbedding(TTMTensor table, std::size_t split)
        : table_(std::move(table)), split_(split) {
        table_.validate();
        if (split_ == 0 || split_ >= table_.order())
            throw ShapeError("TTMEmbedding: split must leave cores on both sides");
        const Shape rows = table_.row_dims(), cols = table_.col_dims();
        m1_ = 1, m2_ = 1, nl_ = 1, nr_ = 1;
        for (std::size_t i = 0; i < split_; ++i) {
            m1_ *= rows[i];
            nl_ *= cols[i];
        }
        for (std::size_t i = split_; i < table_.order(); ++i) {
            m2_ *= rows[i];
            nr_ *= cols[i];
        }
        mark_params_changed();
    }

    /// Split chosen to balance the element counts of the two cached groups.
    static std::size_t choose_split(const TTMTensor& table) {
        const Shape rows = table.row_dims(), cols = table.col_dims();
        const auto ranks = table.rank_chain();
        const std::size_t d = table.order();
        std::size_t best = 1;
        std::size_t best_val = ~std::size_t(0);
        for (std::size_t g = 1; g < d; ++g) {
            std::size_t left = ranks[g], right = ranks[g];
            for (std::size_t i = 0; i < g; ++i) left *= rows[i] * cols[i];
            for (std::size_t i = g; i < d; ++i) right *= rows[i] * cols[i];
            const std::size_t val = std::max(left, right);
            if (val < best_val) {
                best_val = val;
                best = g;
            }
        }
        return best;
    }

    static TTMEmbedding create(const Shape& row_factors, const Shape& col_factors,
                               std::size_t rank, Rng rng, double entry_variance = 1.0) {
        std::vector<std::size_t> ranks(row_factors.size() + 1, rank);
        ranks.front() = ranks.back() = 1;
        TTMTensor t = init_ttm(row_factors, col_factors, ranks, rng, entry_variance);
        const std::size_t g = choose_split(t);
        return TTMEmbedding(std::move(t), g);
    }

    const TTMTensor& table() const { return table_; }
    TTMTensor& table() { return table_; }
    std::size_t split() const { return split_; }
    std::size_t vocab_size() const { return m1_ * m2_; }
    std::size_t width() const { return nl_ * nr_; }

    void mark_params_changed() { cache_valid_ = false; }

    PruneResult<TTMTensor> prune_table(const std::vector<double>& per_bond_eps) {
        auto res = prune(table_, per_bond_eps);
        table_ = res.tensor;
        mark_params_changed();
        return res;
    }

    /// Group the folded cores into the cached A1/A2 tensors, retaining the
    /// partial products for the backward pass.
    void precompute_groups() {
        folded_.assign(table_.order(), DenseTensor());
        for (std::size_t i = 0; i < table_.order(); ++i)
            folded_[i] = i == 0 ? table_.cores[0]
                                : detail::scale_left_axis(table_.cores[i],
                                                          table_.diag_controls[i - 1]);
        left_partials_ = group_chain(0, split_ - 1);
        right_partials_ = group_chain(split_, table_.order() - 1);
        cache_valid_ = true;
    }

    /// A1 as (M1, NL, r_g); A2 as (r_g, M2, NR).
    DenseTensor group_a1() {
        ensure_cache();
        const DenseTensor& p = left_partials_.back();  // (1, M1, NL, r)
        return reshape(p, {m1_, nl_, p.dim(3)});
    }
    DenseTensor group_a2() {
        ensure_cache();
        const DenseTensor& p = right_partials_.back();  // (r, M2, NR, 1)
        return reshape(p, {p.dim(0), m2_, nr_});
    }

    /// Build the two-level dedup plan for a batch of ids.
    LookupPlan build_plan(const std::vector<std::int64_t>& indices) const {
        LookupPlan plan;
        std::unordered_map<std::int64_t, std::size_t> row_slot;
        plan.inverse_map.reserve(indices.size());
        for (std::int64_t id : indices) {
            if (id < 0 || static_cast<std::size_t>(id) >= vocab_size())
                throw ShapeError("TTMEmbedding: row id " + std::to_string(id) +
                                 " out of range for vocabulary " + std::to_string(vocab_size()));
            auto [it, inserted] = row_slot.emplace(id, plan.unique_rows.size());
            if (inserted) plan.unique_rows.push_back(id);
            plan.inverse_map.push_back(it->second);
        }
        std::unordered_map<std::size_t, std::size_t> left_slot, right_slot;
        for (std::int64_t id : plan.unique_rows) {
            const auto coords =
                mixed_radix_decode(static_cast<std::size_t>(id), {m1_, m2_});
            plan.j1.push_back(coords[0]);
            plan.j2.push_back(coords[1]);
            auto [lit, lnew] = left_slot.emplace(coords[0], plan.unique_left_pairs.size());
            if (lnew) plan.unique_left_pairs.push_back(coords[0]);
            plan.left_inverse.push_back(lit->second);
            auto [rit, rnew] = right_slot.emplace(coords[1], plan.unique_right_pairs.size());
            if (rnew) plan.unique_right_pairs.push_back(coords[1]);
            plan.right_inverse.push_back(rit->second);
        }
        return plan;
    }

    /// Rows of the dense table at the given ids, (batch, width). Gathers are
    /// free; the only multiply-adds are the batched contraction over unique
    /// rows: |unique| * NL * r_g * NR.
    DenseTensor lookup(const std::vector<std::int64_t>& indices) {
        const LookupPlan plan = build_plan(indices);
        return lookup_with_plan(indices, plan);
    }

    DenseTensor lookup_with_plan(const std::vector<std::int64_t>& indices,
                                 const LookupPlan& plan) {
        ensure_cache();
        const DenseTensor a1 = group_a1();
        const DenseTensor a2 = group_a2();
        const std::size_t r = a1.dim(2);
        const std::size_t bu = plan.unique_rows.size();

        // expand pair-deduplicated gathers to the unique-row level
        DenseTensor g1({bu, nl_, r});
        DenseTensor g2({r, bu, nr_});
        for (std::size_t k = 0; k < bu; ++k) {
            const std::size_t row = plan.unique_left_pairs[plan.left_inverse[k]];
            std::copy_n(a1.data() + row * nl_ * r, nl_ * r, g1.data() + k * nl_ * r);
            const std::size_t col = plan.unique_right_pairs[plan.right_inverse[k]];
            for (std::size_t q = 0; q < r; ++q)
                std::copy_n(a2.data() + (q * m2_ + col) * nr_, nr_,
                            g2.data() + (q * bu + k) * nr_);
        }
        DenseTensor unique_out = einsum("knr,rkm->knm", {g1, g2});
        unique_out = reshape(unique_out, {bu, width()});

        DenseTensor out({indices.size(), width()});
        for (std::size_t i = 0; i < indices.size(); ++i)
            std::copy_n(unique_out.data() + plan.inverse_map[i] * width(), width(),
                        out.data() + i * width());
        return out;
    }

    /// Reference path: gather the raw core slices per id and contract the
    /// chain left-to-right, once per batch element (no deduplication).
    DenseTensor naive_lookup(const std::vector<std::int64_t>& indices) {
        ensure_cache();
        const std::size_t d = table_.order();
        const Shape rows = table_.row_dims();
        DenseTensor out({indices.size(), width()});
        for (std::size_t b = 0; b < indices.size(); ++b) {
            const std::int64_t id = indices[b];
            if (id < 0 || static_cast<std::size_t>(id) >= vocab_size())
                throw ShapeError("TTMEmbedding: row id out of range");
            const auto z = mixed_radix_decode(static_cast<std::size_t>(id), rows);
            DenseTensor cur;  // (n-so-far, r)
            for (std::size_t t = 0; t < d; ++t) {
                const DenseTensor& core = folded_[t];
                const std::size_t rl = core.dim(0), n = core.dim(2), rr = core.dim(3);
                DenseTensor slice({rl, n, rr});
                const auto st = row_major_strides(core.shape());
                for (std::size_t a = 0; a < rl; ++a)
                    for (std::size_t c = 0; c < n; ++c)
                        std::copy_n(core.data() + a * st[0] + z[t] * st[1] + c * st[2], rr,
                                    slice.data() + (a * n + c) * rr);
                if (t == 0) {
                    cur = reshape(slice, {n, rr});
                } else {
                    DenseTensor rhs = reshape(slice, {rl, n * rr});
                    cur = einsum("ar,rk->ak", {cur, rhs});
                    cur = reshape(cur, {cur.dim(0) * n, rr});
                }
            }
            std::copy_n(cur.data(), width(), out.data() + b * width());
        }
        return out;
    }

    /// Reverse pass of the deduplicated lookup: per-core and per-diagonal
    /// gradients for a batch output gradient of shape (batch, width).
    struct Grads {
        std::vector<DenseTensor> g_cores;
        std::vector<std::vector<double>> g_diags;
    };

    Grads backward(const std::vector<std::int64_t>& indices, const DenseTensor& g_out) {
        if (g_out.ndim() != 2 || g_out.dim(0) != indices.size() || g_out.dim(1) != width())
            throw ShapeError("TTMEmbedding::backward: gradient shape mismatch");
        ensure_cache();
        const LookupPlan plan = build_plan(indices);
        const DenseTensor a1 = group_a1();
        const DenseTensor a2 = group_a2();
        const std::size_t r = a1.dim(2);
        const std::size_t bu = plan.unique_rows.size();

        // scatter-add batch gradients onto unique rows
        DenseTensor gu({bu, nl_, nr_});
        for (std::size_t i = 0; i < indices.size(); ++i) {
            double* dst = gu.data() + plan.inverse_map[i] * width();
            const double* src = g_out.data() + i * width();
            for (std::size_t k = 0; k < width(); ++k) dst[k] += src[k];
        }

        // expanded per-unique-row gathers (as in the forward pass)
        DenseTensor g1({bu, nl_, r}), g2({r, bu, nr_});
        for (std::size_t k = 0; k < bu; ++k) {
            const std::size_t row = plan.unique_left_pairs[plan.left_inverse[k]];
            std::copy_n(a1.data() + row * nl_ * r, nl_ * r, g1.data() + k * nl_ * r);
            const std::size_t col = plan.unique_right_pairs[plan.right_inverse[k]];
            for (std::size_t q = 0; q < r; ++q)
                std::copy_n(a2.data() + (q * m2_ + col) * nr_, nr_,
                            g2.data() + (q * bu + k) * nr_);
        }

        // unique-row einsum backward
        DenseTensor g_g1 = einsum("knm,rkm->knr", {gu, g2});
        DenseTensor g_g2 = einsum("knm,knr->rkm", {gu, g1});

        // pair-level scatter back onto the group tensors
        DenseTensor g_a1({m1_, nl_, r});
        DenseTensor g_a2({r, m2_, nr_});
        for (std::size_t k = 0; k < bu; ++k) {
            const std::size_t row = plan.j1[k];
            double* dst = g_a1.data() + row * nl_ * r;
            const double* src = g_g1.data() + k * nl_ * r;
            for (std::size_t t = 0; t < nl_ * r; ++t) dst[t] += src[t];
            const std::size_t col = plan.j2[k];
            for (std::size_t q = 0; q < r; ++q) {
                double* d2 = g_a2.data() + (q * m2_ + col) * nr_;
                const double* s2 = g_g2.data() + (q * bu + k) * nr_;
                for (std::size_t t = 0; t < nr_; ++t) d2[t] += s2[t];
            }
        }

        // chain rule through the grouping products to the folded cores
        Grads g;
        g.g_cores.assign(table_.order(), DenseTensor());
        std::vector<DenseTensor> g_folded(table_.order());
        backprop_group(left_partials_, 0, split_ - 1,
                       reshape(g_a1, left_partials_.back().shape()), g_folded);
        backprop_group(right_partials_, split_, table_.order() - 1,
                       reshape(g_a2, right_partials_.back().shape()), g_folded);

        // unfold diagonals by the product rule
        g.g_diags.resize(table_.order() - 1);
        for (std::size_t i = 0; i < table_.order(); ++i) {
            const DenseTensor& gf = g_folded[i];
            if (i == 0) {
                g.g_cores[0] = gf;
                continue;
            }
            const auto& diag = table_.diag_controls[i - 1];
            const auto& core = table_.cores[i];
            DenseTensor gc = gf;
            const std::size_t rl = core.dim(0);
            const std::size_t rest = rl == 0 ? 0 : core.size() / rl;
            std::vector<double> gd(rl, 0.0);
            for (std::size_t a = 0; a < rl; ++a)
                for (std::size_t k = 0; k < rest; ++k) {
                    gd[a] += gf[a * rest + k] * core[a * rest + k];
                    gc[a * rest + k] *= diag[a];
                }
            g.g_cores[i] = std::move(gc);
            g.g_diags[i - 1] = std::move(gd);
        }
        return g;
    }

    /// Dense (vocab, width) table; test oracle and compression baseline.
    DenseTensor dense_table() const { return ttm_unfold_matrix(table_, true); }

  private:
    void ensure_cache() {
        if (!cache_valid_) precompute_groups();
    }

    // progressive products over cores [lo..hi], each stored as
    // (r_left, rows-so-far, cols-so-far, r_right); all partials retained
    std::vector<DenseTensor> group_chain(std::size_t lo, std::size_t hi) {
        std::vector<DenseTensor> out;
        DenseTensor cur = folded_[lo];
        out.push_back(cur);
        for (std::size_t i = lo + 1; i <= hi; ++i) {
            const DenseTensor& c = folded_[i];
            // (a,M,N,r) x (r,m,n,s) -> (a,M,m,N,n,s), regrouped row-major
            DenseTensor nxt = einsum("aMNr,rmns->aMmNns", {cur, c});
            cur = reshape(nxt, {cur.dim(0), cur.dim(1) * c.dim(1), cur.dim(2) * c.dim(2),
                                c.dim(3)});
            out.push_back(cur);
        }
        return out;
    }

    // reverse the progressive products: g_final flows back to each folded core
    void backprop_group(const std::vector<DenseTensor>& partials, std::size_t lo, std::size_t hi,
                        DenseTensor g_final, std::vector<DenseTensor>& g_folded) {
        DenseTensor g_cur = std::move(g_final);
        for (std::size_t i = hi; i > lo; --i) {
            const DenseTensor& prev = partials[i - lo - 1];
            const DenseTensor& core = folded_[i];
            // view g_cur in the factored six-axis layout
            DenseTensor g6 = reshape(g_cur, {prev.dim(0), prev.dim(1), core.dim(1),
                                             prev.dim(2), core.dim(2), core.dim(3)});
            g_folded[i] = einsum("aMmNns,aMNr->rmns", {g6, prev});
            g_cur = einsum("aMmNns,rmns->aMNr", {g6, core});
        }
        g_folded[lo] = g_cur;
    }

    TTMTensor table_;
    std::size_t split_ = 0;
    std::size_t m1_ = 0, m2_ = 0, nl_ = 0, nr_ = 0;

    std::vector<DenseTensor> folded_;
    std::vector<DenseTensor> left_partials_, right_partials_;
    bool cache_valid_ = false;
};

}  // namespace tnt
