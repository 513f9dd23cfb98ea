// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tnt/einsum.hpp"
#include "tnt/rng.hpp"
#include "tnt/tensor.hpp"

namespace tnt {

/// Tensor-train factorization with per-bond rank-control diagonals.
///
/// Core i has shape (r_{i-1}, n_i, r_i) with boundary ranks r_0 = r_d = 1.
/// diag_controls[j] sits on bond j+1 (between cores j and j+1, 0-indexed)
/// and scales that bond channel-wise when applied. Diagonals are stored
/// separately from the cores during training and only folded in for pruning
/// or inference.
struct TTTensor {
    std::vector<DenseTensor> cores;
    std::vector<std::vector<double>> diag_controls;

    std::size_t order() const { return cores.size(); }

    Shape dims() const {
        Shape out;
        out.reserve(cores.size());
        for (const auto& c : cores) out.push_back(c.dim(1));
        return out;
    }

    /// (r_0, r_1, ..., r_d)
    std::vector<std::size_t> rank_chain() const {
        std::vector<std::size_t> out;
        if (cores.empty()) return out;
        out.push_back(cores.front().dim(0));
        for (const auto& c : cores) out.push_back(c.dim(2));
        return out;
    }

    void validate() const {
        if (cores.empty()) throw ShapeError("TTTensor: no cores");
        for (const auto& c : cores)
            if (c.ndim() != 3) throw ShapeError("TTTensor: cores must be 3-way");
        if (cores.front().dim(0) != 1 || cores.back().dim(2) != 1)
            throw ShapeError("TTTensor: boundary ranks must be 1");
        for (std::size_t i = 0; i + 1 < cores.size(); ++i)
            if (cores[i].dim(2) != cores[i + 1].dim(0))
                throw ShapeError("TTTensor: bond mismatch between cores " + std::to_string(i) +
                                 " and " + std::to_string(i + 1));
        if (diag_controls.size() != cores.size() - 1)
            throw ShapeError("TTTensor: need one diagonal per internal bond");
        for (std::size_t j = 0; j < diag_controls.size(); ++j)
            if (diag_controls[j].size() != cores[j].dim(2))
                throw ShapeError("TTTensor: diagonal " + std::to_string(j) +
                                 " length does not match bond rank");
    }
};

/// Tensor-train-matrix factorization: core i has shape (r_{i-1}, m_i, n_i, r_i),
/// representing an order-2d tensor with interleaved row/column modes.
struct TTMTensor {
    std::vector<DenseTensor> cores;
    std::vector<std::vector<double>> diag_controls;

    std::size_t order() const { return cores.size(); }

    Shape row_dims() const {
        Shape out;
        for (const auto& c : cores) out.push_back(c.dim(1));
        return out;
    }
    Shape col_dims() const {
        Shape out;
        for (const auto& c : cores) out.push_back(c.dim(2));
        return out;
    }

    std::vector<std::size_t> rank_chain() const {
        std::vector<std::size_t> out;
        if (cores.empty()) return out;
        out.push_back(cores.front().dim(0));
        for (const auto& c : cores) out.push_back(c.dim(3));
        return out;
    }

    void validate() const {
        if (cores.empty()) throw ShapeError("TTMTensor: no cores");
        for (const auto& c : cores)
            if (c.ndim() != 4) throw ShapeError("TTMTensor: cores must be 4-way");
        if (cores.front().dim(0) != 1 || cores.back().dim(3) != 1)
            throw ShapeError("TTMTensor: boundary ranks must be 1");
        for (std::size_t i = 0; i + 1 < cores.size(); ++i)
            if (cores[i].dim(3) != cores[i + 1].dim(0))
                throw ShapeError("TTMTensor: bond mismatch between cores " + std::to_string(i) +
                                 " and " + std::to_string(i + 1));
        if (diag_controls.size() != cores.size() - 1)
            throw ShapeError("TTMTensor: need one diagonal per internal bond");
        for (std::size_t j = 0; j < diag_controls.size(); ++j)
            if (diag_controls[j].size() != cores[j].dim(3))
                throw ShapeError("TTMTensor: diagonal " + std::to_string(j) +
                                 " length does not match bond rank");
    }
};

namespace detail {

/// Scale slice a of a core along its first axis by d[a].
inline DenseTensor scale_left_axis(const DenseTensor& core, const std::vector<double>& d) {
    DenseTensor out = core;
    const std::size_t r = core.dim(0);
    const std::size_t rest = r == 0 ? 0 : core.size() / r;
    for (std::size_t a = 0; a < r; ++a)
        for (std::size_t k = 0; k < rest; ++k) out[a * rest + k] *= d[a];
    return out;
}

}  // namespace detail

/// Copy with every bond diagonal folded into the right-hand core of its bond;
/// diagonals reset to ones. Reconstruction is unchanged.
inline TTTensor fold_diags(const TTTensor& t) {
    TTTensor out = t;
    for (std::size_t j = 0; j < t.diag_controls.size(); ++j) {
        out.cores[j + 1] = detail::scale_left_axis(out.cores[j + 1], t.diag_controls[j]);
        out.diag_controls[j].assign(t.diag_controls[j].size(), 1.0);
    }
    return out;
}

inline TTMTensor fold_diags(const TTMTensor& t) {
    TTMTensor out = t;
    for (std::size_t j = 0; j < t.diag_controls.size(); ++j) {
        out.cores[j + 1] = detail::scale_left_axis(out.cores[j + 1], t.diag_controls[j]);
        out.diag_controls[j].assign(t.diag_controls[j].size(), 1.0);
    }
    return out;
}

/// Full tensor of shape (n_1, ..., n_d). When apply_diags is set, each bond
/// is scaled channel-wise by its diagonal before contraction.
inline DenseTensor tt_reconstruct(const TTTensor& t, bool apply_diags = true) {
    t.validate();
    const Shape dims = t.dims();
    // running product: matrix (prod of modes so far, r_i)
    DenseTensor cur = reshape(t.cores[0], {dims[0], t.cores[0].dim(2)});
    for (std::size_t i = 1; i < t.order(); ++i) {
        DenseTensor core = apply_diags ? detail::scale_left_axis(t.cores[i], t.diag_controls[i - 1])
                                       : t.cores[i];
        const std::size_t r_in = core.dim(0), n = core.dim(1), r_out = core.dim(2);
        DenseTensor rhs = reshape(core, {r_in, n * r_out});
        cur = einsum("ar,rk->ak", {cur, rhs});
        cur = reshape(cur, {cur.dim(0) * n, r_out});
    }
    return reshape(cur, dims);
}

/// Full order-2d tensor of shape (m_1, n_1, ..., m_d, n_d).
inline DenseTensor ttm_reconstruct(const TTMTensor& t, bool apply_diags = true) {
    t.validate();
    Shape full;
    for (const auto& c : t.cores) {
        full.push_back(c.dim(1));
        full.push_back(c.dim(2));
    }
    DenseTensor cur = reshape(t.cores[0], {t.cores[0].dim(1) * t.cores[0].dim(2),
                                           t.cores[0].dim(3)});
    for (std::size_t i = 1; i < t.order(); ++i) {
        DenseTensor core = apply_diags ? detail::scale_left_axis(t.cores[i], t.diag_controls[i - 1])
                                       : t.cores[i];
        const std::size_t r_in = core.dim(0);
        const std::size_t rest = core.dim(1) * core.dim(2) * core.dim(3);
        DenseTensor rhs = reshape(core, {r_in, rest});
        cur = einsum("ar,rk->ak", {cur, rhs});
        cur = reshape(cur, {cur.dim(0) * core.dim(1) * core.dim(2), core.dim(3)});
    }
    return reshape(cur, full);
}

/// Unfold a TTM tensor to its (prod m_i, prod n_i) matrix: permute the
/// interleaved (m_1, n_1, ..., m_d, n_d) modes to all-rows-then-all-columns
/// and flatten.
inline DenseTensor ttm_unfold_matrix(const TTMTensor& t, bool apply_diags = true) {
    DenseTensor full = ttm_reconstruct(t, apply_diags);
    const std::size_t d = t.order();
    const Shape rows = t.row_dims(), cols = t.col_dims();
    const std::size_t m = shape_numel(rows), n = shape_numel(cols);
    DenseTensor out({m, n});
    const Shape& fs = full.shape();
    const auto strides = row_major_strides(fs);
    for (std::size_t i = 0; i < m; ++i) {
        const auto zi = mixed_radix_decode(i, rows);
        for (std::size_t j = 0; j < n; ++j) {
            const auto zj = mixed_radix_decode(j, cols);
            std::size_t off = 0;
            for (std::size_t k = 0; k < d; ++k)
                off += zi[k] * strides[2 * k] + zj[k] * strides[2 * k + 1];
            out[i * n + j] = full[off];
        }
    }
    return out;
}

/// Compressed-size accounting for one factorized tensor.
/// exact_size counts core elements surviving the thresholded l0 norm of the
/// diagonals; relaxed_size replaces each count with the l1 norm.
struct SizeReport {
    std::size_t exact_size = 0;
    double relaxed_size = 0.0;
    std::vector<std::size_t> exact_per_core;
    std::vector<double> relaxed_per_core;
};

namespace detail {

inline SizeReport size_report_impl(const std::vector<std::size_t>& mode_elems,
                                   const std::vector<std::vector<double>>& diags,
                                   double epsilon) {
    const std::size_t d = mode_elems.size();
    std::vector<double> l0(d + 1, 1.0), l1(d + 1, 1.0);  // boundary bonds count as 1
    for (std::size_t j = 0; j < diags.size(); ++j) {
        double c0 = 0.0, c1 = 0.0;
        for (double v : diags[j]) {
            const double a = v < 0 ? -v : v;
            if (a > epsilon) c0 += 1.0;
            c1 += a;
        }
        l0[j + 1] = c0;
        l1[j + 1] = c1;
    }
    SizeReport rep;
    for (std::size_t i = 0; i < d; ++i) {
        const double e = static_cast<double>(mode_elems[i]) * l0[i] * l0[i + 1];
        const double r = static_cast<double>(mode_elems[i]) * l1[i] * l1[i + 1];
        rep.exact_per_core.push_back(static_cast<std::size_t>(e + 0.5));
        rep.relaxed_per_core.push_back(r);
        rep.exact_size += rep.exact_per_core.back();
        rep.relaxed_size += r;
    }
    return rep;
}

}  // namespace detail

inline SizeReport param_count(const TTTensor& t, double epsilon) {
    std::vector<std::size_t> modes;
    for (const auto& c : t.cores) modes.push_back(c.dim(1));
    return detail::size_report_impl(modes, t.diag_controls, epsilon);
}

/// TTM cores contribute m_i * n_i elements per surviving rank pair.
inline SizeReport param_count(const TTMTensor& t, double epsilon) {
    std::vector<std::size_t> modes;
    for (const auto& c : t.cores) modes.push_back(c.dim(1) * c.dim(2));
    return detail::size_report_impl(modes, t.diag_controls, epsilon);
}

/// Per-bond absolute thresholds: epsilon_rel times the bond's max |d|.
template <typename Tensor>
inline std::vector<double> relative_bond_thresholds(const Tensor& t, double epsilon_rel) {
    std::vector<double> out;
    for (const auto& dj : t.diag_controls) {
        double m = 0.0;
        for (double v : dj) m = std::max(m, v < 0 ? -v : v);
        out.push_back(epsilon_rel * m);
    }
    return out;
}

template <typename Tensor>
struct PruneResult {
    Tensor tensor;
    std::vector<std::size_t> removed;  // per bond
    bool removable = false;            // some bond hit rank 0
};

namespace detail {

inline DenseTensor keep_slices_last_axis(const DenseTensor& core,
                                         const std::vector<std::size_t>& keep) {
    Shape shape = core.shape();
    const std::size_t r = shape.back();
    shape.back() = keep.size();
    const std::size_t lead = r == 0 ? core.size() : core.size() / r;
    DenseTensor out(shape);
    for (std::size_t a = 0; a < lead; ++a)
        for (std::size_t k = 0; k < keep.size(); ++k)
            out[a * keep.size() + k] = core[a * r + keep[k]];
    return out;
}

inline DenseTensor keep_slices_first_axis_scaled(const DenseTensor& core,
                                                 const std::vector<std::size_t>& keep,
                                                 const std::vector<double>& scale) {
    Shape shape = core.shape();
    const std::size_t r = shape.front();
    shape.front() = keep.size();
    const std::size_t rest = r == 0 ? 0 : core.size() / r;
    DenseTensor out(shape);
    for (std::size_t k = 0; k < keep.size(); ++k)
        for (std::size_t a = 0; a < rest; ++a)
            out[k * rest + a] = core[keep[k] * rest + a] * scale[k];
    return out;
}

template <typename Tensor>
PruneResult<Tensor> prune_impl(const Tensor& t, const std::vector<double>& thresholds) {
    PruneResult<Tensor> res;
    res.tensor = t;
    res.removed.assign(t.diag_controls.size(), 0);
    for (std::size_t j = 0; j < t.diag_controls.size(); ++j) {
        const auto& dj = res.tensor.diag_controls[j];
        std::vector<std::size_t> keep;
        std::vector<double> survivors;
        for (std::size_t k = 0; k < dj.size(); ++k) {
            const double a = dj[k] < 0 ? -dj[k] : dj[k];
            if (a > thresholds[j]) {
                keep.push_back(k);
                survivors.push_back(dj[k]);
            }
        }
        res.removed[j] = dj.size() - keep.size();
        res.tensor.cores[j] = keep_slices_last_axis(res.tensor.cores[j], keep);
        res.tensor.cores[j + 1] =
            keep_slices_first_axis_scaled(res.tensor.cores[j + 1], keep, survivors);
        res.tensor.diag_controls[j].assign(keep.size(), 1.0);
        if (keep.empty()) res.removable = true;
    }
    return res;
}

}  // namespace detail

/// Delete bond channels whose diagonal magnitude is <= epsilon. Surviving
/// diagonal values are folded into the right-hand core and the diagonal is
/// reset to ones. A bond left with rank 0 marks the tensor removable.
inline PruneResult<TTTensor> prune(const TTTensor& t, double epsilon) {
    return detail::prune_impl(t, std::vector<double>(t.diag_controls.size(), epsilon));
}
inline PruneResult<TTMTensor> prune(const TTMTensor& t, double epsilon) {
    return detail::prune_impl(t, std::vector<double>(t.diag_controls.size(), epsilon));
}
inline PruneResult<TTTensor> prune(const TTTensor& t, const std::vector<double>& per_bond_eps) {
    return detail::prune_impl(t, per_bond_eps);
}
inline PruneResult<TTMTensor> prune(const TTMTensor& t, const std::vector<double>& per_bond_eps) {
    return detail::prune_impl(t, per_bond_eps);
}

namespace detail {

inline void check_rank_chain(std::size_t d, const std::vector<std::size_t>& ranks) {
    if (ranks.size() != d + 1)
        throw ShapeError("rank chain must have d+1 entries");
    if (ranks.front() != 1 || ranks.back() != 1)
        throw ShapeError("rank chain must start and end at 1");
}

}  // namespace detail

/// I.i.d. normal cores with a per-core std chosen so the reconstructed
/// tensor's entry variance equals `entry_variance` (number of rank paths
/// times sigma^(2d)). Diagonals start at ones so the initial model equals an
/// unmodified TT. Deterministic given the rng state.
inline TTTensor init_tt(const Shape& dims, const std::vector<std::size_t>& ranks, Rng rng,
                        double entry_variance) {
    const std::size_t d = dims.size();
    detail::check_rank_chain(d, ranks);
    double paths = 1.0;
    for (std::size_t j = 1; j < d; ++j) paths *= static_cast<double>(ranks[j]);
    const double sigma = std::pow(entry_variance / paths, 1.0 / (2.0 * d));
    TTTensor t;
    for (std::size_t i = 0; i < d; ++i) {
        DenseTensor core({ranks[i], dims[i], ranks[i + 1]});
        for (double& v : core.values()) v = sigma * rng.normal();
        t.cores.push_back(std::move(core));
        if (i + 1 < d) t.diag_controls.emplace_back(ranks[i + 1], 1.0);
    }
    t.validate();
    return t;
}

/// Fan-in variance default: 2 / (product of the first ceil(d/2) dims).
inline TTTensor init_tt(const Shape& dims, const std::vector<std::size_t>& ranks, Rng rng) {
    double fan_in = 1.0;
    for (std::size_t i = 0; i < (dims.size() + 1) / 2; ++i) fan_in *= static_cast<double>(dims[i]);
    return init_tt(dims, ranks, rng, 2.0 / fan_in);
}

inline TTMTensor init_ttm(const Shape& row_dims, const Shape& col_dims,
                          const std::vector<std::size_t>& ranks, Rng rng,
                          double entry_variance) {
    const std::size_t d = row_dims.size();
    if (col_dims.size() != d) throw ShapeError("init_ttm: row/col factor counts differ");
    detail::check_rank_chain(d, ranks);
    double paths = 1.0;
    for (std::size_t j = 1; j < d; ++j) paths *= static_cast<double>(ranks[j]);
    const double sigma = std::pow(entry_variance / paths, 1.0 / (2.0 * d));
    TTMTensor t;
    for (std::size_t i = 0; i < d; ++i) {
        DenseTensor core({ranks[i], row_dims[i], col_dims[i], ranks[i + 1]});
        for (double& v : core.values()) v = sigma * rng.normal();
        t.cores.push_back(std::move(core));
        if (i + 1 < d) t.diag_controls.emplace_back(ranks[i + 1], 1.0);
    }
    t.validate();
    return t;
}

}  // namespace tnt
