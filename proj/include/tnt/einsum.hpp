// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tnt/tensor.hpp"

namespace tnt {

/// Thread-local multiply-add counter. Every pairwise contraction adds the
/// product of the sizes of the union of its index labels, which equals the
/// number of fused multiply-adds the kernel executes. Cost-model claims are
/// verified against this counter.
inline std::uint64_t& flop_counter() {
    thread_local std::uint64_t count = 0;
    return count;
}

inline void reset_flop_counter() { flop_counter() = 0; }

/// Subscript labels for an einsum call: one string per operand plus the
/// output string, e.g. inputs {"bmk","bkn"} with output "bmn".
struct EinsumExpr {
    std::vector<std::string> inputs;
    std::string output;

    /// Parse "bmk,bkn->bmn". Labels are restricted to the 52 Latin letters.
    static EinsumExpr parse(std::string_view spec) {
        EinsumExpr e;
        const auto arrow = spec.find("->");
        if (arrow == std::string_view::npos)
            throw EinsumError("einsum expression missing '->': " + std::string(spec));
        std::string_view lhs = spec.substr(0, arrow);
        e.output = std::string(spec.substr(arrow + 2));
        std::size_t start = 0;
        while (true) {
            const auto comma = lhs.find(',', start);
            e.inputs.emplace_back(lhs.substr(start, comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        for (const auto& s : e.inputs)
            for (char c : s)
                if (!is_label(c)) throw EinsumError(std::string("invalid einsum label '") + c + "'");
        for (char c : e.output)
            if (!is_label(c)) throw EinsumError(std::string("invalid einsum label '") + c + "'");
        return e;
    }

    static bool is_label(char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    }
};

namespace detail {

// Accumulated label -> size map; a label seen with two different sizes is a
// dimension mismatch and the error names the offending label.
inline void collect_sizes(std::string_view sub, const DenseTensor& t,
                          std::map<char, std::size_t>& sizes) {
    if (sub.size() != t.ndim())
        throw EinsumError("subscript '" + std::string(sub) + "' has " +
                          std::to_string(sub.size()) + " labels but operand has order " +
                          std::to_string(t.ndim()));
    for (std::size_t i = 0; i < sub.size(); ++i) {
        const char c = sub[i];
        auto [it, inserted] = sizes.emplace(c, t.dim(i));
        if (!inserted && it->second != t.dim(i))
            throw EinsumError(std::string("dimension mismatch for index '") + c + "': " +
                              std::to_string(it->second) + " vs " + std::to_string(t.dim(i)));
    }
}

// Strides per union label; a label repeated within one operand accumulates
// both axis strides (diagonal walk).
inline std::vector<std::size_t> label_strides(const std::vector<char>& labels,
                                              std::string_view sub, const Shape& shape) {
    const auto strides = row_major_strides(shape);
    std::vector<std::size_t> out(labels.size(), 0);
    for (std::size_t k = 0; k < labels.size(); ++k)
        for (std::size_t i = 0; i < sub.size(); ++i)
            if (sub[i] == labels[k]) out[k] += strides[i];
    return out;
}

// Core kernel: contract one or two operands into the requested output
// subscript. Iterates the full odometer over the union of labels with the
// output labels outermost, so results are deterministic for a fixed
// expression and the multiply-add count is exactly prod(union sizes).
inline DenseTensor contract_kernel(std::string_view sub_a, const DenseTensor& a,
                                   const std::string_view* sub_b, const DenseTensor* b,
                                   std::string_view sub_out,
                                   const std::map<char, std::size_t>& sizes) {
    std::vector<char> labels;
    for (char c : sub_out) labels.push_back(c);
    auto add_missing = [&labels](std::string_view sub) {
        for (char c : sub)
            if (std::find(labels.begin(), labels.end(), c) == labels.end()) labels.push_back(c);
    };
    add_missing(sub_a);
    if (sub_b) add_missing(*sub_b);

    Shape out_shape;
    out_shape.reserve(sub_out.size());
    for (char c : sub_out) out_shape.push_back(sizes.at(c));
    DenseTensor out(out_shape);

    const std::size_t n = labels.size();
    std::vector<std::size_t> usize(n);
    std::size_t total = 1;
    for (std::size_t k = 0; k < n; ++k) {
        usize[k] = sizes.at(labels[k]);
        total *= usize[k];
    }
    if (total == 0) return out;

    const auto str_a = label_strides(labels, sub_a, a.shape());
    const auto str_o = label_strides(labels, sub_out, out.shape());
    std::vector<std::size_t> str_b;
    const double* pb = nullptr;
    if (sub_b) {
        str_b = label_strides(labels, *sub_b, b->shape());
        pb = b->data();
    }

    const double* pa = a.data();
    double* po = out.data();
    std::vector<std::size_t> idx(n, 0);
    std::size_t off_a = 0, off_b = 0, off_o = 0;
    for (std::size_t trip = 0;; ++trip) {
        po[off_o] += pb ? pa[off_a] * pb[off_b] : pa[off_a];
        std::size_t k = n;
        while (k-- > 0) {
            ++idx[k];
            off_a += str_a[k];
            off_o += str_o[k];
            if (pb) off_b += str_b[k];
            if (idx[k] < usize[k]) break;
            idx[k] = 0;
            off_a -= str_a[k] * usize[k];
            off_o -= str_o[k] * usize[k];
            if (pb) off_b -= str_b[k] * usize[k];
            if (k == 0) {
                flop_counter() += total;
                return out;
            }
        }
        if (n == 0) {  // pure scalar expression
            flop_counter() += 1;
            return out;
        }
    }
}

}  // namespace detail

/// Generalized tensor contraction over labeled indices. Output entries are
/// the sum, over all assignments of labels absent from the output, of the
/// product of operand entries. Multi-operand expressions evaluate pairwise
/// left-to-right; intermediate results keep exactly the labels still needed.
inline DenseTensor einsum(const EinsumExpr& expr, std::span<const DenseTensor> operands) {
    if (expr.inputs.empty() || expr.inputs.size() != operands.size())
        throw EinsumError("einsum operand count mismatch: expression has " +
                          std::to_string(expr.inputs.size()) + " inputs, got " +
                          std::to_string(operands.size()) + " operands");

    std::map<char, std::size_t> sizes;
    for (std::size_t i = 0; i < operands.size(); ++i)
        detail::collect_sizes(expr.inputs[i], operands[i], sizes);
    for (char c : expr.output)
        if (!sizes.count(c))
            throw EinsumError(std::string("output index '") + c +
                              "' does not appear in any input");
    for (std::size_t i = 0; i < expr.output.size(); ++i)
        for (std::size_t j = i + 1; j < expr.output.size(); ++j)
            if (expr.output[i] == expr.output[j])
                throw EinsumError(std::string("output index '") + expr.output[i] + "' repeats");

    if (operands.size() == 1) {
        return detail::contract_kernel(expr.inputs[0], operands[0], nullptr, nullptr,
                                       expr.output, sizes);
    }

    DenseTensor cur = operands[0];
    std::string cur_sub = expr.inputs[0];
    for (std::size_t i = 1; i < operands.size(); ++i) {
        const bool last = (i + 1 == operands.size());
        std::string step_out;
        if (last) {
            step_out = expr.output;
        } else {
            // keep labels still referenced by later operands or the output
            std::string needed = expr.output;
            for (std::size_t j = i + 1; j < operands.size(); ++j) needed += expr.inputs[j];
            for (char c : cur_sub)
                if (needed.find(c) != std::string::npos && step_out.find(c) == std::string::npos)
                    step_out += c;
            for (char c : expr.inputs[i])
                if (needed.find(c) != std::string::npos && step_out.find(c) == std::string::npos)
                    step_out += c;
        }
        std::string_view sub_b = expr.inputs[i];
        cur = detail::contract_kernel(cur_sub, cur, &sub_b, &operands[i], step_out, sizes);
        cur_sub = step_out;
    }
    return cur;
}

inline DenseTensor einsum(std::string_view spec, std::span<const DenseTensor> operands) {
    return einsum(EinsumExpr::parse(spec), operands);
}

inline DenseTensor einsum(std::string_view spec, std::initializer_list<DenseTensor> operands) {
    std::vector<DenseTensor> ops(operands);
    return einsum(EinsumExpr::parse(spec), std::span<const DenseTensor>(ops));
}

/// Contract `a` and `b` over the given axis pairs. Output dimensions are the
/// free axes of `a` followed by the free axes of `b`. Evaluates through the
/// einsum kernel, so it agrees with the equivalent einsum call bit-for-bit.
inline DenseTensor contract_pair(const DenseTensor& a, const DenseTensor& b,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& axes) {
    static constexpr char kAlphabet[] =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
    if (a.ndim() + b.ndim() > 52)
        throw EinsumError("contract_pair: combined order exceeds the 52-label alphabet");

    std::string sub_a(a.ndim(), '?'), sub_b(b.ndim(), '?');
    std::size_t next = 0;
    for (std::size_t i = 0; i < a.ndim(); ++i) sub_a[i] = kAlphabet[next++];
    for (auto [ax_a, ax_b] : axes) {
        if (ax_a >= a.ndim() || ax_b >= b.ndim())
            throw ShapeError("contract_pair: axis out of range");
        if (a.dim(ax_a) != b.dim(ax_b))
            throw ShapeError("contract_pair: size mismatch on axes (" + std::to_string(ax_a) +
                             "," + std::to_string(ax_b) + "): " + std::to_string(a.dim(ax_a)) +
                             " vs " + std::to_string(b.dim(ax_b)));
        sub_b[ax_b] = sub_a[ax_a];
    }
    for (std::size_t i = 0; i < b.ndim(); ++i)
        if (sub_b[i] == '?') sub_b[i] = kAlphabet[next++];

    std::string out;
    for (std::size_t i = 0; i < a.ndim(); ++i) {
        bool contracted = false;
        for (auto [ax_a, ax_b] : axes) contracted |= (ax_a == i);
        if (!contracted) out += sub_a[i];
    }
    for (std::size_t i = 0; i < b.ndim(); ++i) {
        bool contracted = false;
        for (auto [ax_a, ax_b] : axes) contracted |= (ax_b == i);
        if (!contracted) out += sub_b[i];
    }

    std::vector<DenseTensor> ops{a, b};
    EinsumExpr expr{{sub_a, sub_b}, out};
    return einsum(expr, std::span<const DenseTensor>(ops));
}

}  // namespace tnt
