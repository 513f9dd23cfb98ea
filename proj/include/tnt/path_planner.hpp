// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tnt/einsum.hpp"
#include "tnt/tensor.hpp"

namespace tnt {

/// A tensor network: named nodes with subscript strings, per-label bond
/// sizes, and the output subscript.
struct NetworkNode {
    std::string name;
    std::string subscript;
};

struct TensorNetworkSpec {
    std::vector<NetworkNode> nodes;
    std::map<char, std::size_t> sizes;
    std::string output;

    void validate() const {
        if (nodes.empty()) throw ShapeError("network spec has no nodes");
        for (const auto& n : nodes)
            for (char c : n.subscript)
                if (!sizes.count(c))
                    throw ShapeError(std::string("no size given for index '") + c + "'");
        for (char c : output) {
            bool found = false;
            for (const auto& n : nodes)
                found |= n.subscript.find(c) != std::string::npos;
            if (!found)
                throw ShapeError(std::string("output index '") + c + "' not in any node");
        }
    }
};

struct PlanStep {
    std::string left;
    std::string right;
    std::string result;
    std::string result_subscript;
    std::uint64_t cost = 0;
};

struct ContractionPlan {
    std::vector<PlanStep> steps;
    std::uint64_t total_cost = 0;
};

/// Multiply-add count of one pairwise contraction: the product of the sizes
/// of the union of both subscripts (one fused multiply-add per assignment of
/// every participating index).
inline std::uint64_t step_cost(std::string_view left, std::string_view right,
                               const std::map<char, std::size_t>& sizes) {
    std::string seen;
    std::uint64_t cost = 1;
    for (std::string_view sub : {left, right}) {
        for (char c : sub) {
            if (seen.find(c) != std::string::npos) continue;
            seen += c;
            auto it = sizes.find(c);
            if (it == sizes.end())
                throw ShapeError(std::string("no size given for index '") + c + "'");
            cost *= it->second;
        }
    }
    return cost;
}

namespace detail {

// Subscript a merged node keeps: labels appearing in the merged pair that are
// still referenced by other live nodes or by the output. Ordered by first
// appearance in (left, right).
inline std::string surviving_subscript(const std::string& left, const std::string& right,
                                       const std::vector<std::string>& other_live,
                                       const std::string& output) {
    std::string needed = output;
    for (const auto& s : other_live) needed += s;
    std::string out;
    for (std::string_view sub : {std::string_view(left), std::string_view(right)}) {
        for (char c : sub)
            if (needed.find(c) != std::string::npos && out.find(c) == std::string::npos)
                out += c;
    }
    return out;
}

}  // namespace detail

/// Left-to-right fold over the node list in the given order; the baseline
/// every searched plan must beat or match.
inline ContractionPlan naive_left_to_right_plan(const TensorNetworkSpec& spec) {
    spec.validate();
    ContractionPlan plan;
    if (spec.nodes.size() < 2) return plan;
    std::string cur_name = spec.nodes[0].name;
    std::string cur_sub = spec.nodes[0].subscript;
    int next_id = 1;
    for (std::size_t i = 1; i < spec.nodes.size(); ++i) {
        std::vector<std::string> rest;
        for (std::size_t j = i + 1; j < spec.nodes.size(); ++j)
            rest.push_back(spec.nodes[j].subscript);
        PlanStep st;
        st.left = cur_name;
        st.right = spec.nodes[i].name;
        st.result = "t" + std::to_string(next_id++);
        st.result_subscript =
            detail::surviving_subscript(cur_sub, spec.nodes[i].subscript, rest, spec.output);
        st.cost = step_cost(cur_sub, spec.nodes[i].subscript, spec.sizes);
        plan.total_cost += st.cost;
        cur_name = st.result;
        cur_sub = st.result_subscript;
        plan.steps.push_back(std::move(st));
    }
    return plan;
}

/// Minimal-cost plan over all binary contraction trees (bitmask DP over node
/// subsets; at most 8 nodes). Ties break toward the lexicographically
/// smallest subset split, making results deterministic.
inline ContractionPlan exhaustive_search(const TensorNetworkSpec& spec) {
    spec.validate();
    const std::size_t n = spec.nodes.size();
    if (n > 8) throw ShapeError("exhaustive_search: more than 8 nodes");
    ContractionPlan plan;
    if (n < 2) return plan;

    const std::uint32_t full = (1u << n) - 1;
    // subscript of the merged tensor for each subset
    std::vector<std::string> sub(full + 1);
    for (std::uint32_t s = 1; s <= full; ++s) {
        std::string inside;
        std::string outside = spec.output;
        for (std::size_t i = 0; i < n; ++i) {
            if (s & (1u << i))
                inside += spec.nodes[i].subscript;
            else
                outside += spec.nodes[i].subscript;
        }
        std::string& out = sub[s];
        for (char c : inside)
            if (outside.find(c) != std::string::npos && out.find(c) == std::string::npos)
                out += c;
    }

    constexpr std::uint64_t kInf = ~std::uint64_t(0);
    std::vector<std::uint64_t> best(full + 1, kInf);
    std::vector<std::uint32_t> split(full + 1, 0);
    for (std::size_t i = 0; i < n; ++i) best[1u << i] = 0;
    for (std::uint32_t s = 1; s <= full; ++s) {
        if (best[s] != kInf) continue;  // leaf
        for (std::uint32_t a = (s - 1) & s; a; a = (a - 1) & s) {
            const std::uint32_t b = s & ~a;
            if (a > b) continue;  // each unordered split once, smaller half first
            const std::uint64_t c = best[a] + best[b] + step_cost(sub[a], sub[b], spec.sizes);
            if (c < best[s] || (c == best[s] && a < split[s])) {
                best[s] = c;
                split[s] = a;
            }
        }
    }

    int next_id = 1;
    // emit post-order: left subtree, right subtree, then the step
    auto emit = [&](auto&& self, std::uint32_t s) -> std::string {
        if ((s & (s - 1)) == 0) {
            for (std::size_t i = 0; i < n; ++i)
                if (s == (1u << i)) return spec.nodes[i].name;
        }
        const std::uint32_t a = split[s], b = s & ~a;
        std::string left = self(self, a);
        std::string right = self(self, b);
        PlanStep st;
        st.left = std::move(left);
        st.right = std::move(right);
        st.result = "t" + std::to_string(next_id++);
        st.result_subscript = sub[s];
        st.cost = step_cost(sub[a], sub[b], spec.sizes);
        plan.total_cost += st.cost;
        plan.steps.push_back(std::move(st));
        return plan.steps.back().result;
    };
    emit(emit, full);
    return plan;
}

/// Greedy search: repeatedly contract the live pair whose result tensor has
/// the fewest elements; ties break by lower step cost, then by the
/// lexicographic (left, right) name pair.
inline ContractionPlan greedy_search(const TensorNetworkSpec& spec) {
    spec.validate();
    ContractionPlan plan;
    struct Live {
        std::string name, sub;
    };
    std::vector<Live> live;
    for (const auto& nd : spec.nodes) live.push_back({nd.name, nd.subscript});
    int next_id = 1;
    while (live.size() > 1) {
        std::size_t bi = 0, bj = 1;
        std::uint64_t best_elems = ~std::uint64_t(0), best_cost = ~std::uint64_t(0);
        std::string best_sub;
        for (std::size_t i = 0; i < live.size(); ++i) {
            for (std::size_t j = i + 1; j < live.size(); ++j) {
                std::vector<std::string> rest;
                for (std::size_t k = 0; k < live.size(); ++k)
                    if (k != i && k != j) rest.push_back(live[k].sub);
                const std::string rsub =
                    detail::surviving_subscript(live[i].sub, live[j].sub, rest, spec.output);
                std::uint64_t elems = 1;
                for (char c : rsub) elems *= spec.sizes.at(c);
                const std::uint64_t cost = step_cost(live[i].sub, live[j].sub, spec.sizes);
                const bool better =
                    elems < best_elems || (elems == best_elems && cost < best_cost) ||
                    (elems == best_elems && cost == best_cost &&
                     std::make_pair(live[i].name, live[j].name) <
                         std::make_pair(live[bi].name, live[bj].name));
                if (better) {
                    bi = i;
                    bj = j;
                    best_elems = elems;
                    best_cost = cost;
                    best_sub = rsub;
                }
            }
        }
        PlanStep st;
        st.left = live[bi].name;
        st.right = live[bj].name;
        st.result = "t" + std::to_string(next_id++);
        st.result_subscript = best_sub;
        st.cost = best_cost;
        plan.total_cost += st.cost;
        plan.steps.push_back(st);
        live[bi] = {st.result, best_sub};
        live.erase(live.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    return plan;
}

// ---------------------------------------------------------------------------
// TT forward/backward networks and the empirical (fixed) contraction path.
// ---------------------------------------------------------------------------

enum class TTPlanMode { forward, backward_gX, backward_cores };

namespace detail {

/// Label assignment for a 2d-core TT forward network. Mode i uses the i-th
/// lowercase letter, internal bond i the i-th uppercase letter, and the batch
/// index '0'... labels must be letters, so batch = 'z' reserved.
struct TTLabels {
    std::string mode;   // mode[i], i in [0, 2d)
    std::string bond;   // bond[i] labels r_{i+1}, i in [0, 2d-1)
    char batch = 'z';

    static TTLabels make(std::size_t two_d) {
        if (two_d > 20) throw ShapeError("TT network too large for label alphabet");
        TTLabels l;
        for (std::size_t i = 0; i < two_d; ++i) l.mode += static_cast<char>('a' + i);
        for (std::size_t i = 0; i + 1 < two_d; ++i) l.bond += static_cast<char>('A' + i);
        return l;
    }
};

}  // namespace detail

/// Network spec for the TT-compressed linear forward pass: node X of shape
/// (b, n_1..n_d) and cores G1..G_{2d}; output (b, n_{d+1}..n_{2d}).
/// Boundary bonds (size 1) are omitted from the subscripts.
inline TensorNetworkSpec tt_forward_spec(std::size_t d, const Shape& dims,
                                         const std::vector<std::size_t>& ranks, std::size_t b) {
    const std::size_t two_d = 2 * d;
    if (dims.size() != two_d) throw ShapeError("tt_forward_spec: need 2d dims");
    if (ranks.size() != two_d + 1) throw ShapeError("tt_forward_spec: need 2d+1 ranks");
    if (ranks.front() != 1 || ranks.back() != 1)
        throw ShapeError("tt_forward_spec: boundary ranks must be 1");
    const auto lab = detail::TTLabels::make(two_d);
    TensorNetworkSpec spec;
    spec.sizes[lab.batch] = b;
    for (std::size_t i = 0; i < two_d; ++i) spec.sizes[lab.mode[i]] = dims[i];
    for (std::size_t i = 0; i + 1 < two_d; ++i) spec.sizes[lab.bond[i]] = ranks[i + 1];

    std::string xsub(1, lab.batch);
    for (std::size_t i = 0; i < d; ++i) xsub += lab.mode[i];
    spec.nodes.push_back({"X", xsub});
    for (std::size_t i = 0; i < two_d; ++i) {
        std::string sub;
        if (i > 0) sub += lab.bond[i - 1];
        sub += lab.mode[i];
        if (i + 1 < two_d) sub += lab.bond[i];
        spec.nodes.push_back({"G" + std::to_string(i + 1), sub});
    }
    spec.output = std::string(1, lab.batch);
    for (std::size_t i = d; i < two_d; ++i) spec.output += lab.mode[i];
    return spec;
}

/// The paper's fixed contraction order. Forward: build the input-side and
/// output-side core chains sequentially (intermediates retained), then
/// contract the batch tensor in two steps, eliminating the batch index early.
/// Backward plans reuse the cached chain products as inputs.
inline ContractionPlan empirical_tt_plan(std::size_t d, const Shape& dims,
                                         const std::vector<std::size_t>& ranks, std::size_t b,
                                         TTPlanMode mode) {
    const std::size_t two_d = 2 * d;
    if (dims.size() != two_d) throw ShapeError("empirical_tt_plan: need 2d dims");
    if (ranks.size() != two_d + 1) throw ShapeError("empirical_tt_plan: need 2d+1 ranks");
    if (ranks.front() != 1 || ranks.back() != 1)
        throw ShapeError("empirical_tt_plan: boundary ranks must be 1");
    const auto lab = detail::TTLabels::make(two_d);
    std::map<char, std::size_t> sizes;
    sizes[lab.batch] = b;
    for (std::size_t i = 0; i < two_d; ++i) sizes[lab.mode[i]] = dims[i];
    for (std::size_t i = 0; i + 1 < two_d; ++i) sizes[lab.bond[i]] = ranks[i + 1];

    auto core_name = [](std::size_t i) { return "G" + std::to_string(i + 1); };
    auto core_sub = [&](std::size_t i) {
        std::string sub;
        if (i > 0) sub += lab.bond[i - 1];
        sub += lab.mode[i];
        if (i + 1 < two_d) sub += lab.bond[i];
        return sub;
    };
    // chain product over cores [lo, hi]: left bond + modes + right bond
    auto chain_sub = [&](std::size_t lo, std::size_t hi) {
        std::string sub;
        if (lo > 0) sub += lab.bond[lo - 1];
        for (std::size_t i = lo; i <= hi; ++i) sub += lab.mode[i];
        if (hi + 1 < two_d) sub += lab.bond[hi];
        return sub;
    };

    ContractionPlan plan;
    auto push = [&](const std::string& l, const std::string& lsub, const std::string& r,
                    const std::string& rsub, const std::string& result,
                    const std::string& result_sub) {
        PlanStep st;
        st.left = l;
        st.right = r;
        st.result = result;
        st.result_subscript = result_sub;
        st.cost = step_cost(lsub, rsub, sizes);
        plan.total_cost += st.cost;
        plan.steps.push_back(std::move(st));
    };

    // prefix chains: A_i over cores [0, i], B_i over cores [d, d+i]
    auto build_prefix = [&](std::size_t lo, std::size_t hi, const std::string& base) {
        for (std::size_t i = lo + 1; i <= hi; ++i) {
            const std::string prev =
                i == lo + 1 ? core_name(lo) : base + std::to_string(i - lo);
            push(prev, chain_sub(lo, i - 1), core_name(i), core_sub(i),
                 base + std::to_string(i - lo + 1), chain_sub(lo, i));
        }
    };
    // suffix chains: A_{-i} over cores [d-i, d-1], B_{-i} over [2d-i, 2d-1]
    auto build_suffix = [&](std::size_t lo, std::size_t hi, const std::string& base) {
        for (std::size_t i = hi; i-- > lo;) {
            const std::string prev =
                i == hi - 1 ? core_name(hi) : base + std::to_string(hi - i);
            push(core_name(i), core_sub(i), prev, chain_sub(i + 1, hi),
                 base + std::to_string(hi - i + 1), chain_sub(i, hi));
        }
    };

    const std::string a_d = d == 1 ? core_name(0) : "A" + std::to_string(d);
    const std::string b_d = d == 1 ? core_name(d) : "B" + std::to_string(d);
    const std::string a_d_sub = chain_sub(0, d - 1);
    const std::string b_d_sub = chain_sub(d, two_d - 1);
    std::string x_sub(1, lab.batch);
    for (std::size_t i = 0; i < d; ++i) x_sub += lab.mode[i];
    std::string y_sub(1, lab.batch);
    for (std::size_t i = d; i < two_d; ++i) y_sub += lab.mode[i];
    const std::string br = std::string(1, lab.batch) + (d > 0 ? std::string(1, lab.bond[d - 1]) : "");

    switch (mode) {
        case TTPlanMode::forward: {
            build_prefix(0, d - 1, "A");
            build_prefix(d, two_d - 1, "B");
            push("X", x_sub, a_d, a_d_sub, "T1", br);
            push("T1", br, b_d, b_d_sub, "Y", y_sub);
            break;
        }
        case TTPlanMode::backward_gX: {
            push("gY", y_sub, b_d, b_d_sub, "U1", br);
            push("U1", br, a_d, a_d_sub, "gX", x_sub);
            break;
        }
        case TTPlanMode::backward_cores: {
            // suffix chain products consumed by the per-core contractions
            if (d >= 2) {
                build_suffix(0, d - 1, "Ar");
                build_suffix(d, two_d - 1, "Br");
            }
            auto chain_name = [&](bool output_side, std::size_t lo, std::size_t hi) {
                // prefix products are named A2..Ad / B2..Bd, suffixes Ar2..; single cores by name
                if (lo == hi) return core_name(lo);
                if (output_side) {
                    if (lo == d) return "B" + std::to_string(hi - lo + 1);
                    return "Br" + std::to_string(hi - lo + 1);
                }
                if (lo == 0) return "A" + std::to_string(hi - lo + 1);
                return "Ar" + std::to_string(hi - lo + 1);
            };
            // T2 route: cores on the output side
            push("T1", br, "gY", y_sub, "T2", std::string(1, lab.bond[d - 1]) + y_sub.substr(1));
            const std::string t2_sub = std::string(1, lab.bond[d - 1]) + y_sub.substr(1);
            for (std::size_t i = d; i < two_d; ++i) {
                std::string cur = "T2";
                std::string cur_sub = t2_sub;
                if (i > d) {
                    const std::string left = chain_name(true, d, i - 1);
                    const std::string lsub = chain_sub(d, i - 1);
                    const std::string out_sub = [&] {
                        // contract shared (r_{d}, modes d..i-1); keep bond r_{i-1}+modes i..2d-1
                        std::string s;
                        s += lab.bond[i - 1];
                        for (std::size_t k = i; k < two_d; ++k) s += lab.mode[k];
                        return s;
                    }();
                    push(cur, cur_sub, left, lsub, "gG" + std::to_string(i + 1) + "_partial",
                         out_sub);
                    cur = "gG" + std::to_string(i + 1) + "_partial";
                    cur_sub = out_sub;
                }
                if (i + 1 < two_d) {
                    const std::string right = chain_name(true, i + 1, two_d - 1);
                    const std::string rsub = chain_sub(i + 1, two_d - 1);
                    push(cur, cur_sub, right, rsub, "gG" + std::to_string(i + 1), core_sub(i));
                } else if (i > d) {
                    plan.steps.back().result = "gG" + std::to_string(i + 1);
                    plan.steps.back().result_subscript = core_sub(i);
                }
            }
            // U2 route: cores on the input side
            push("U1", br, "X", x_sub, "U2", std::string(1, lab.bond[d - 1]) + x_sub.substr(1));
            const std::string u2_sub = std::string(1, lab.bond[d - 1]) + x_sub.substr(1);
            for (std::size_t i = 0; i < d; ++i) {
                std::string cur = "U2";
                std::string cur_sub = u2_sub;
                if (i > 0) {
                    const std::string left = chain_name(false, 0, i - 1);
                    const std::string lsub = chain_sub(0, i - 1);
                    std::string out_sub;
                    out_sub += lab.bond[d - 1];
                    out_sub += lab.bond[i - 1];
                    for (std::size_t k = i; k < d; ++k) out_sub += lab.mode[k];
                    push(cur, cur_sub, left, lsub, "gG" + std::to_string(i + 1) + "_partial",
                         out_sub);
                    cur = "gG" + std::to_string(i + 1) + "_partial";
                    cur_sub = out_sub;
                }
                if (i + 1 < d) {
                    const std::string right = chain_name(false, i + 1, d - 1);
                    const std::string rsub = chain_sub(i + 1, d - 1);
                    push(cur, cur_sub, right, rsub, "gG" + std::to_string(i + 1), core_sub(i));
                } else if (i > 0) {
                    plan.steps.back().result = "gG" + std::to_string(i + 1);
                    plan.steps.back().result_subscript = core_sub(i);
                }
            }
            break;
        }
    }
    return plan;
}

/// True iff the plan (over a TT forward network named X, G1..G2d) first
/// merges consecutive core groups and then absorbs them into the X component
/// in left-to-right sequential order. Checked on the tree structure, so any
/// emission order of independent subtrees is accepted.
inline bool check_prop2_structure(const ContractionPlan& plan, std::size_t d) {
    const std::size_t two_d = 2 * d;
    struct Comp {
        bool has_x = false;
        long lo = 0, hi = -1;  // consecutive core range, empty if lo > hi
        bool valid = true;
    };
    std::map<std::string, Comp> comps;
    comps["X"] = {true, 1, 0, true};
    for (std::size_t i = 1; i <= two_d; ++i)
        comps["G" + std::to_string(i)] = {false, static_cast<long>(i), static_cast<long>(i), true};

    for (const auto& st : plan.steps) {
        auto li = comps.find(st.left);
        auto ri = comps.find(st.right);
        if (li == comps.end() || ri == comps.end()) return false;
        Comp l = li->second, r = ri->second;
        if (!l.valid || !r.valid) return false;
        Comp merged;
        if (l.has_x || r.has_x) {
            const Comp& x = l.has_x ? l : r;
            const Comp& grp = l.has_x ? r : l;
            if (grp.has_x) return false;
            // sequential absorption: group must start right after current prefix
            const long expected_lo = x.hi + 1;
            if (grp.lo != expected_lo) return false;
            merged = {true, 1, grp.hi, true};
        } else {
            // core-core merge must join adjacent consecutive ranges
            if (l.hi + 1 == r.lo)
                merged = {false, l.lo, r.hi, true};
            else if (r.hi + 1 == l.lo)
                merged = {false, r.lo, l.hi, true};
            else
                return false;
        }
        comps.erase(st.left);
        comps.erase(st.right);
        comps[st.result] = merged;
    }
    // exactly one live component spanning everything
    if (comps.size() != 1) return false;
    const Comp& root = comps.begin()->second;
    return root.has_x && root.hi == static_cast<long>(two_d);
}

/// Geometry of a recognized TT forward network: batch size, mode dims in
/// chain order, the rank chain, and the node order (X first, then cores).
struct TTForwardShape {
    std::size_t d = 0;
    Shape dims;
    std::vector<std::size_t> ranks;
    std::size_t batch = 0;
};

/// Recognize an X + G_1..G_{2d} forward network structurally: a unique batch
/// index shared by one node and the output, a chain of cores linked by bond
/// indices, input modes on X and output modes on the output subscript.
inline std::optional<TTForwardShape> detect_tt_forward(const TensorNetworkSpec& spec) {
    spec.validate();
    const std::size_t n = spec.nodes.size();
    if (n < 3 || n % 2 == 0) return std::nullopt;

    auto count_nodes_with = [&](char c) {
        std::size_t k = 0;
        for (const auto& nd : spec.nodes)
            if (nd.subscript.find(c) != std::string::npos) ++k;
        return k;
    };

    // the batch index lives on exactly one node and in the output
    char batch = 0;
    for (char c : spec.output)
        if (count_nodes_with(c) == 1) {
            if (batch) return std::nullopt;
            batch = c;
        }
    if (!batch) return std::nullopt;
    std::size_t x_idx = n;
    for (std::size_t i = 0; i < n; ++i)
        if (spec.nodes[i].subscript.find(batch) != std::string::npos) x_idx = i;
    const std::string& xsub = spec.nodes[x_idx].subscript;
    if (xsub.empty() || xsub[0] != batch) return std::nullopt;
    const std::size_t d = xsub.size() - 1;
    if (n != 2 * d + 1) return std::nullopt;

    // walk the core chain starting from the core holding X's first mode
    std::vector<std::size_t> order;
    std::vector<bool> used(n, false);
    used[x_idx] = true;
    char next_bond = 0;
    {
        const char m1 = xsub[1];
        std::size_t g1 = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (i == x_idx) continue;
            const auto& s = spec.nodes[i].subscript;
            if (s.find(m1) != std::string::npos) {
                if (g1 != n) return std::nullopt;  // mode must be unique to one core
                g1 = i;
            }
        }
        if (g1 == n) return std::nullopt;
        const auto& s = spec.nodes[g1].subscript;
        if (s.size() != 2 || s[0] != m1) return std::nullopt;
        next_bond = s[1];
        order.push_back(g1);
        used[g1] = true;
    }
    TTForwardShape shape;
    shape.d = d;
    shape.batch = spec.sizes.at(batch);
    shape.dims.push_back(spec.sizes.at(xsub[1]));
    shape.ranks.push_back(1);
    while (order.size() < 2 * d) {
        std::size_t nxt = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i] || i == x_idx) continue;
            const auto& s = spec.nodes[i].subscript;
            if (!s.empty() && s[0] == next_bond) {
                if (nxt != n) return std::nullopt;
                nxt = i;
            }
        }
        if (nxt == n) return std::nullopt;
        const auto& s = spec.nodes[nxt].subscript;
        const bool last = order.size() + 1 == 2 * d;
        if (s.size() != (last ? 2u : 3u)) return std::nullopt;
        shape.ranks.push_back(spec.sizes.at(next_bond));
        shape.dims.push_back(spec.sizes.at(s[1]));
        if (!last) next_bond = s[2];
        order.push_back(nxt);
        used[nxt] = true;
    }
    shape.ranks.push_back(1);

    // input modes must match X, output modes the output subscript, in order
    for (std::size_t i = 0; i < d; ++i)
        if (spec.nodes[order[i]].subscript[spec.nodes[order[i]].subscript.size() == 2 ? 0 : 1] !=
            xsub[1 + i])
            return std::nullopt;
    if (spec.output.size() != d + 1) return std::nullopt;
    for (std::size_t i = 0; i < d; ++i) {
        const auto& s = spec.nodes[order[d + i]].subscript;
        const char mode = s.size() == 2 ? (i + 1 == d ? s[1] : s[0]) : s[1];
        if (mode != spec.output[1 + i]) return std::nullopt;
    }
    return shape;
}

/// Execute a plan through the einsum kernel. Tensors are looked up by node
/// name; intermediate results are stored under their step result names. The
/// instrumented multiply-add count of the execution equals the plan's
/// total_cost exactly.
inline DenseTensor execute_plan(const TensorNetworkSpec& spec,
                                const std::map<std::string, DenseTensor>& tensors,
                                const ContractionPlan& plan) {
    std::map<std::string, std::pair<std::string, DenseTensor>> live;  // name -> (subscript, value)
    for (const auto& nd : spec.nodes) {
        auto it = tensors.find(nd.name);
        if (it == tensors.end()) throw ShapeError("execute_plan: missing tensor " + nd.name);
        live[nd.name] = {nd.subscript, it->second};
    }
    if (plan.steps.empty()) {
        if (live.size() != 1) throw ShapeError("execute_plan: empty plan on multi-node network");
        return live.begin()->second.second;
    }
    DenseTensor result;
    for (const auto& st : plan.steps) {
        const auto& [lsub, lval] = live.at(st.left);
        const auto& [rsub, rval] = live.at(st.right);
        EinsumExpr expr{{lsub, rsub}, st.result_subscript};
        std::vector<DenseTensor> ops{lval, rval};
        result = einsum(expr, std::span<const DenseTensor>(ops));
        live[st.result] = {st.result_subscript, result};
    }
    return result;
}

}  // namespace tnt
