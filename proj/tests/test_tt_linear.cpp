// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "tnt/rng.hpp"
#include "tnt/tt_linear.hpp"
#include "tnt/tt_svd.hpp"

using namespace tnt;

namespace {

DenseTensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    DenseTensor x({rows, cols});
    for (auto& v : x.values()) v = rng.normal();
    return x;
}

// scalar probe L = <forward(X), R>; gradients checked against central
// differences of the probe
double probe(TTLinearLayer& layer, const DenseTensor& x, const DenseTensor& r) {
    DenseTensor y = layer.forward(x, false);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * r[i];
    return acc;
}

void expect_close(double got, double want, double abs_tol, double rel_tol,
                  const std::string& what) {
    const double err = std::abs(got - want);
    const double rel = err / std::max(std::abs(want), 1e-30);
    EXPECT_TRUE(err <= abs_tol || rel <= rel_tol)
        << what << ": got " << got << " want " << want << " abs " << err << " rel " << rel;
}

}  // namespace

TEST(TTLinearCaches, D1PrefixIsTheCoreItself) {
    Rng rng(1);
    TTLinearLayer layer = TTLinearLayer::create({6}, {5}, 3, rng);
    layer.build_prefix_products();
    ASSERT_EQ(layer.input_prefixes().size(), 1u);
    EXPECT_EQ(layer.input_prefixes()[0].values(), layer.weight().cores[0].values());
}

TEST(TTLinearCaches, PrefixMatchesDirectSummation) {
    Rng rng(2);
    TTLinearLayer layer = TTLinearLayer::create({3, 4}, {4, 3}, 3, rng);
    // non-trivial diagonals
    auto& w = layer.weight();
    Rng drng(3);
    for (auto& d : w.diag_controls)
        for (auto& v : d) v = 0.5 + drng.uniform();
    layer.mark_params_changed();
    layer.build_prefix_products();

    // direct Eq.-style oracle: A2[n1,n2,r2] = sum_r1 G1[1,n1,r1] D1[r1] G2[r1,n2,r2]
    const auto& g1 = w.cores[0];
    const auto& g2 = w.cores[1];
    const auto& d1 = w.diag_controls[0];
    const DenseTensor a2 = layer.input_prefixes()[1];  // (1, 12, r2)
    for (std::size_t n1 = 0; n1 < 3; ++n1)
        for (std::size_t n2 = 0; n2 < 4; ++n2)
            for (std::size_t r2 = 0; r2 < 3; ++r2) {
                double acc = 0;
                for (std::size_t r1 = 0; r1 < 3; ++r1)
                    acc += g1.at({0, n1, r1}) * d1[r1] * g2.at({r1, n2, r2});
                EXPECT_NEAR(a2.at({0, n1 * 4 + n2, r2}), acc, 1e-12 * (std::abs(acc) + 1));
            }
}

TEST(TTLinearCaches, AdTimesBdEqualsFullReconstruction) {
    Rng rng(4);
    TTLinearLayer layer = TTLinearLayer::create({4, 4}, {4, 4}, 3, rng);
    layer.build_prefix_products();
    const std::size_t r = layer.weight().cores[1].dim(2);
    DenseTensor a_d = reshape(layer.input_prefixes().back(), {16, r});
    DenseTensor b_d = reshape(layer.output_prefixes().back(), {r, 16});
    DenseTensor w1 = einsum("nr,rm->nm", {a_d, b_d});
    DenseTensor w2 = layer.dense_weight();
    EXPECT_LT(max_rel_diff(w1, w2), 1e-12);
}

TEST(TTLinearForward, IdentityWeightReturnsInput) {
    DenseTensor eye = DenseTensor::identity(16);
    TTTensor w = tt_svd_from_dense(reshape(eye, {4, 4, 4, 4}), {16, 16, 16});
    TTLinearLayer layer(std::move(w), 2);
    Rng rng(5);
    DenseTensor x = random_matrix(6, 16, rng);
    DenseTensor y = layer.forward(x, false);
    EXPECT_LT(max_abs_diff(y, x), 1e-10);
}

TEST(TTLinearForward, MatchesDenseMatmulOracle) {
    Rng rng(6);
    TTLinearLayer layer = TTLinearLayer::create({4, 4}, {4, 4}, 4, rng);
    auto& w = layer.weight();
    Rng drng(7);
    for (auto& d : w.diag_controls)
        for (auto& v : d) v = 0.25 + drng.uniform();
    layer.mark_params_changed();
    DenseTensor x = random_matrix(4, 16, rng);
    DenseTensor y = layer.forward(x, false);
    DenseTensor dense = layer.dense_weight();
    DenseTensor oracle = einsum("bn,nm->bm", {x, dense});
    EXPECT_LT(max_rel_diff(y, oracle), 1e-10);
}

TEST(TTLinearForward, ZeroInputGivesZeroOutput) {
    Rng rng(8);
    TTLinearLayer layer = TTLinearLayer::create({2, 8}, {4, 4}, 3, rng);
    DenseTensor x({5, 16});
    DenseTensor y = layer.forward(x, false);
    for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(TTLinearForward, Linearity) {
    Rng rng(9);
    TTLinearLayer layer = TTLinearLayer::create({4, 4}, {2, 8}, 3, rng);
    DenseTensor x1 = random_matrix(3, 16, rng);
    DenseTensor x2 = random_matrix(3, 16, rng);
    const double a = 1.25, b = -0.5;
    DenseTensor mix({3, 16});
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x1[i] + b * x2[i];
    DenseTensor lhs = layer.forward(mix, false);
    DenseTensor y1 = layer.forward(x1, false);
    DenseTensor y2 = layer.forward(x2, false);
    for (std::size_t i = 0; i < lhs.size(); ++i)
        EXPECT_NEAR(lhs[i], a * y1[i] + b * y2[i], 1e-11 * (std::abs(lhs[i]) + 1));
}

TEST(TTLinearBackward, FiniteDifferenceAllParameters) {
    Rng rng(10);
    TTTensor w = init_tt({4, 4, 4, 4}, {1, 3, 4, 3, 1}, rng.split("w"), 2.0 / 16.0);
    Rng drng(11);
    for (auto& d : w.diag_controls)
        for (auto& v : d) v = 0.5 + drng.uniform();
    TTLinearLayer layer(std::move(w), 2);

    DenseTensor x = random_matrix(3, 16, rng);
    DenseTensor r = random_matrix(3, 16, rng);  // fixed probe direction

    layer.forward(x, true);
    TTLinearGrads g = layer.backward(r);

    const double h = 1e-5;
    auto fd_check = [&](double* slot, double analytic, const std::string& what) {
        const double save = *slot;
        *slot = save + h;
        layer.mark_params_changed();
        const double up = probe(layer, x, r);
        *slot = save - h;
        layer.mark_params_changed();
        const double dn = probe(layer, x, r);
        *slot = save;
        layer.mark_params_changed();
        expect_close(analytic, (up - dn) / (2 * h), 1e-5, 1e-4, what);
    };

    auto& weight = layer.weight();
    Rng pick(12);
    for (std::size_t i = 0; i < weight.cores.size(); ++i) {
        for (int probe_n = 0; probe_n < 4; ++probe_n) {
            const std::size_t k = pick.uniform_index(weight.cores[i].size());
            fd_check(&weight.cores[i][k], g.g_cores[i][k],
                     "core " + std::to_string(i) + "[" + std::to_string(k) + "]");
        }
    }
    for (std::size_t j = 0; j < weight.diag_controls.size(); ++j) {
        for (int probe_n = 0; probe_n < 2; ++probe_n) {
            const std::size_t k = pick.uniform_index(weight.diag_controls[j].size());
            fd_check(&weight.diag_controls[j][k], g.g_diags[j][k],
                     "diag " + std::to_string(j) + "[" + std::to_string(k) + "]");
        }
    }
    for (int probe_n = 0; probe_n < 3; ++probe_n) {
        const std::size_t k = pick.uniform_index(layer.bias().size());
        fd_check(&layer.bias()[k], g.g_bias[k], "bias[" + std::to_string(k) + "]");
    }

    // input gradient against finite differences in x
    layer.forward(x, true);
    for (int probe_n = 0; probe_n < 5; ++probe_n) {
        const std::size_t k = pick.uniform_index(x.size());
        DenseTensor xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        const double up = probe(layer, xp, r);
        const double dn = probe(layer, xm, r);
        expect_close(g.g_input[k], (up - dn) / (2 * h), 1e-5, 1e-4,
                     "g_x[" + std::to_string(k) + "]");
    }
}

TEST(TTLinearBackward, ZeroUpstreamGivesZeroGradients) {
    Rng rng(13);
    TTLinearLayer layer = TTLinearLayer::create({4, 4}, {4, 4}, 3, rng);
    DenseTensor x = random_matrix(2, 16, rng);
    layer.forward(x, true);
    TTLinearGrads g = layer.backward(DenseTensor({2, 16}));
    for (const auto& c : g.g_cores)
        for (double v : c.values()) EXPECT_EQ(v, 0.0);
    for (const auto& d : g.g_diags)
        for (double v : d) EXPECT_EQ(v, 0.0);
    for (double v : g.g_input.values()) EXPECT_EQ(v, 0.0);
}

TEST(TTLinearBackward, MatchesOneShotEinsumOracle) {
    // d=2, dims (3,4,4,3): the per-core gradient equals the single einsum
    // over X, gY and the other folded cores
    Rng rng(14);
    TTTensor w = init_tt({3, 4, 4, 3}, {1, 2, 3, 2, 1}, rng.split("w"), 2.0 / 12.0);
    Rng drng(15);
    for (auto& d : w.diag_controls)
        for (auto& v : d) v = 0.5 + drng.uniform();
    TTTensor folded = fold_diags(w);
    TTLinearLayer layer(w, 2);

    DenseTensor x = random_matrix(5, 12, rng);
    DenseTensor gy = random_matrix(5, 12, rng);
    layer.forward(x, true);
    TTLinearGrads g = layer.backward(gy);

    DenseTensor x4 = reshape(x, {5, 3, 4});
    DenseTensor gy4 = reshape(gy, {5, 4, 3});
    auto squeeze = [](const DenseTensor& c, bool left, bool right) {
        Shape s = c.shape();
        Shape out;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i == 0 && left) continue;
            if (i + 1 == s.size() && right) continue;
            out.push_back(s[i]);
        }
        return reshape(c, out);
    };
    const DenseTensor g1 = squeeze(folded.cores[0], true, false);   // (a, A)
    const DenseTensor g2 = folded.cores[1];                         // (A, b, B)
    const DenseTensor g3 = folded.cores[2];                         // (B, c, C)
    const DenseTensor g4 = squeeze(folded.cores[3], false, true);   // (C, d)

    // oracle for core 2 (0-indexed 1)
    DenseTensor o2 = einsum("zab,zcd,aA,BcC,Cd->AbB", {x4, gy4, g1, g3, g4});
    DenseTensor got2 = g.g_cores[1];
    // unfold: layer gradient is diag-scaled; divide out the diagonal
    for (std::size_t a = 0; a < got2.dim(0); ++a)
        for (std::size_t k = 0; k < got2.dim(1) * got2.dim(2); ++k)
            got2[a * got2.dim(1) * got2.dim(2) + k] /= w.diag_controls[0][a];
    EXPECT_LT(max_rel_diff(got2, o2), 1e-9);

    // oracle for core 3 (0-indexed 2)
    DenseTensor o3 = einsum("zab,zcd,aA,AbB,Cd->BcC", {x4, gy4, g1, g2, g4});
    DenseTensor got3 = g.g_cores[2];
    for (std::size_t a = 0; a < got3.dim(0); ++a)
        for (std::size_t k = 0; k < got3.dim(1) * got3.dim(2); ++k)
            got3[a * got3.dim(1) * got3.dim(2) + k] /= w.diag_controls[1][a];
    EXPECT_LT(max_rel_diff(got3, o3), 1e-9);
}

TEST(TTLinearBackward, CacheUsesLatestForward) {
    Rng rng(16);
    TTLinearLayer layer = TTLinearLayer::create({4, 4}, {4, 4}, 3, rng);
    DenseTensor x1 = random_matrix(3, 16, rng);
    DenseTensor x2 = random_matrix(3, 16, rng);
    DenseTensor gy = random_matrix(3, 16, rng);

    layer.forward(x1, true);
    layer.forward(x2, true);
    EXPECT_EQ(layer.forward_stamp(), 2u);
    TTLinearGrads g = layer.backward(gy);

    // fresh layer, single forward with x2: gradients must agree exactly
    TTLinearLayer twin(layer.weight(), 2);
    twin.bias() = layer.bias();
    twin.forward(x2, true);
    TTLinearGrads want = twin.backward(gy);
    for (std::size_t i = 0; i < g.g_cores.size(); ++i)
        EXPECT_EQ(max_abs_diff(g.g_cores[i], want.g_cores[i]), 0.0);
    EXPECT_EQ(max_abs_diff(g.g_input, want.g_input), 0.0);
}

TEST(TTLinearBackward, RequiresForwardCache) {
    Rng rng(17);
    TTLinearLayer layer = TTLinearLayer::create({4}, {4}, 2, rng);
    EXPECT_THROW(layer.backward(DenseTensor({2, 4})), ShapeError);
}

TEST(TTLinearFlops, CountedFrozenValueAndZeroBatch) {
    Rng rng(18);
    TTLinearLayer layer = TTLinearLayer::create({4, 4}, {4, 4}, 3, rng);
    // 8*(16*3) + 8*(3*16) = 768
    EXPECT_EQ(layer.flop_estimate(8), 768u);
    EXPECT_EQ(layer.flop_estimate(0), 0u);
}

TEST(TTLinearFlops, EstimateMatchesInstrumentedExecution) {
    Rng rng(19);
    struct Case {
        Shape in, out;
        std::size_t rank, b;
    };
    const Case cases[] = {
        {{4, 4}, {4, 4}, 3, 8}, {{2, 8}, {4, 4}, 2, 5},   {{3, 3, 3}, {3, 3, 3}, 4, 7},
        {{6}, {8}, 3, 9},       {{2, 2, 4}, {4, 2, 2}, 5, 1},
    };
    for (const auto& c : cases) {
        TTLinearLayer layer = TTLinearLayer::create(c.in, c.out, c.rank, rng);
        DenseTensor x = random_matrix(c.b, layer.in_features(), rng);
        layer.build_prefix_products();
        reset_flop_counter();
        layer.forward(x, false);
        EXPECT_EQ(flop_counter(), layer.flop_estimate(c.b));
    }
}

TEST(TTLinearPrune, ZeroRankLayerStillRunsForwardBackward) {
    Rng rng(20);
    TTLinearLayer layer = TTLinearLayer::create({4, 4}, {4, 4}, 3, rng);
    auto& w = layer.weight();
    std::fill(w.diag_controls[1].begin(), w.diag_controls[1].end(), 0.0);
    auto res = layer.prune_weight({0.0, 0.0, 0.0});
    EXPECT_TRUE(res.removable);
    DenseTensor x = random_matrix(3, 16, rng);
    DenseTensor y = layer.forward(x, true);
    for (double v : y.values()) EXPECT_EQ(v, 0.0);
    TTLinearGrads g = layer.backward(DenseTensor::filled({3, 16}, 1.0));
    for (double v : g.g_input.values()) EXPECT_EQ(v, 0.0);
}
