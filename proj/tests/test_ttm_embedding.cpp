// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "tnt/rng.hpp"
#include "tnt/ttm_embedding.hpp"

using namespace tnt;

namespace {

TTMEmbedding random_embedding(const Shape& rows, const Shape& cols, std::size_t rank,
                              std::uint64_t seed, bool random_diags = false) {
    TTMEmbedding emb = TTMEmbedding::create(rows, cols, rank, Rng(seed), 1.0);
    if (random_diags) {
        Rng rng(seed + 1);
        for (auto& d : emb.table().diag_controls)
            for (auto& v : d) v = 0.5 + rng.uniform();
        emb.mark_params_changed();
    }
    return emb;
}

std::vector<std::int64_t> random_ids(std::size_t n, std::size_t vocab, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::int64_t> out(n);
    for (auto& v : out) v = static_cast<std::int64_t>(rng.uniform_index(vocab));
    return out;
}

}  // namespace

TEST(TTMGroups, D2SplitOneGivesTheCoresThemselves) {
    TTMEmbedding emb(init_ttm({3, 4}, {2, 2}, {1, 3, 1}, Rng(1), 1.0), 1);
    emb.precompute_groups();
    DenseTensor a1 = emb.group_a1();  // (3, 2, 3) = core0 reshaped
    const auto& g1 = emb.table().cores[0];
    for (std::size_t m = 0; m < 3; ++m)
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t r = 0; r < 3; ++r)
                EXPECT_DOUBLE_EQ(a1.at({m, n, r}), g1.at({0, m, n, r}));
}

TEST(TTMGroups, ContractingGroupsEqualsReconstruction) {
    TTMEmbedding emb = random_embedding({2, 3, 2, 2}, {2, 2, 2, 2}, 3, 7, true);
    emb.precompute_groups();
    DenseTensor a1 = emb.group_a1();
    DenseTensor a2 = emb.group_a2();
    DenseTensor m = einsum("Mnr,rNm->MNnm", {a1, a2});  // (M1, M2, NL, NR)
    DenseTensor dense = emb.dense_table();
    for (std::size_t i = 0; i < emb.vocab_size(); ++i) {
        const std::size_t j1 = i / a2.dim(1), j2 = i % a2.dim(1);
        for (std::size_t k = 0; k < emb.width(); ++k) {
            const std::size_t nl = k / a2.dim(2), nr = k % a2.dim(2);
            EXPECT_NEAR(m.at({j1, j2, nl, nr}), dense[i * emb.width() + k],
                        1e-12 * (std::abs(dense[i * emb.width() + k]) + 1));
        }
    }
}

TEST(TTMGroups, RankOneGroupsAreOuterProducts) {
    TTMEmbedding emb(init_ttm({2, 3}, {2, 2}, {1, 1, 1}, Rng(9), 1.0), 1);
    emb.precompute_groups();
    DenseTensor a1 = emb.group_a1();  // (2, 2, 1)
    const auto& g1 = emb.table().cores[0];
    for (std::size_t m = 0; m < 2; ++m)
        for (std::size_t n = 0; n < 2; ++n)
            EXPECT_DOUBLE_EQ(a1.at({m, n, 0}), g1.at({0, m, n, 0}));
}

TEST(TTMPlan, DuplicatesCollapse) {
    TTMEmbedding emb = random_embedding({3, 4}, {2, 2}, 2, 11);
    LookupPlan plan = emb.build_plan({5, 5, 5});
    EXPECT_EQ(plan.unique_rows, (std::vector<std::int64_t>{5}));
    EXPECT_EQ(plan.inverse_map, (std::vector<std::size_t>{0, 0, 0}));
}

TEST(TTMPlan, PairCoordinatesViaMixedRadix) {
    // vocabulary 12 = 3*4, index 7 -> (1, 3)
    TTMEmbedding emb = random_embedding({3, 4}, {2, 2}, 2, 13);
    LookupPlan plan = emb.build_plan({7});
    EXPECT_EQ(plan.j1, (std::vector<std::size_t>{1}));
    EXPECT_EQ(plan.j2, (std::vector<std::size_t>{3}));
}

TEST(TTMPlan, AllDistinctKeepsBatchSize) {
    TTMEmbedding emb = random_embedding({3, 4}, {2, 2}, 2, 15);
    LookupPlan plan = emb.build_plan({0, 3, 7, 11, 4});
    EXPECT_EQ(plan.unique_rows.size(), 5u);
    // inverse map is a bijection onto batch positions here
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(plan.inverse_map[i], i);
}

TEST(TTMPlan, OutOfRangeId) {
    TTMEmbedding emb = random_embedding({3, 4}, {2, 2}, 2, 17);
    EXPECT_THROW(emb.build_plan({12}), ShapeError);
    EXPECT_THROW(emb.build_plan({-1}), ShapeError);
}

TEST(TTMLookup, MatchesDenseGatherOracle) {
    TTMEmbedding emb = random_embedding({6, 4}, {2, 2}, 3, 19, true);
    DenseTensor dense = emb.dense_table();
    auto ids = random_ids(20, emb.vocab_size(), 21);
    ids[3] = ids[0];  // force duplicates
    ids[9] = ids[0];
    ids[14] = ids[7];
    DenseTensor out = emb.lookup(ids);
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t k = 0; k < emb.width(); ++k)
            EXPECT_NEAR(out[i * emb.width() + k],
                        dense[static_cast<std::size_t>(ids[i]) * emb.width() + k],
                        1e-11 * (std::abs(dense[static_cast<std::size_t>(ids[i]) * emb.width() + k]) + 1));
}

TEST(TTMLookup, SingleIndexZeroIsRowZero) {
    TTMEmbedding emb = random_embedding({4, 4}, {2, 2}, 2, 23);
    DenseTensor dense = emb.dense_table();
    DenseTensor out = emb.lookup({0});
    for (std::size_t k = 0; k < emb.width(); ++k)
        EXPECT_NEAR(out[k], dense[k], 1e-12 * (std::abs(dense[k]) + 1));
}

TEST(TTMLookup, RowOfUnfoldedMatrixEqualsLookup) {
    // cross-module oracle from the factorized-format side
    TTMEmbedding emb = random_embedding({2, 3, 2}, {2, 2, 2}, 3, 25, true);
    DenseTensor dense = ttm_unfold_matrix(emb.table(), true);
    for (std::int64_t i : {0, 5, 11}) {
        DenseTensor row = emb.lookup({i});
        for (std::size_t k = 0; k < emb.width(); ++k)
            EXPECT_NEAR(row[k], dense[static_cast<std::size_t>(i) * emb.width() + k],
                        1e-11 * (std::abs(row[k]) + 1));
    }
}

TEST(TTMLookup, DedupSavesAtLeastTwofoldOnHeavyDuplicates) {
    TTMEmbedding emb = random_embedding({4, 5, 4}, {2, 2, 2}, 3, 27);
    emb.precompute_groups();

    // 100 draws from 10 ids
    Rng rng(29);
    std::vector<std::int64_t> pool;
    for (int i = 0; i < 10; ++i)
        pool.push_back(static_cast<std::int64_t>(rng.uniform_index(emb.vocab_size())));
    std::vector<std::int64_t> ids(100);
    for (auto& v : ids) v = pool[rng.uniform_index(pool.size())];

    reset_flop_counter();
    emb.lookup(ids);
    const std::uint64_t dedup = flop_counter();
    reset_flop_counter();
    emb.naive_lookup(ids);
    const std::uint64_t naive = flop_counter();
    EXPECT_GE(naive, 2 * dedup);
}

TEST(TTMLookup, DedupTransparencyAndCostMonotonicity) {
    TTMEmbedding emb = random_embedding({4, 4}, {2, 3}, 3, 31, true);
    emb.precompute_groups();
    for (int trial = 0; trial < 20; ++trial) {
        auto ids = random_ids(12, emb.vocab_size(), 100 + trial);
        reset_flop_counter();
        DenseTensor a = emb.lookup(ids);
        const std::uint64_t dedup_cost = flop_counter();
        reset_flop_counter();
        DenseTensor b = emb.naive_lookup(ids);
        const std::uint64_t naive_cost = flop_counter();
        EXPECT_LT(max_rel_diff(a, b), 1e-10);
        EXPECT_LE(dedup_cost, naive_cost);
        bool all_unique = true;
        for (std::size_t i = 0; i < ids.size() && all_unique; ++i)
            for (std::size_t j = i + 1; j < ids.size(); ++j)
                if (ids[i] == ids[j]) {
                    all_unique = false;
                    break;
                }
        if (dedup_cost == naive_cost) EXPECT_TRUE(all_unique);
    }
}

TEST(TTMBackward, FiniteDifferences) {
    TTMEmbedding emb = random_embedding({4, 4}, {2, 2}, 2, 33, true);
    auto ids = random_ids(7, emb.vocab_size(), 35);
    ids[2] = ids[0];
    ids[5] = ids[0];

    Rng rng(37);
    DenseTensor g_out({ids.size(), emb.width()});
    for (auto& v : g_out.values()) v = rng.normal();

    auto g = emb.backward(ids, g_out);

    auto probe = [&]() {
        emb.mark_params_changed();
        DenseTensor out = emb.lookup(ids);
        double acc = 0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * g_out[i];
        return acc;
    };
    const double h = 1e-5;
    Rng pick(39);
    auto& t = emb.table();
    for (std::size_t i = 0; i < t.cores.size(); ++i) {
        for (int pn = 0; pn < 4; ++pn) {
            const std::size_t k = pick.uniform_index(t.cores[i].size());
            const double save = t.cores[i][k];
            t.cores[i][k] = save + h;
            const double up = probe();
            t.cores[i][k] = save - h;
            const double dn = probe();
            t.cores[i][k] = save;
            emb.mark_params_changed();
            const double fd = (up - dn) / (2 * h);
            EXPECT_NEAR(g.g_cores[i][k], fd,
                        std::max(1e-5, 1e-4 * std::abs(fd)))
                << "core " << i << "[" << k << "]";
        }
    }
    for (std::size_t j = 0; j < t.diag_controls.size(); ++j) {
        for (int pn = 0; pn < 2; ++pn) {
            const std::size_t k = pick.uniform_index(t.diag_controls[j].size());
            const double save = t.diag_controls[j][k];
            t.diag_controls[j][k] = save + h;
            const double up = probe();
            t.diag_controls[j][k] = save - h;
            const double dn = probe();
            t.diag_controls[j][k] = save;
            emb.mark_params_changed();
            const double fd = (up - dn) / (2 * h);
            EXPECT_NEAR(g.g_diags[j][k], fd, std::max(1e-5, 1e-4 * std::abs(fd)))
                << "diag " << j << "[" << k << "]";
        }
    }
}

TEST(TTMBackward, ZeroUpstreamGivesZeroGradients) {
    TTMEmbedding emb = random_embedding({4, 4}, {2, 2}, 2, 41);
    auto g = emb.backward({1, 2, 3}, DenseTensor({3, emb.width()}));
    for (const auto& c : g.g_cores)
        for (double v : c.values()) EXPECT_EQ(v, 0.0);
}

TEST(TTMBackward, DuplicateIdsAccumulate) {
    TTMEmbedding emb = random_embedding({4, 4}, {2, 2}, 2, 43);
    Rng rng(45);
    DenseTensor row({1, emb.width()});
    for (auto& v : row.values()) v = rng.normal();
    DenseTensor two({2, emb.width()});
    std::copy_n(row.data(), emb.width(), two.data());
    std::copy_n(row.data(), emb.width(), two.data() + emb.width());

    auto g1 = emb.backward({3}, row);
    auto g2 = emb.backward({3, 3}, two);
    for (std::size_t i = 0; i < g1.g_cores.size(); ++i)
        for (std::size_t k = 0; k < g1.g_cores[i].size(); ++k)
            EXPECT_NEAR(g2.g_cores[i][k], 2.0 * g1.g_cores[i][k],
                        1e-12 * (std::abs(g1.g_cores[i][k]) + 1));
}

TEST(TTMBackward, DotProductConsistency) {
    // directional derivative along a random core direction equals the inner
    // product of the returned gradients with that direction
    TTMEmbedding emb = random_embedding({3, 4}, {2, 2}, 3, 47, true);
    auto ids = random_ids(9, emb.vocab_size(), 49);
    Rng rng(51);
    DenseTensor g_out({ids.size(), emb.width()});
    for (auto& v : g_out.values()) v = rng.normal();
    auto g = emb.backward(ids, g_out);

    auto& t = emb.table();
    std::vector<DenseTensor> direction;
    for (const auto& c : t.cores) {
        DenseTensor d(c.shape());
        for (auto& v : d.values()) v = rng.normal();
        direction.push_back(std::move(d));
    }
    double analytic = 0;
    for (std::size_t i = 0; i < direction.size(); ++i)
        for (std::size_t k = 0; k < direction[i].size(); ++k)
            analytic += g.g_cores[i][k] * direction[i][k];

    const double h = 1e-6;
    auto shifted = [&](double sign) {
        for (std::size_t i = 0; i < direction.size(); ++i)
            for (std::size_t k = 0; k < direction[i].size(); ++k)
                t.cores[i][k] += sign * h * direction[i][k];
        emb.mark_params_changed();
        DenseTensor out = emb.lookup(ids);
        double acc = 0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * g_out[i];
        return acc;
    };
    const double up = shifted(+1.0);
    const double dn = shifted(-2.0);  // net -h from +h
    shifted(+1.0);                    // restore
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(analytic, fd, std::max(1e-6, 1e-5 * std::abs(fd)));
}

TEST(TTMSplit, BalancesGroupSizes) {
    // strongly unbalanced factors: the split should not sit at the extremes
    TTMTensor t = init_ttm({10, 10, 10, 2}, {2, 2, 2, 2}, {1, 4, 4, 4, 1}, Rng(53), 1.0);
    const std::size_t g = TTMEmbedding::choose_split(t);
    EXPECT_GE(g, 1u);
    EXPECT_LE(g, 3u);
    TTMEmbedding emb(std::move(t), g);
    EXPECT_EQ(emb.vocab_size(), 2000u);
}
