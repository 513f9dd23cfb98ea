// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnt/model.hpp"
#include "tnt/rng.hpp"
#include "tnt/tensor.hpp"
#include "tnt/tt.hpp"

namespace tnt {

struct Dataset {
    DenseTensor x;                  // (n, dim) when dense-featured
    std::vector<std::int64_t> ids;  // (n) when id-driven
    DenseTensor y;
    std::vector<int> labels;

    std::size_t size() const { return ids.empty() ? x.dim(0) : ids.size(); }

    Batch gather(const std::vector<std::size_t>& idx) const {
        Batch b;
        if (x.size() > 1 && x.ndim() == 2) {
            const std::size_t k = x.dim(1);
            b.x = DenseTensor({idx.size(), k});
            for (std::size_t i = 0; i < idx.size(); ++i)
                std::copy_n(x.data() + idx[i] * k, k, b.x.data() + i * k);
        }
        if (!ids.empty()) {
            b.ids.reserve(idx.size());
            for (std::size_t i : idx) b.ids.push_back(ids[i]);
        }
        if (y.ndim() == 2) {
            const std::size_t k = y.dim(1);
            b.y = DenseTensor({idx.size(), k});
            for (std::size_t i = 0; i < idx.size(); ++i)
                std::copy_n(y.data() + idx[i] * k, k, b.y.data() + i * k);
        }
        if (!labels.empty()) {
            b.labels.reserve(idx.size());
            for (std::size_t i : idx) b.labels.push_back(labels[i]);
        }
        return b;
    }

    Batch all() const {
        std::vector<std::size_t> idx(size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        return gather(idx);
    }
};

/// Regression pairs generated by a planted low-rank TT weight plus Gaussian
/// observation noise. The generating model's own test error is sigma^2 per
/// element, the floor any learned model is judged against.
struct PlantedRegression {
    Dataset train, test;
    TTTensor generator;        // the planted TT weight itself
    DenseTensor dense_weight;  // its (N1, N2) unfolding
    double oracle_mse = 0.0;
};

inline PlantedRegression make_planted_tt_regression(std::uint64_t seed, std::size_t n_train,
                                                    std::size_t n_test, const Shape& in_modes,
                                                    const Shape& out_modes,
                                                    std::size_t planted_rank,
                                                    double noise_sigma) {
    Rng rng = Rng(seed).split("planted-task");
    Shape dims = in_modes;
    dims.insert(dims.end(), out_modes.begin(), out_modes.end());
    std::vector<std::size_t> ranks(dims.size() + 1, planted_rank);
    ranks.front() = ranks.back() = 1;
    std::size_t n_in = 1, n_out = 1;
    for (std::size_t m : in_modes) n_in *= m;
    for (std::size_t m : out_modes) n_out *= m;
    TTTensor w = init_tt(dims, ranks, rng.split("weight"), 2.0 / static_cast<double>(n_in));

    PlantedRegression out;
    out.generator = w;
    out.dense_weight = reshape(tt_reconstruct(w), {n_in, n_out});
    out.oracle_mse = noise_sigma * noise_sigma;

    auto fill = [&](Dataset& ds, std::size_t n, Rng r) {
        ds.x = DenseTensor({n, n_in});
        for (auto& v : ds.x.values()) v = r.normal();
        ds.y = einsum("bn,nm->bm", {ds.x, out.dense_weight});
        for (auto& v : ds.y.values()) v += noise_sigma * r.normal();
    };
    fill(out.train, n_train, rng.split("train"));
    fill(out.test, n_test, rng.split("test"));
    return out;
}

/// K-class Gaussian mixture in `dim` dimensions; labels are the component
/// indices. Means are spread enough to be separable but not trivially so.
struct MixtureTask {
    Dataset train, test;
    std::size_t classes = 0;
    std::size_t dim = 0;
};

inline MixtureTask make_gaussian_mixture_classification(std::uint64_t seed, std::size_t n_train,
                                                        std::size_t n_test, std::size_t dim,
                                                        std::size_t classes,
                                                        double spread = 2.0) {
    Rng rng = Rng(seed).split("gmm-task");
    std::vector<double> means(classes * dim);
    Rng mr = rng.split("means");
    for (auto& v : means) v = spread * mr.normal();

    MixtureTask out;
    out.classes = classes;
    out.dim = dim;
    auto fill = [&](Dataset& ds, std::size_t n, Rng r) {
        ds.x = DenseTensor({n, dim});
        ds.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const int c = static_cast<int>(r.uniform_index(classes));
            ds.labels[i] = c;
            for (std::size_t k = 0; k < dim; ++k)
                ds.x[i * dim + k] = means[static_cast<std::size_t>(c) * dim + k] + r.normal();
        }
    };
    fill(out.train, n_train, rng.split("train"));
    fill(out.test, n_test, rng.split("test"));
    return out;
}

/// Synthetic click-through task: each row id carries a planted low-rank
/// embedding; click probability is a logistic read-out of it. Ids are drawn
/// with replacement so realistic batches contain duplicates.
struct RecommenderTask {
    Dataset train, test;
    std::size_t vocab = 0;
    std::size_t width = 0;
};

inline RecommenderTask make_toy_recommender(std::uint64_t seed, std::size_t n_train,
                                            std::size_t n_test, const Shape& row_factors,
                                            const Shape& col_factors) {
    Rng rng = Rng(seed).split("rec-task");
    std::vector<std::size_t> ranks(row_factors.size() + 1, 2);
    ranks.front() = ranks.back() = 1;
    TTMTensor table = init_ttm(row_factors, col_factors, ranks, rng.split("table"), 1.0);
    DenseTensor dense = ttm_unfold_matrix(table);
    const std::size_t vocab = dense.dim(0), width = dense.dim(1);

    std::vector<double> readout(width);
    Rng rr = rng.split("readout");
    for (auto& v : readout) v = rr.normal() / std::sqrt(static_cast<double>(width));

    RecommenderTask out;
    out.vocab = vocab;
    out.width = width;
    auto fill = [&](Dataset& ds, std::size_t n, Rng r) {
        ds.ids.resize(n);
        ds.y = DenseTensor({n, 1});
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t id = r.uniform_index(vocab);
            ds.ids[i] = static_cast<std::int64_t>(id);
            double s = 0.0;
            for (std::size_t k = 0; k < width; ++k) s += dense[id * width + k] * readout[k];
            const double p = 1.0 / (1.0 + std::exp(-2.0 * s));
            ds.y[i] = r.uniform() < p ? 1.0 : 0.0;
        }
    };
    fill(out.train, n_train, rng.split("train"));
    fill(out.test, n_test, rng.split("test"));
    return out;
}

}  // namespace tnt
