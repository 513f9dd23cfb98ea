// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>

#include "tnt/tt.hpp"

namespace tnt {

/// TT-SVD of a dense tensor: successive thin SVDs on the left unfoldings.
/// Bond i keeps at most max_ranks[i] singular values and drops those below
/// rel_tol times the largest. With non-truncating ranks the reconstruction
/// matches the input to SVD accuracy. Intended for tests and for building
/// exact factorizations of known matrices; training starts from random cores.
inline TTTensor tt_svd_from_dense(const DenseTensor& dense,
                                  const std::vector<std::size_t>& max_ranks,
                                  double rel_tol = 1e-12) {
    const Shape dims = dense.shape();
    const std::size_t d = dims.size();
    if (d == 0) throw ShapeError("tt_svd_from_dense: scalar input");
    if (max_ranks.size() != d - 1)
        throw ShapeError("tt_svd_from_dense: need d-1 bond rank caps");

    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    TTTensor t;
    std::size_t rest = dense.size() / dims[0];
    Mat m = Eigen::Map<const Mat>(dense.data(), dims[0], rest);
    std::size_t r_prev = 1;
    for (std::size_t i = 0; i + 1 < d; ++i) {
        Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        std::size_t r = 0;
        const double cutoff = sv.size() ? sv(0) * rel_tol : 0.0;
        for (Eigen::Index k = 0; k < sv.size(); ++k)
            if (sv(k) > cutoff) ++r;
        r = std::max<std::size_t>(1, std::min(r, max_ranks[i]));

        Mat u = svd.matrixU().leftCols(r);
        DenseTensor core({r_prev, dims[i], r});
        for (std::size_t a = 0; a < r_prev * dims[i]; ++a)
            for (std::size_t b = 0; b < r; ++b) core[a * r + b] = u(a, b);
        t.cores.push_back(std::move(core));
        t.diag_controls.emplace_back(r, 1.0);

        Mat rest_m = sv.head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose();
        rest /= dims[i + 1];
        m = Eigen::Map<const Mat>(rest_m.data(), r * dims[i + 1], rest);
        r_prev = r;
    }
    // after the loop m holds the last core's data flat (r_prev * n_d elements)
    DenseTensor last({r_prev, dims[d - 1], 1});
    const double* p = m.data();
    for (std::size_t k = 0; k < r_prev * dims[d - 1]; ++k) last[k] = p[k];
    t.cores.push_back(std::move(last));
    t.validate();
    return t;
}

}  // namespace tnt
