// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tnt/errors.hpp"

namespace tnt {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

inline std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

/// Dense n-dimensional array of doubles, flat row-major storage.
///
/// An empty shape denotes a scalar (one element). Zero-sized dimensions are
/// permitted so that fully pruned tensor-train bonds (rank 0) remain
/// representable; such tensors hold no data and contract to zeros.
class DenseTensor {
  public:
    DenseTensor() : shape_(), data_(1, 0.0) {}

    explicit DenseTensor(Shape shape)
        : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

    DenseTensor(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_numel(shape_)) {
            throw ShapeError("data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_to_string(shape_));
        }
    }

    static DenseTensor scalar(double v) {
        DenseTensor t;
        t.data_[0] = v;
        return t;
    }

    static DenseTensor filled(Shape shape, double v) {
        DenseTensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    static DenseTensor identity(std::size_t n) {
        DenseTensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double operator[](std::size_t flat) const { return data_[flat]; }
    double& operator[](std::size_t flat) { return data_[flat]; }

    double at(std::initializer_list<std::size_t> idx) const {
        return data_[flat_index(idx)];
    }
    double& at(std::initializer_list<std::size_t> idx) {
        return data_[flat_index(idx)];
    }

  private:
    std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != shape_.size())
            throw ShapeError("index order mismatch for shape " + shape_to_string(shape_));
        std::size_t flat = 0;
        std::size_t axis = 0;
        for (std::size_t i : idx) {
            if (i >= shape_[axis])
                throw ShapeError("index out of range on axis " + std::to_string(axis));
            flat = flat * shape_[axis] + i;
            ++axis;
        }
        return flat;
    }

    Shape shape_;
    std::vector<double> data_;
};

/// Row-major strides; stride of the last axis is 1.
inline std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;)
        strides[i - 1] = strides[i] * shape[i];
    return strides;
}

/// Same flat data under a new shape; element counts must agree.
inline DenseTensor reshape(const DenseTensor& t, Shape new_shape) {
    if (shape_numel(new_shape) != t.size()) {
        throw ShapeError("reshape " + shape_to_string(t.shape()) + " -> " +
                         shape_to_string(new_shape) + " changes element count");
    }
    return DenseTensor(std::move(new_shape), t.values());
}

inline double frobenius_norm_sq(const DenseTensor& t) {
    double acc = 0.0;
    for (double v : t.values()) acc += v * v;
    return acc;
}

/// Decode a flat row-major index into a multi-index (big-endian:
/// flat = sum_j m_j * prod_{l>j} dims_l).
inline std::vector<std::size_t> mixed_radix_decode(std::size_t flat, const Shape& dims) {
    if (flat >= shape_numel(dims))
        throw ShapeError("flat index " + std::to_string(flat) + " out of range for dims " +
                         shape_to_string(dims));
    std::vector<std::size_t> idx(dims.size(), 0);
    for (std::size_t j = dims.size(); j-- > 0;) {
        idx[j] = flat % dims[j];
        flat /= dims[j];
    }
    return idx;
}

inline std::size_t mixed_radix_encode(const std::vector<std::size_t>& idx, const Shape& dims) {
    if (idx.size() != dims.size())
        throw ShapeError("multi-index order mismatch for dims " + shape_to_string(dims));
    std::size_t flat = 0;
    for (std::size_t j = 0; j < dims.size(); ++j) {
        if (idx[j] >= dims[j])
            throw ShapeError("multi-index out of range on axis " + std::to_string(j));
        flat = flat * dims[j] + idx[j];
    }
    return flat;
}

inline double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
    if (a.size() != b.size()) throw ShapeError("max_abs_diff: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        if (d < 0) d = -d;
        if (d > m) m = d;
    }
    return m;
}

/// Max |a-b| / max(1e-300, max|b|); crude but fine for test tolerances.
inline double max_rel_diff(const DenseTensor& a, const DenseTensor& b) {
    double scale = 1e-300;
    for (double v : b.values()) scale = std::max(scale, v < 0 ? -v : v);
    return max_abs_diff(a, b) / scale;
}

}  // namespace tnt
