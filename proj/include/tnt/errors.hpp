// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace tnt {

/// Shape or axis violation in a tensor operation.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed einsum expression or inconsistent labeled dimensions.
struct EinsumError : std::runtime_error {
    explicit EinsumError(const std::string& what) : std::runtime_error(what) {}
};

/// Corrupt, truncated, or version-incompatible checkpoint file.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid run configuration (parse errors carry line diagnostics).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tnt
