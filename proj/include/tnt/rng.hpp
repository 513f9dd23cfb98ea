// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace tnt {

/// Deterministic, implementation-independent random stream (splitmix64 core).
///
/// Every random draw in the toolkit flows from a single master seed through
/// named sub-streams, so adding or reordering one consumer never reshuffles
/// the draws seen by another. Normal variates use Box-Muller without a cached
/// spare, which keeps the full generator state equal to one 64-bit word.
class Rng {
  public:
    Rng() : state_(0x9e3779b97f4a7c15ULL) {}
    explicit Rng(std::uint64_t seed) : state_(mix(seed + 0x9e3779b97f4a7c15ULL)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        return n == 0 ? 0 : next_u64() % n;
    }

    /// Standard normal variate.
    double normal() {
        // Box-Muller; u1 kept away from 0 so log() stays finite.
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Derive an independent stream named by `label` (FNV-1a keyed split).
    Rng split(std::string_view label) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : label) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        Rng out;
        out.state_ = mix(state_ ^ h);
        return out;
    }

    std::uint64_t state() const { return state_; }
    static Rng from_state(std::uint64_t s) {
        Rng r;
        r.state_ = s;
        return r;
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace tnt
