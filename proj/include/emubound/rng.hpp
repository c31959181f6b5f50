// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "emubound/hash.hpp"

namespace emubound {

// mt19937_64 with hand-rolled variate transforms. std::uniform_real_distribution
// and std::normal_distribution are implementation-defined, so artifacts produced
// through them would not be bitwise reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; consumes exactly two uniforms per call.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double half_normal() { return std::abs(normal()); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection-free modulo bias is negligible for our n (shuffles over small arrays),
        // but do the standard rejection anyway to keep draws exact.
        std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

private:
    std::mt19937_64 gen_;
};

inline std::uint64_t derive_seed(std::uint64_t global, std::uint64_t stream) { return mix64(global, stream); }

inline std::uint64_t derive_seed(std::uint64_t global, std::string_view label) {
    return mix64(global, fnv1a64(label));
}

}  // namespace emubound
