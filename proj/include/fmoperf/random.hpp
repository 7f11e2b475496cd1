// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace fmoperf {

// std::mt19937_64 is specified bit-for-bit by the standard, but the std::*_distribution
// adaptors are not, so every stochastic feature draws through this wrapper instead.
// Results are therefore reproducible across compilers and standard libraries.
class Prng {
public:
    explicit Prng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    std::mt19937_64 gen_;
};

} // namespace fmoperf
