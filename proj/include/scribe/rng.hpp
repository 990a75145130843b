#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace scribe {

// mt19937_64 output mapped by explicit formulas so streams are identical
// across standard libraries (std::*_distribution is implementation-defined).

inline double uniform01(std::mt19937_64& rng) {
    return double(rng() >> 11) * 0x1.0p-53;  // [0, 1)
}

inline double gaussian(std::mt19937_64& rng) {
    // Box-Muller, one value per pair of uniforms.
    double u1 = uniform01(rng);
    while (u1 <= 0.0) {
        u1 = uniform01(rng);
    }
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Uniform integer in [0, n) without modulo bias.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
    if (n <= 1) {
        return 0;
    }
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % n);
    std::uint64_t x = rng();
    while (x >= limit) {
        x = rng();
    }
    return x % n;
}

}  // namespace scribe
