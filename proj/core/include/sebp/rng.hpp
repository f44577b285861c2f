#pragma once

#include <cmath>
#include <cstdint>

namespace sebp::rng {

// Counter-based randomness: every draw is a pure function of the values that
// identify it (seed, indices). There is no shared stream, so draws are
// reproducible regardless of evaluation order or thread count.

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    return splitmix64(splitmix64(a) ^ b);
}

inline constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix(mix(a, b), c);
}

inline constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                                   std::uint64_t d) {
    return mix(mix(a, b, c), d);
}

/// Uniform double in [0, 1) from the top 53 bits of a hash.
inline double uniform01(std::uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Standard normal deviate identified by (seed, index), via Box-Muller.
inline double standard_normal(std::uint64_t seed, std::uint64_t index) {
    const double u1 = 1.0 - uniform01(mix(seed, index, 0)); // (0, 1]
    const double u2 = uniform01(mix(seed, index, 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// Bernoulli draw identified by (seed, a, b, c).
inline bool bernoulli(double p, std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                      std::uint64_t c) {
    return uniform01(mix(seed, a, b, c)) < p;
}

} // namespace sebp::rng
