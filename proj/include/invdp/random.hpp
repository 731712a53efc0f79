#pragma once

// Portable random variates. Only raw 64-bit engine output is consumed, so a
// given seed reproduces the same stream with any standard library.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace invdp {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Stream keyed by a seed and any number of integer labels (store, product, ...).
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys = {}) {
    std::uint64_t h = splitmix64(seed);
    for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
    return Rng(h);
}

/// Uniform on the open interval (0, 1).
inline double unit_uniform(Rng& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard type-1 extreme value (Gumbel) draw by inverse CDF.
inline double gumbel(Rng& rng) { return -std::log(-std::log(unit_uniform(rng))); }

inline double standard_normal(Rng& rng) {
    const double u1 = unit_uniform(rng);
    const double u2 = unit_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline bool bernoulli(Rng& rng, double p) { return unit_uniform(rng) < p; }

/// Uniform integer in [0, n).
inline int uniform_index(Rng& rng, int n) {
    return static_cast<int>(unit_uniform(rng) * n) % n;
}

}  // namespace invdp
