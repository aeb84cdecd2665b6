// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_RNG_HPP
#define DSL_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dsl {

// Counter-based generator: every sample is a pure function of (seed, counter
// words), so noise fields are reproducible regardless of how the pixel loop is
// partitioned across threads.

namespace rng {

inline std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c, std::uint64_t d) {
  std::uint64_t h = mix(seed ^ 0x243f6a8885a308d3ull);
  h = mix(h ^ a);
  h = mix(h ^ b);
  h = mix(h ^ c);
  h = mix(h ^ d);
  return h;
}

/// Uniform double in [0, 1) from 53 high bits.
inline double to_unit(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Standard normal draw addressed by (seed, a, b, c, d). Box-Muller on two
/// decorrelated hashes of the same counter.
inline double normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                     std::uint64_t c, std::uint64_t d) {
  const std::uint64_t h1 = hash(seed, a, b, c, d);
  const std::uint64_t h2 = mix(h1 ^ 0x452821e638d01377ull);
  const double u1 = 1.0 - to_unit(h1);  // (0, 1], keeps log finite
  const double u2 = to_unit(h2);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

/// Uniform in [lo, hi) addressed the same way.
inline double uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                      std::uint64_t c, std::uint64_t d, double lo = 0.0,
                      double hi = 1.0) {
  return lo + (hi - lo) * to_unit(hash(seed, a, b, c, d));
}

}  // namespace rng

}  // namespace dsl

#endif  // DSL_RNG_HPP
