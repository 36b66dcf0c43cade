#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace kws {

/// SplitMix64 finalizer. Every seed in the project is derived from a root
/// seed through this function so that sub-streams are independent and
/// reproducible regardless of evaluation order.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for sub-stream `index` of `root`, optionally namespaced by `salt`.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index,
                                    std::uint64_t salt = 0) noexcept {
  return splitmix64(splitmix64(root ^ splitmix64(salt)) + index);
}

using Rng = std::mt19937_64;

/// Uniform double in [lo, hi). Implemented directly rather than with
/// std::uniform_real_distribution so the stream is identical across
/// standard library implementations.
inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

/// Uniform integer in [0, n).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

/// Standard normal via Box-Muller (portable, unlike std::normal_distribution).
inline double gaussian(Rng& rng) {
  double u1;
  do {
    u1 = uniform(rng);
  } while (u1 <= 0.0);
  const double u2 = uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace kws
