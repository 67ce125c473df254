#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace haarfact {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Child seed for stream `k` of a run seeded with `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k) { return splitmix64(splitmix64(seed) ^ (k * 0xd1b54a32d192ed03ULL)); }

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) { return Rng(derive_seed(seed, stream)); }

// Uniform in [0,1) with 53 random bits; identical across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline double uniform(Rng& rng, double a, double b) { return a + (b - a) * uniform01(rng); }
inline int rademacher(Rng& rng) { return (rng() >> 63) ? -1 : 1; }
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) { return static_cast<std::uint64_t>(uniform01(rng) * static_cast<double>(n)) % n; }

// Standard normal by Box-Muller on uniform01, for platform-stable streams.
inline double gaussian(Rng& rng) {
  double u1 = 1.0 - uniform01(rng);
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace haarfact
