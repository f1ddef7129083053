#pragma once

#include <cmath>
#include <cstdint>

namespace ddcmix {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Counter-based generator: every draw is a pure function of
/// (seed, k1, k2, k3, k4), so simulation output does not depend on
/// evaluation order or thread scheduling.
inline std::uint64_t rng_bits(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2 = 0,
                              std::uint64_t k3 = 0, std::uint64_t k4 = 0) {
  std::uint64_t h = detail::splitmix64(seed ^ 0x6a09e667f3bcc908ULL);
  h = detail::splitmix64(h ^ detail::splitmix64(k1 ^ 0xbb67ae8584caa73bULL));
  h = detail::splitmix64(h ^ detail::splitmix64(k2 ^ 0x3c6ef372fe94f82bULL));
  h = detail::splitmix64(h ^ detail::splitmix64(k3 ^ 0xa54ff53a5f1d36f1ULL));
  h = detail::splitmix64(h ^ detail::splitmix64(k4 ^ 0x510e527fade682d1ULL));
  return h;
}

/// Uniform draw in [0, 1).
inline double rng_uniform(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2 = 0,
                          std::uint64_t k3 = 0, std::uint64_t k4 = 0) {
  return static_cast<double>(rng_bits(seed, k1, k2, k3, k4) >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two counter draws (sub-keys 2*k4, 2*k4+1).
inline double rng_normal(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2 = 0,
                         std::uint64_t k3 = 0, std::uint64_t k4 = 0) {
  const double u1 = rng_uniform(seed, k1, k2, k3, 2 * k4);
  const double u2 = rng_uniform(seed, k1, k2, k3, 2 * k4 + 1);
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  return r * std::cos(2.0 * M_PI * u2);
}

/// Derives an independent stream seed, e.g. one per Monte Carlo replication.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return detail::splitmix64(detail::splitmix64(seed) ^ detail::splitmix64(index + 1));
}

/// Inverse-CDF categorical draw over p[0..n-1] (assumed to sum to ~1).
inline int rng_categorical(const double* p, int n, double u) {
  double c = 0.0;
  for (int i = 0; i < n; ++i) {
    c += p[i];
    if (u < c) return i;
  }
  return n - 1;
}

}  // namespace ddcmix
