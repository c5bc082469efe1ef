#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "amx/error.hpp"

namespace amx {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 rng_from(uint64_t seed) {
  return std::mt19937_64(splitmix64(seed));
}

/// Independent per-item stream; results do not depend on processing order.
inline std::mt19937_64 derive_rng(uint64_t seed, uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(index + 1)));
}

/// One draw from Beta(alpha, alpha) via the two-gamma construction.
template <typename T>
T beta_sample(T alpha, std::mt19937_64& rng) {
  if (!(alpha > T(0)))
    throw ValueError("Beta parameter alpha must be positive, got " +
                     std::to_string(alpha));
  std::gamma_distribution<double> gamma(static_cast<double>(alpha), 1.0);
  const double x = gamma(rng);
  const double y = gamma(rng);
  if (x + y == 0.0) return T(0.5);
  return static_cast<T>(x / (x + y));
}

template <typename T>
std::vector<T> beta_samples(T alpha, size_t n, std::mt19937_64& rng) {
  std::vector<T> out(n);
  for (auto& v : out) v = beta_sample(alpha, rng);
  return out;
}

}  // namespace amx
