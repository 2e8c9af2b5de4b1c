#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>

namespace fmm {

using Rng = std::mt19937_64;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogTwoPi = 1.8378770664093454836;

// lgamma_r avoids the global signgam write of std::lgamma, so it is safe to
// call from concurrent replicates.
inline double log_gamma(double x) {
  int sign = 0;
  return ::lgamma_r(x, &sign);
}

inline double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

inline double log_sum_exp(std::span<const double> xs) {
  double hi = kNegInf;
  for (double x : xs) hi = x > hi ? x : hi;
  if (hi == kNegInf) return kNegInf;
  if (std::isinf(hi)) return hi;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

/// SplitMix64 finalizer; the basis of every derived seed in the project.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and a path of
/// stream identifiers: s <- splitmix64(s ^ splitmix64(id + 1)) for each id.
template <typename... Ids>
std::uint64_t derive_seed(std::uint64_t master, Ids... ids) {
  std::uint64_t s = splitmix64(master);
  ((s = splitmix64(s ^ splitmix64(static_cast<std::uint64_t>(ids) + 1))), ...);
  return s;
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Index drawn proportionally to exp(log_weights). Entries of -inf are never chosen.
std::size_t sample_log_categorical(std::span<const double> log_weights, Rng& rng);

}  // namespace fmm
