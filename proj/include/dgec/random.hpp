#pragma once

// Seed derivation and Gaussian sampling helpers.
//
// Every random quantity in the library is drawn from a std::mt19937_64 whose
// seed is derived from a single master seed by hashing a path of stream tags
// and indices (SplitMix64 finalizer). Reruns with the same master seed and the
// same path reproduce the same draws regardless of the order in which streams
// are consumed.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "dgec/core.hpp"

namespace dgec {

using Rng = std::mt19937_64;

/// Top-level branches of the seed tree.
enum class Stream : std::uint64_t {
  kMask = 1,
  kCoils = 2,
  kPhantom = 3,
  kMeasurementNoise = 4,
  kInit = 5,
  kProbe = 6,
  kDenoiserNoise = 7,
  kCalibration = 8,
  kTrial = 9,
  kOracle = 10,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t p : path) {
    h = splitmix64(h ^ splitmix64(p));
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                 std::initializer_list<std::uint64_t> path = {}) {
  std::uint64_t h = derive_seed(master, {static_cast<std::uint64_t>(stream)});
  for (std::uint64_t p : path) {
    h = splitmix64(h ^ splitmix64(p));
  }
  return h;
}

/// Circularly symmetric complex Gaussian entries with E|z|^2 = variance
/// (real and imaginary parts each carry variance/2).
inline CVector complex_gaussian(std::size_t n, double variance, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(variance / 2.0));
  CVector out(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double re = normal(rng);
    const double im = normal(rng);
    out[i] = cplx(re, im);
  }
  return out;
}

inline RVector real_gaussian(std::size_t n, double variance, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(variance));
  RVector out(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = normal(rng);
  return out;
}

}  // namespace dgec
