#pragma once

// Multi-coil Fourier measurement model y = A x + w with
//   A = [M F Diag(s_1); ...; M F Diag(s_C)]
// and its wavelet-domain counterpart B = A Psi^T.
//
// Noise convention: w is circularly symmetric complex Gaussian with
// E|w_i|^2 = sigma^2 (real and imaginary parts each sigma^2 / 2), and
// gamma_w = 1 / sigma^2.
//
// Masks are stored in DFT storage order (zero frequency at (0, 0)). The
// calibration region is the block (or band) of lowest signed frequencies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dgec/core.hpp"
#include "dgec/random.hpp"
#include "dgec/transforms.hpp"

namespace dgec {

enum class MaskKind : std::uint8_t { kPoint2d = 0, kLine2d = 1 };

inline const char* mask_kind_name(MaskKind k) { return k == MaskKind::kPoint2d ? "point2d" : "line2d"; }

inline MaskKind parse_mask_kind(const std::string& s) {
  if (s == "point2d" || s == "point") return MaskKind::kPoint2d;
  if (s == "line2d" || s == "line") return MaskKind::kLine2d;
  throw ArgumentError("unknown mask kind '" + s + "' (expected point2d or line2d)");
}

/// Acceleration as a reduced fraction num/den.
struct Acceleration {
  std::uint32_t num = 1;
  std::uint32_t den = 1;

  double value() const { return static_cast<double>(num) / den; }

  static Acceleration from_double(double r) {
    if (!(r >= 1.0) || !std::isfinite(r)) throw ArgumentError("acceleration R must be a finite value >= 1");
    // Smallest denominator reproducing r to 1e-9.
    for (std::uint32_t den = 1; den <= 10000; ++den) {
      const double num = std::round(r * den);
      if (std::abs(num / den - r) <= 1e-9 * r) {
        const auto n = static_cast<std::uint32_t>(num);
        const std::uint32_t g = std::gcd(n, den);
        return {n / g, den / g};
      }
    }
    throw ArgumentError("acceleration R is not representable as a fraction with denominator <= 10000");
  }
};

struct SamplingMask {
  std::size_t height = 0;
  std::size_t width = 0;
  MaskKind kind = MaskKind::kPoint2d;
  Acceleration acceleration;
  std::size_t calib = 0;  // block side (point) or band width (line)
  std::vector<std::uint8_t> sampled;

  std::size_t count() const { return static_cast<std::size_t>(std::count(sampled.begin(), sampled.end(), 1)); }

  /// Flat storage-order indices of the sampled frequencies, ascending.
  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < sampled.size(); ++i) {
      if (sampled[i]) out.push_back(i);
    }
    return out;
  }

  bool operator==(const SamplingMask&) const = default;
};

namespace detail {

/// Rescales a density so that sum(min(1, p + c)) == budget, found by bisection on c.
inline std::vector<double> calibrate_density(const std::vector<double>& base, double budget) {
  auto total = [&](double c) {
    double s = 0.0;
    for (double p : base) s += std::clamp(p + c, 0.0, 1.0);
    return s;
  };
  double lo = -1.0;
  double hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (total(mid) < budget ? lo : hi) = mid;
  }
  std::vector<double> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = std::clamp(base[i] + hi, 0.0, 1.0);
  return out;
}

/// Weighted sampling of k items without replacement (Efraimidis-Spirakis keys).
inline std::vector<std::size_t> weighted_sample(const std::vector<double>& weights,
                                                const std::vector<std::size_t>& candidates, std::size_t k,
                                                Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::pair<double, std::size_t>> keys;
  keys.reserve(candidates.size());
  for (std::size_t idx : candidates) {
    const double u = std::max(unif(rng), std::numeric_limits<double>::min());
    const double w = std::max(weights[idx], 1e-12);
    keys.emplace_back(std::log(u) / w, idx);
  }
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k), keys.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(keys[i].second);
  return out;
}

inline bool in_calib(long f, std::size_t calib) {
  const long half = static_cast<long>(calib / 2);
  return f >= -half && f < static_cast<long>(calib) - half;
}

}  // namespace detail

/// Variable-density 2D point mask with exactly floor(N / R) samples.
inline SamplingMask make_point_mask(std::size_t height, std::size_t width, double R, double density_exponent,
                                    std::size_t calib_size, std::uint64_t seed) {
  const Acceleration acc = Acceleration::from_double(R);
  if (height == 0 || width == 0) throw ShapeError("empty mask shape");
  if (calib_size > height || calib_size > width) throw ArgumentError("calibration block does not fit the mask");
  const std::size_t n = height * width;
  const std::size_t budget = n * acc.den / acc.num;
  const std::size_t calib_count = calib_size * calib_size;
  if (calib_count > budget) {
    throw ArgumentError("calibration block of " + std::to_string(calib_count) + " samples exceeds the budget of " +
                        std::to_string(budget) + " at R=" + std::to_string(acc.value()));
  }
  SamplingMask mask{height, width, MaskKind::kPoint2d, acc, calib_size, std::vector<std::uint8_t>(n, 0)};
  std::vector<double> base(n);
  std::vector<std::size_t> candidates;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const long fr = signed_frequency(r, height);
      const long fc = signed_frequency(c, width);
      const double ur = static_cast<double>(fr) / (0.5 * static_cast<double>(height));
      const double uc = static_cast<double>(fc) / (0.5 * static_cast<double>(width));
      const double rad = std::min(1.0, std::sqrt(ur * ur + uc * uc) / std::numbers::sqrt2);
      base[r * width + c] = std::pow(1.0 - rad, density_exponent);
      if (detail::in_calib(fr, calib_size) && detail::in_calib(fc, calib_size)) {
        mask.sampled[r * width + c] = 1;
      } else {
        candidates.push_back(r * width + c);
      }
    }
  }
  const std::size_t remaining = budget - calib_count;
  std::vector<double> cand_base;
  for (std::size_t idx : candidates) cand_base.push_back(base[idx]);
  const std::vector<double> pdf = detail::calibrate_density(cand_base, static_cast<double>(remaining));
  for (std::size_t i = 0; i < candidates.size(); ++i) base[candidates[i]] = pdf[i];
  Rng rng(derive_seed(seed, Stream::kMask, {0}));
  for (std::size_t idx : detail::weighted_sample(base, candidates, remaining, rng)) mask.sampled[idx] = 1;
  return mask;
}

/// Variable-density 2D line mask: floor(W / R) full-height columns.
inline SamplingMask make_line_mask(std::size_t height, std::size_t width, double R, double density_exponent,
                                   std::size_t calib_width, std::uint64_t seed) {
  const Acceleration acc = Acceleration::from_double(R);
  if (height == 0 || width == 0) throw ShapeError("empty mask shape");
  if (calib_width > width) throw ArgumentError("calibration band does not fit the mask");
  const std::size_t budget = width * acc.den / acc.num;
  if (calib_width > budget) {
    throw ArgumentError("calibration band of " + std::to_string(calib_width) + " lines exceeds the budget of " +
                        std::to_string(budget) + " lines");
  }
  if (budget == 0) throw ArgumentError("acceleration leaves no lines to sample");
  std::vector<double> base(width);
  std::vector<std::uint8_t> column(width, 0);
  std::vector<std::size_t> candidates;
  for (std::size_t c = 0; c < width; ++c) {
    const long fc = signed_frequency(c, width);
    const double rad = std::min(1.0, std::abs(static_cast<double>(fc)) / (0.5 * static_cast<double>(width)));
    base[c] = std::pow(1.0 - rad, density_exponent);
    if (detail::in_calib(fc, calib_width)) {
      column[c] = 1;
    } else {
      candidates.push_back(c);
    }
  }
  const std::size_t remaining = budget - calib_width;
  std::vector<double> cand_base;
  for (std::size_t idx : candidates) cand_base.push_back(base[idx]);
  const std::vector<double> pdf = detail::calibrate_density(cand_base, static_cast<double>(remaining));
  for (std::size_t i = 0; i < candidates.size(); ++i) base[candidates[i]] = pdf[i];
  Rng rng(derive_seed(seed, Stream::kMask, {1}));
  for (std::size_t idx : detail::weighted_sample(base, candidates, remaining, rng)) column[idx] = 1;
  SamplingMask mask{height, width, MaskKind::kLine2d, acc, calib_width, std::vector<std::uint8_t>(height * width, 0)};
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) mask.sampled[r * width + c] = column[c];
  }
  return mask;
}

inline SamplingMask full_mask(std::size_t height, std::size_t width) {
  return SamplingMask{height, width, MaskKind::kPoint2d, {1, 1}, 0, std::vector<std::uint8_t>(height * width, 1)};
}

// ---------------------------------------------------------------------------
// Coil maps

struct CoilMaps {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<CVector> maps;
  std::vector<std::uint8_t> support;

  std::size_t coils() const { return maps.size(); }
};

/// Smooth synthetic sensitivities normalized to sum_c |s_c|^2 = 1 on an
/// elliptical support. support_radius is the ellipse semi-axis as a fraction
/// of the half-size; values <= 0 select the whole grid.
inline CoilMaps generate_coil_maps(std::size_t height, std::size_t width, std::size_t C, double smoothness,
                                   std::uint64_t seed, double support_radius = 0.0) {
  if (C == 0) throw ArgumentError("coil count must be at least 1");
  if (height == 0 || width == 0) throw ShapeError("empty coil-map shape");
  if (!(smoothness > 0.0)) throw ArgumentError("coil smoothness must be positive");
  const std::size_t n = height * width;
  CoilMaps out{height, width, {}, std::vector<std::uint8_t>(n, 1)};
  auto coord = [](std::size_t k, std::size_t len) { return (static_cast<double>(k) + 0.5) / (0.5 * len) - 1.0; };
  if (support_radius > 0.0) {
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        const double y = coord(r, height) / support_radius;
        const double x = coord(c, width) / support_radius;
        out.support[r * width + c] = (x * x + y * y <= 1.0) ? 1 : 0;
      }
    }
  }
  Rng rng(derive_seed(seed, Stream::kCoils));
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  out.maps.assign(C, CVector::Zero(static_cast<Eigen::Index>(n)));
  for (std::size_t k = 0; k < C; ++k) {
    if (C == 1) {
      for (std::size_t i = 0; i < n; ++i) out.maps[0][i] = out.support[i] ? 1.0 : 0.0;
      break;
    }
    const double angle = 2.0 * std::numbers::pi * (static_cast<double>(k) + 0.25 * unif(rng)) / static_cast<double>(C);
    const double cy = 1.2 * std::sin(angle);
    const double cx = 1.2 * std::cos(angle);
    const double p0 = std::numbers::pi * unif(rng);
    const double px = 1.5 * unif(rng);
    const double py = 1.5 * unif(rng);
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        const double y = coord(r, height);
        const double x = coord(c, width);
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const double mag = std::exp(-d2 / (2.0 * smoothness * smoothness));
        out.maps[k][r * width + c] = std::polar(mag, p0 + px * x + py * y);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double energy = 0.0;
    for (const CVector& m : out.maps) energy += std::norm(m[i]);
    const double scale = out.support[i] && energy > 0.0 ? 1.0 / std::sqrt(energy) : 0.0;
    for (CVector& m : out.maps) m[i] *= scale;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operators

struct ForwardModel {
  SamplingMask mask;
  CoilMaps coils;
  SubbandLayout layout;
  std::vector<std::size_t> sampled;  // cached mask.indices()

  ForwardModel() = default;
  ForwardModel(SamplingMask m, CoilMaps c, int depth)
      : mask(std::move(m)), coils(std::move(c)), layout(mask.height, mask.width, depth), sampled(mask.indices()) {
    if (coils.height != mask.height || coils.width != mask.width) {
      throw ShapeError("coil maps and mask have different shapes");
    }
    if (sampled.empty()) throw ArgumentError("mask samples no frequencies");
  }

  std::size_t height() const { return mask.height; }
  std::size_t width() const { return mask.width; }
  std::size_t pixels() const { return mask.height * mask.width; }
  std::size_t samples_per_coil() const { return sampled.size(); }
  std::size_t measurements() const { return coils.coils() * sampled.size(); }
};

inline CVector apply_A(const ComplexImage& x, const ForwardModel& fm) {
  if (x.height != fm.height() || x.width != fm.width()) throw ShapeError("apply_A: image shape does not match model");
  const std::size_t m = fm.samples_per_coil();
  CVector y(static_cast<Eigen::Index>(fm.measurements()));
  for (std::size_t c = 0; c < fm.coils.coils(); ++c) {
    ComplexImage weighted(x.height, x.width, x.data.cwiseProduct(fm.coils.maps[c]));
    const ComplexImage k = dft2(weighted);
    for (std::size_t i = 0; i < m; ++i) y[c * m + i] = k.data[fm.sampled[i]];
  }
  return y;
}

inline ComplexImage apply_AH(const CVector& y, const ForwardModel& fm) {
  if (static_cast<std::size_t>(y.size()) != fm.measurements()) {
    throw ShapeError("apply_AH: measurement vector has " + std::to_string(y.size()) + " entries, expected " +
                     std::to_string(fm.measurements()));
  }
  const std::size_t m = fm.samples_per_coil();
  ComplexImage out(fm.height(), fm.width());
  for (std::size_t c = 0; c < fm.coils.coils(); ++c) {
    ComplexImage k(fm.height(), fm.width());
    for (std::size_t i = 0; i < m; ++i) k.data[fm.sampled[i]] = y[c * m + i];
    const ComplexImage img = idft2(k);
    out.data += fm.coils.maps[c].conjugate().cwiseProduct(img.data);
  }
  return out;
}

inline CVector apply_B(const WaveletPyramid& c, const ForwardModel& fm) {
  if (c.layout != fm.layout) throw ShapeError("apply_B: pyramid layout does not match model");
  return apply_A(idwt2_haar(c), fm);
}

inline WaveletPyramid apply_BH(const CVector& y, const ForwardModel& fm) {
  return dwt2_haar(apply_AH(y, fm), fm.layout.depth());
}

/// B^H B c, computed without materializing measurements per coil twice.
inline WaveletPyramid apply_BHB(const WaveletPyramid& c, const ForwardModel& fm) {
  return apply_BH(apply_B(c, fm), fm);
}

// ---------------------------------------------------------------------------
// Measurements

/// SNR at and above which measurements are treated as noiseless.
inline constexpr double kNoiselessSnrDb = 150.0;

struct MeasurementSet {
  CVector y;
  double gamma_w = 1.0;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  bool noiseless = false;
};

/// y = A x0 + w with 10 log10(|A x0|^2 / E|w|^2) = snr_db. An infinite snr_db
/// yields w = 0 and the gamma_w that a 150 dB SNR would have.
inline MeasurementSet simulate_measurements(const ComplexImage& x0, const ForwardModel& fm, double snr_db,
                                            std::uint64_t seed) {
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
    throw ArgumentError("snr_db must be finite or +inf");
  }
  require_finite(x0.data, "simulate_measurements");
  MeasurementSet out;
  out.seed = seed;
  out.snr_db = snr_db;
  out.y = apply_A(x0, fm);
  const double signal = out.y.squaredNorm();
  if (!(signal > 0.0)) throw ArgumentError("simulate_measurements: A x0 has zero energy");
  const auto p = static_cast<double>(out.y.size());
  if (std::isinf(snr_db)) {
    out.noiseless = true;
    out.gamma_w = 1.0 / (signal / p * std::pow(10.0, -kNoiselessSnrDb / 10.0));
    return out;
  }
  const double sigma2 = signal / (p * std::pow(10.0, snr_db / 10.0));
  out.gamma_w = 1.0 / sigma2;
  Rng rng(derive_seed(seed, Stream::kMeasurementNoise));
  out.y += complex_gaussian(static_cast<std::size_t>(out.y.size()), sigma2, rng);
  return out;
}

/// Least-squares image from fully sampled multi-coil data. With sum_c|s_c|^2
/// equal to one on the support and zero elsewhere, A_full^H is the
/// pseudo-inverse.
inline ComplexImage ground_truth_from_full(const CVector& y_full, const CoilMaps& coils) {
  const std::size_t n = coils.height * coils.width;
  if (static_cast<std::size_t>(y_full.size()) != coils.coils() * n) {
    throw ShapeError("ground_truth_from_full: expected " + std::to_string(coils.coils() * n) + " samples, got " +
                     std::to_string(y_full.size()));
  }
  ComplexImage out(coils.height, coils.width);
  for (std::size_t c = 0; c < coils.coils(); ++c) {
    ComplexImage k(coils.height, coils.width, y_full.segment(static_cast<Eigen::Index>(c * n), static_cast<Eigen::Index>(n)));
    out.data += coils.maps[c].conjugate().cwiseProduct(idft2(k).data);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!coils.support[i]) out.data[i] = 0.0;
  }
  return out;
}

/// Zeroes pixels outside the coil support.
inline ComplexImage restrict_to_support(ComplexImage img, const std::vector<std::uint8_t>& support) {
  if (support.size() != img.size()) throw ShapeError("support size does not match image");
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (!support[i]) img.data[i] = 0.0;
  }
  return img;
}

// ---------------------------------------------------------------------------
// Phantoms

enum class PhantomKind { kSheppLogan, kPiecewiseSmooth, kRandomWaveletSparse };

inline PhantomKind parse_phantom_kind(const std::string& s) {
  if (s == "shepp_logan") return PhantomKind::kSheppLogan;
  if (s == "piecewise_smooth") return PhantomKind::kPiecewiseSmooth;
  if (s == "random_wavelet_sparse") return PhantomKind::kRandomWaveletSparse;
  throw ArgumentError("unknown phantom kind '" + s + "'");
}

inline const char* phantom_kind_name(PhantomKind k) {
  switch (k) {
    case PhantomKind::kSheppLogan: return "shepp_logan";
    case PhantomKind::kPiecewiseSmooth: return "piecewise_smooth";
    case PhantomKind::kRandomWaveletSparse: return "random_wavelet_sparse";
  }
  return "?";
}

struct PhantomOptions {
  double sparsity = 0.05;  // random_wavelet_sparse: fraction of nonzero coefficients
  int depth = 4;           // random_wavelet_sparse: decomposition depth (clamped to what fits)
};

/// Percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw ArgumentError("percentile of empty set");
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

inline double magnitude_percentile(const ComplexImage& img, double p) {
  std::vector<double> mags(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) mags[i] = std::abs(img.data[i]);
  return percentile(std::move(mags), p);
}

namespace detail {

struct Ellipse {
  double value, a, b, x0, y0, phi_deg;
};

inline void paint_ellipses(ComplexImage& img, const std::vector<Ellipse>& ellipses) {
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      const double x = (static_cast<double>(c) + 0.5) / (0.5 * img.width) - 1.0;
      const double y = 1.0 - (static_cast<double>(r) + 0.5) / (0.5 * img.height);
      for (const Ellipse& e : ellipses) {
        const double phi = e.phi_deg * std::numbers::pi / 180.0;
        const double dx = x - e.x0;
        const double dy = y - e.y0;
        const double u = dx * std::cos(phi) + dy * std::sin(phi);
        const double v = -dx * std::sin(phi) + dy * std::cos(phi);
        if ((u * u) / (e.a * e.a) + (v * v) / (e.b * e.b) <= 1.0) img(r, c) += e.value;
      }
    }
  }
}

inline int max_depth(std::size_t height, std::size_t width) {
  int d = 0;
  while (height % 2 == 0 && width % 2 == 0 && height > 1 && width > 1) {
    height /= 2;
    width /= 2;
    ++d;
  }
  return d;
}

}  // namespace detail

inline ComplexImage generate_phantom(std::size_t height, std::size_t width, PhantomKind kind, std::uint64_t seed,
                                     const PhantomOptions& opts = {}) {
  if (height == 0 || width == 0) throw ShapeError("empty phantom shape");
  ComplexImage img(height, width);
  Rng rng(derive_seed(seed, Stream::kPhantom, {static_cast<std::uint64_t>(kind)}));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  switch (kind) {
    case PhantomKind::kSheppLogan:
      detail::paint_ellipses(img, {{1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
                                   {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
                                   {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},
                                   {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
                                   {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},
                                   {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
                                   {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},
                                   {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
                                   {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},
                                   {0.1, 0.023, 0.046, 0.06, -0.605, 0.0}});
      break;
    case PhantomKind::kPiecewiseSmooth: {
      std::vector<detail::Ellipse> ellipses{{0.6, 0.85, 0.9, 0.0, 0.0, 0.0}};
      const int count = 6 + static_cast<int>(unif(rng) * 6);
      for (int k = 0; k < count; ++k) {
        const double a = 0.08 + 0.3 * unif(rng);
        const double b = 0.08 + 0.3 * unif(rng);
        const double x0 = (0.8 - a) * (2.0 * unif(rng) - 1.0) * 0.8;
        const double y0 = (0.8 - b) * (2.0 * unif(rng) - 1.0) * 0.8;
        ellipses.push_back({0.8 * (unif(rng) - 0.4), a, b, x0, y0, 180.0 * unif(rng)});
      }
      detail::paint_ellipses(img, ellipses);
      const double gx = 0.4 * (2.0 * unif(rng) - 1.0);
      const double gy = 0.4 * (2.0 * unif(rng) - 1.0);
      const double px = 2.0 * (2.0 * unif(rng) - 1.0);
      const double py = 2.0 * (2.0 * unif(rng) - 1.0);
      const double pxy = 1.0 * (2.0 * unif(rng) - 1.0);
      for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
          const double x = (static_cast<double>(c) + 0.5) / (0.5 * width) - 1.0;
          const double y = (static_cast<double>(r) + 0.5) / (0.5 * height) - 1.0;
          const double mag = std::abs(img(r, c).real()) * (1.0 + gx * x + gy * y);
          img(r, c) = std::polar(mag, px * x + py * y + pxy * x * y);
        }
      }
      break;
    }
    case PhantomKind::kRandomWaveletSparse: {
      if (opts.sparsity < 0.0 || opts.sparsity > 1.0) throw ArgumentError("sparsity must lie in [0, 1]");
      const int depth = std::min(opts.depth, detail::max_depth(height, width));
      WaveletPyramid pyr{SubbandLayout(height, width, depth)};
      const auto n = height * width;
      const auto k = static_cast<std::size_t>(std::llround(opts.sparsity * static_cast<double>(n)));
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      const CVector values = complex_gaussian(k, 1.0, rng);
      for (std::size_t i = 0; i < k; ++i) pyr.coeffs[order[i]] = values[i];
      img = idwt2_haar(pyr);
      break;
    }
  }
  const double p98 = magnitude_percentile(img, 98.0);
  if (p98 > 0.0) img.data /= p98;
  return img;
}

}  // namespace dgec
