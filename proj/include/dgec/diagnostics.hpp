#pragma once

// Image metrics and the subband error statistics used to check the
// e2 ~ N(0, Diag(gamma2)^{-1}) error model.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "dgec/core.hpp"
#include "dgec/forward_model.hpp"
#include "dgec/transforms.hpp"

namespace dgec {

/// 10 log10(N max|x0|^2 / |x_hat - x0|^2); +inf when the images are identical.
inline double psnr(const ComplexImage& x_hat, const ComplexImage& x0) {
  require_same_shape(x_hat, x0, "psnr");
  const double peak = x0.data.cwiseAbs2().maxCoeff();
  if (!(peak > 0.0)) throw ArgumentError("psnr: reference image is zero");
  const double err = (x_hat.data - x0.data).squaredNorm();
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(x0.size()) * peak / err);
}

// ---------------------------------------------------------------------------
// SSIM

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double data_range = 1.0;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM of two real images with a normalized Gaussian window, averaged
/// over window positions that lie fully inside the image.
inline double ssim(const RMatrix& a, const RMatrix& b, const SsimOptions& opt = {}) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("ssim: image shapes differ");
  if (a.rows() < opt.window || a.cols() < opt.window) throw ShapeError("ssim: image smaller than the window");
  const int half = opt.window / 2;
  std::vector<double> k(static_cast<std::size_t>(opt.window));
  double ks = 0.0;
  for (int i = 0; i < opt.window; ++i) {
    k[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i - half) * (i - half) / (opt.sigma * opt.sigma));
    ks += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= ks;
  const double c1 = std::pow(opt.k1 * opt.data_range, 2);
  const double c2 = std::pow(opt.k2 * opt.data_range, 2);
  const Eigen::Index rows = a.rows() - 2 * half;
  const Eigen::Index cols = a.cols() - 2 * half;
  auto filter = [&](const RMatrix& img) {
    RMatrix tmp(img.rows(), cols);
    for (Eigen::Index r = 0; r < img.rows(); ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        double s = 0.0;
        for (int i = 0; i < opt.window; ++i) s += k[static_cast<std::size_t>(i)] * img(r, c + i);
        tmp(r, c) = s;
      }
    }
    RMatrix out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        double s = 0.0;
        for (int i = 0; i < opt.window; ++i) s += k[static_cast<std::size_t>(i)] * tmp(r + i, c);
        out(r, c) = s;
      }
    }
    return out;
  };
  const RMatrix mu_a = filter(a);
  const RMatrix mu_b = filter(b);
  const RMatrix saa = filter(a.cwiseProduct(a)) - mu_a.cwiseProduct(mu_a);
  const RMatrix sbb = filter(b.cwiseProduct(b)) - mu_b.cwiseProduct(mu_b);
  const RMatrix sab = filter(a.cwiseProduct(b)) - mu_a.cwiseProduct(mu_b);
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double num = (2.0 * mu_a(r, c) * mu_b(r, c) + c1) * (2.0 * sab(r, c) + c2);
      const double den = (mu_a(r, c) * mu_a(r, c) + mu_b(r, c) * mu_b(r, c) + c1) * (saa(r, c) + sbb(r, c) + c2);
      total += num / den;
    }
  }
  return total / static_cast<double>(rows * cols);
}

/// SSIM of magnitude images, both divided by the 98th percentile of |x0|.
inline double ssim(const ComplexImage& x_hat, const ComplexImage& x0, SsimOptions opt = {}) {
  require_same_shape(x_hat, x0, "ssim");
  double scale = magnitude_percentile(x0, 98.0);
  if (!(scale > 0.0)) scale = 1.0;
  auto mag = [&](const ComplexImage& img) {
    RMatrix m(static_cast<Eigen::Index>(img.height), static_cast<Eigen::Index>(img.width));
    for (std::size_t r = 0; r < img.height; ++r) {
      for (std::size_t c = 0; c < img.width; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = std::abs(img(r, c)) / scale;
    }
    return m;
  };
  opt.data_range = 1.0;
  return ssim(mag(x_hat), mag(x0), opt);
}

// ---------------------------------------------------------------------------
// Subband error statistics

struct SubbandStats {
  std::string name;
  std::size_t count = 0;
  cplx mean{};
  double sd = 0.0;           // sqrt of the unbiased variance of the complex error
  double t_real = 0.0;
  double t_imag = 0.0;
  double p_real = 1.0;
  double p_imag = 1.0;
  bool reject_real = false;
  bool reject_imag = false;
  bool degenerate = false;   // zero variance: the t-test is undefined
};

struct SubbandErrorReport {
  double alpha = 0.05;
  std::vector<SubbandStats> subbands;

  std::size_t rejections() const {
    std::size_t n = 0;
    for (const auto& s : subbands) n += static_cast<std::size_t>(s.reject_real) + static_cast<std::size_t>(s.reject_imag);
    return n;
  }
  std::size_t tests() const {
    std::size_t n = 0;
    for (const auto& s : subbands) n += s.degenerate ? 0 : 2;
    return n;
  }
};

/// Two-sided one-sample t-test against zero mean. Returns (t, p); p = NaN when undefined.
inline std::pair<double, double> one_sample_t(const std::vector<double>& x) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) return {0.0, std::numeric_limits<double>::quiet_NaN()};
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) return {0.0, std::numeric_limits<double>::quiet_NaN()};
  const double t = mean / (sd / std::sqrt(n));
  boost::math::students_t dist(n - 1.0);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return {t, p};
}

/// Per-subband statistics of e = r2 - c0 over coefficients with support[i] != 0
/// (all coefficients when support is empty). Real and imaginary parts are
/// tested separately.
inline SubbandErrorReport subband_error_report(const WaveletPyramid& r2, const WaveletPyramid& c0,
                                               const std::vector<std::uint8_t>& support, double alpha = 0.05) {
  require_same_layout(r2, c0, "subband_error_report");
  if (!support.empty() && support.size() != r2.layout.total_size()) throw ShapeError("support length does not match pyramid");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must lie in (0, 1)");
  SubbandErrorReport rep;
  rep.alpha = alpha;
  for (std::size_t l = 0; l < r2.layout.count(); ++l) {
    const Subband& s = r2.layout[l];
    std::vector<double> re, im;
    for (std::size_t i = s.offset; i < s.offset + s.size(); ++i) {
      if (!support.empty() && !support[i]) continue;
      const cplx e = r2.coeffs[static_cast<Eigen::Index>(i)] - c0.coeffs[static_cast<Eigen::Index>(i)];
      re.push_back(e.real());
      im.push_back(e.imag());
    }
    SubbandStats st;
    st.name = s.name();
    st.count = re.size();
    if (st.count == 0) throw ArgumentError("subband " + st.name + " has no coefficients inside the support");
    double mr = 0.0, mi = 0.0;
    for (std::size_t i = 0; i < re.size(); ++i) {
      mr += re[i];
      mi += im[i];
    }
    mr /= static_cast<double>(st.count);
    mi /= static_cast<double>(st.count);
    st.mean = {mr, mi};
    double ss = 0.0;
    for (std::size_t i = 0; i < re.size(); ++i) ss += (re[i] - mr) * (re[i] - mr) + (im[i] - mi) * (im[i] - mi);
    st.sd = st.count > 1 ? std::sqrt(ss / static_cast<double>(st.count - 1)) : 0.0;
    std::tie(st.t_real, st.p_real) = one_sample_t(re);
    std::tie(st.t_imag, st.p_imag) = one_sample_t(im);
    st.degenerate = std::isnan(st.p_real) || std::isnan(st.p_imag);
    st.reject_real = !std::isnan(st.p_real) && st.p_real < alpha;
    st.reject_imag = !std::isnan(st.p_imag) && st.p_imag < alpha;
    rep.subbands.push_back(st);
  }
  return rep;
}

/// Two-sided 95% binomial acceptance interval [lo, hi] for the count of
/// rejections among n independent tests at level alpha (exact tails).
inline std::pair<std::size_t, std::size_t> binomial_interval(std::size_t n, double alpha, double coverage = 0.95) {
  const double tail = (1.0 - coverage) / 2.0;
  std::vector<double> pmf(n + 1);
  const double la = std::log(alpha);
  const double lb = std::log1p(-alpha);
  for (std::size_t k = 0; k <= n; ++k) {
    pmf[k] = std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * la + (n - k) * lb);
  }
  std::size_t lo = 0;
  double acc = 0.0;
  while (lo < n && acc + pmf[lo] < tail) acc += pmf[lo++];
  std::size_t hi = n;
  acc = 0.0;
  while (hi > 0 && acc + pmf[hi] < tail) acc += pmf[hi--];
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// QQ data and whiteness

/// Pairs (standard-normal quantile, standardized sample quantile) at
/// probabilities (i - 0.5) / n_quantiles.
inline std::vector<std::pair<double, double>> qq_data(std::vector<double> samples, std::size_t n_quantiles) {
  if (samples.size() < 2) throw ArgumentError("qq_data needs at least two samples");
  if (n_quantiles < 1) throw ArgumentError("qq_data needs at least one quantile");
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(samples.size());
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(samples.size() - 1));
  if (!(sd > 0.0)) throw ArgumentError("qq_data: samples have zero variance");
  for (double& v : samples) v = (v - mean) / sd;
  std::sort(samples.begin(), samples.end());
  boost::math::normal_distribution<double> normal;
  std::vector<std::pair<double, double>> out;
  const auto n = static_cast<double>(samples.size());
  for (std::size_t i = 1; i <= n_quantiles; ++i) {
    const double p = (static_cast<double>(i) - 0.5) / static_cast<double>(n_quantiles);
    const double pos = p * n - 0.5;  // Hazen plotting positions
    double q;
    if (pos <= 0.0) {
      q = samples.front();
    } else if (pos >= n - 1.0) {
      q = samples.back();
    } else {
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      q = samples[lo] + (pos - static_cast<double>(lo)) * (samples[lo + 1] - samples[lo]);
    }
    out.emplace_back(boost::math::quantile(normal, p), q);
  }
  return out;
}

/// Average of the horizontal and vertical lag-1 sample autocorrelations of a
/// mean-removed field, restricted to pairs inside `support`. std::nullopt for
/// a constant field.
inline std::optional<double> whiteness_score(const CVector& field, std::size_t height, std::size_t width,
                                             const std::vector<std::uint8_t>& support = {}) {
  if (static_cast<std::size_t>(field.size()) != height * width) throw ShapeError("whiteness_score: field size");
  auto inside = [&](std::size_t i) { return support.empty() || support[i] != 0; };
  std::size_t count = 0;
  cplx mean{};
  for (std::size_t i = 0; i < height * width; ++i) {
    if (inside(i)) {
      mean += field[static_cast<Eigen::Index>(i)];
      ++count;
    }
  }
  if (count < 4 || height < 2 || width < 2) throw ArgumentError("whiteness_score: too few samples");
  mean /= static_cast<double>(count);
  double energy = 0.0;
  for (std::size_t i = 0; i < height * width; ++i) {
    if (inside(i)) energy += std::norm(field[static_cast<Eigen::Index>(i)] - mean);
  }
  if (!(energy > 1e-300 * static_cast<double>(count))) return std::nullopt;
  auto lag = [&](std::size_t dr, std::size_t dc) {
    double acc = 0.0, e0 = 0.0, e1 = 0.0;
    for (std::size_t r = 0; r + dr < height; ++r) {
      for (std::size_t c = 0; c + dc < width; ++c) {
        const std::size_t i = r * width + c;
        const std::size_t j = (r + dr) * width + (c + dc);
        if (!inside(i) || !inside(j)) continue;
        const cplx a = field[static_cast<Eigen::Index>(i)] - mean;
        const cplx b = field[static_cast<Eigen::Index>(j)] - mean;
        acc += (a * std::conj(b)).real();
        e0 += std::norm(a);
        e1 += std::norm(b);
      }
    }
    return e0 > 0.0 && e1 > 0.0 ? acc / std::sqrt(e0 * e1) : 0.0;
  };
  return 0.5 * (lag(0, 1) + lag(1, 0));
}

// ---------------------------------------------------------------------------
// CSV

/// Shortest round-trip decimal form; "inf", "-inf", "nan" for non-finite values.
inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
  out << "\n";
}

inline void write_qq_csv(std::ostream& out, const std::vector<std::pair<double, double>>& qq) {
  out << "theoretical,empirical\n";
  for (const auto& [t, e] : qq) out << csv_number(t) << "," << csv_number(e) << "\n";
}

}  // namespace dgec
