#pragma once

// Subband-aware denoisers f2(r, gamma).
//
// Divergences are reported per complex coefficient: the Jacobian trace over
// real/imaginary pairs divided by 2, so the identity map has divergence 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dgec/core.hpp"
#include "dgec/random.hpp"
#include "dgec/transforms.hpp"

namespace dgec {

/// One precision per subband.
struct PrecisionVector {
  SubbandLayout layout;
  RVector gammas;

  PrecisionVector() = default;
  PrecisionVector(SubbandLayout l, RVector g) : layout(std::move(l)), gammas(std::move(g)) {
    if (static_cast<std::size_t>(gammas.size()) != layout.count()) {
      throw ShapeError("precision vector has " + std::to_string(gammas.size()) + " entries for " +
                       std::to_string(layout.count()) + " subbands");
    }
  }
  static PrecisionVector constant(const SubbandLayout& l, double g) {
    return PrecisionVector(l, RVector::Constant(static_cast<Eigen::Index>(l.count()), g));
  }

  std::size_t size() const { return static_cast<std::size_t>(gammas.size()); }
  double operator[](std::size_t l) const { return gammas[static_cast<Eigen::Index>(l)]; }
  double& operator[](std::size_t l) { return gammas[static_cast<Eigen::Index>(l)]; }

  /// Per-coefficient vector [g_1 1_{N_1}; ...; g_L 1_{N_L}].
  RVector expand() const {
    RVector out(static_cast<Eigen::Index>(layout.total_size()));
    for (std::size_t l = 0; l < layout.count(); ++l) {
      const Subband& s = layout[l];
      out.segment(static_cast<Eigen::Index>(s.offset), static_cast<Eigen::Index>(s.size())).setConstant(gammas[l]);
    }
    return out;
  }

  void validate(const char* what) const {
    for (Eigen::Index l = 0; l < gammas.size(); ++l) {
      if (!(gammas[l] > 0.0) || !std::isfinite(gammas[l])) {
        throw ArgumentError(std::string(what) + ": precision " + std::to_string(gammas[l]) + " in subband " +
                            std::to_string(l) + " is not positive and finite");
      }
    }
  }
};

/// Multiplies each subband of a pyramid by a per-subband scalar.
inline WaveletPyramid scale_subbands(const WaveletPyramid& p, const RVector& s) {
  WaveletPyramid out = p;
  for (std::size_t l = 0; l < p.layout.count(); ++l) out.band(l) *= s[static_cast<Eigen::Index>(l)];
  return out;
}

struct DenoiserResult {
  WaveletPyramid estimate;
  std::optional<RVector> subband_divergence;
};

/// Wavelet-domain denoiser. The seed drives any internal randomness; callers
/// pass the same seed for a base evaluation and its probe evaluations.
using WaveletDenoiser =
    std::function<DenoiserResult(const WaveletPyramid& r, const PrecisionVector& gamma, std::uint64_t seed)>;

/// Pixel-domain denoiser u -> f(u, gamma2).
using PixelDenoiser =
    std::function<ComplexImage(const ComplexImage& u, const PrecisionVector& gamma, std::uint64_t seed)>;

/// Wraps a pixel-domain denoiser as c -> Psi f(Psi^T c, gamma).
inline WaveletDenoiser wrap_pixel_denoiser(PixelDenoiser f) {
  return [f = std::move(f)](const WaveletPyramid& r, const PrecisionVector& gamma, std::uint64_t seed) {
    const ComplexImage u = idwt2_haar(r);
    const ComplexImage x = f(u, gamma, seed);
    require_same_shape(u, x, "pixel denoiser output");
    return DenoiserResult{dwt2_haar(x, r.layout.depth()), std::nullopt};
  };
}

// ---------------------------------------------------------------------------
// Soft threshold

/// lambda_l = lambda * sqrt(gamma_l), giving the threshold lambda / sqrt(gamma_l),
/// i.e. lambda noise standard deviations.
inline RVector default_lambdas(const PrecisionVector& gamma, double lambda) {
  return lambda * gamma.gammas.cwiseSqrt();
}

/// Complex soft threshold with per-subband threshold t_l = lambda_l / gamma_l.
inline DenoiserResult subband_soft_threshold(const WaveletPyramid& r2, const PrecisionVector& gamma2,
                                             const RVector& lambda) {
  if (gamma2.layout != r2.layout) throw ShapeError("soft threshold: precision layout differs from pyramid");
  if (static_cast<std::size_t>(lambda.size()) != r2.layout.count()) {
    throw ShapeError("soft threshold: need one lambda per subband");
  }
  gamma2.validate("soft threshold");
  DenoiserResult out{r2, RVector::Zero(static_cast<Eigen::Index>(r2.layout.count()))};
  for (std::size_t l = 0; l < r2.layout.count(); ++l) {
    const double lam = lambda[static_cast<Eigen::Index>(l)];
    if (lam < 0.0 || !std::isfinite(lam)) throw ArgumentError("soft threshold: lambda must be nonnegative and finite");
    const double t = lam / gamma2[l];
    auto band = out.estimate.band(l);
    double div = 0.0;
    for (Eigen::Index i = 0; i < band.size(); ++i) {
      const double mag = std::abs(band[i]);
      if (mag > t) {
        band[i] *= 1.0 - t / mag;
        div += 1.0 - t / (2.0 * mag);
      } else {
        band[i] = 0.0;
      }
    }
    (*out.subband_divergence)[static_cast<Eigen::Index>(l)] = div / static_cast<double>(band.size());
  }
  return out;
}

/// Soft threshold with lambda_l = lambda * sqrt(gamma_l), as a WaveletDenoiser.
inline WaveletDenoiser soft_threshold_denoiser(double lambda) {
  if (lambda < 0.0) throw ArgumentError("soft threshold: lambda must be nonnegative");
  return [lambda](const WaveletPyramid& r, const PrecisionVector& gamma, std::uint64_t) {
    return subband_soft_threshold(r, gamma, default_lambdas(gamma, lambda));
  };
}

/// Posterior mean under a zero-mean Gaussian prior with per-subband prior
/// precision tau_l: f(r) = gamma_l / (gamma_l + tau_l) * r.
inline DenoiserResult subband_linear_shrinkage(const WaveletPyramid& r, const PrecisionVector& gamma,
                                               const RVector& prior_precision) {
  if (gamma.layout != r.layout) throw ShapeError("linear shrinkage: precision layout differs from pyramid");
  if (static_cast<std::size_t>(prior_precision.size()) != r.layout.count()) {
    throw ShapeError("linear shrinkage: need one prior precision per subband");
  }
  RVector g = gamma.gammas.array() / (gamma.gammas.array() + prior_precision.array());
  return {scale_subbands(r, g), g};
}

inline WaveletDenoiser linear_shrinkage_denoiser(RVector prior_precision) {
  return [tau = std::move(prior_precision)](const WaveletPyramid& r, const PrecisionVector& gamma, std::uint64_t) {
    return subband_linear_shrinkage(r, gamma, tau);
  };
}

// ---------------------------------------------------------------------------
// Correlated noise

/// Psi^T n with n white in each subband, E|n_i|^2 = 1 / gamma_l.
inline ComplexImage sample_correlated_noise(const PrecisionVector& gamma, std::uint64_t seed) {
  gamma.validate("sample_correlated_noise");
  WaveletPyramid n(gamma.layout);
  Rng rng(derive_seed(seed, Stream::kDenoiserNoise));
  for (std::size_t l = 0; l < gamma.layout.count(); ++l) {
    n.band(l) = complex_gaussian(gamma.layout[l].size(), 1.0 / gamma[l], rng);
  }
  return idwt2_haar(n);
}

}  // namespace dgec
