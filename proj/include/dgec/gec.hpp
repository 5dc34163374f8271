#pragma once

// Wavelet-domain denoising GEC and its scalar special case EC/VAMP.
//
// One D-GEC iteration:
//   c1 = f1(r1, g1)                 eta1 = g1 / d1        g2 = eta1 - g1
//   r2 = (eta1 c1 - g1 r1) / g2
//   c2 = Psi f2(Psi^T r2, g2)       eta2 = g2 / d2        g1 = eta2 - g2
//   r1 = (eta2 c2 - g2 r2) / g1
// where d_i holds the per-subband average Jacobian diagonal of f_i.
//
// Seeds: probe vectors use derive_seed(seed, Stream::kProbe, {iteration, half, subband}),
// denoiser noise channels derive_seed(seed, Stream::kDenoiserNoise, {iteration}) and
// the initial perturbation derive_seed(seed, Stream::kInit).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dgec/cg.hpp"
#include "dgec/core.hpp"
#include "dgec/denoisers.hpp"
#include "dgec/diagnostics.hpp"
#include "dgec/forward_model.hpp"
#include "dgec/random.hpp"
#include "dgec/transforms.hpp"

namespace dgec {

enum class InitMode { kBhyPlusNoise, kBhyPlain };

/// How the per-subband trace of the f1 Jacobian is obtained.
enum class TraceMode {
  kMonteCarlo,  // finite-difference probe, delta^{-1} q^H [f(r + delta q) - f(r)]
  kJvp,         // same probe, Jacobian-vector product solved directly (f1 is affine)
  kExact,       // one solve per coefficient; small problems only
};

/// How the denoiser divergence is obtained.
enum class DivergenceMode { kAnalyticIfAvailable, kMonteCarlo };

inline InitMode parse_init_mode(const std::string& s) {
  if (s == "bhy_plus_noise") return InitMode::kBhyPlusNoise;
  if (s == "bhy_plain") return InitMode::kBhyPlain;
  throw ArgumentError("unknown init mode '" + s + "'");
}

inline TraceMode parse_trace_mode(const std::string& s) {
  if (s == "monte_carlo") return TraceMode::kMonteCarlo;
  if (s == "jvp") return TraceMode::kJvp;
  if (s == "exact") return TraceMode::kExact;
  throw ArgumentError("unknown trace mode '" + s + "'");
}

inline DivergenceMode parse_divergence_mode(const std::string& s) {
  if (s == "analytic") return DivergenceMode::kAnalyticIfAvailable;
  if (s == "monte_carlo") return DivergenceMode::kMonteCarlo;
  throw ArgumentError("unknown divergence mode '" + s + "'");
}

struct SolverConfig {
  int max_iters = 20;
  int cg_iters = 10;
  double damping_rho = 0.3;
  int depth = 4;
  double clip_low = 1e-8;    // precisions clipped to [clip_low * eta, clip_high * eta]
  double clip_high = 0.999;
  InitMode init_mode = InitMode::kBhyPlain;
  double init_inflation = 10.0;
  double tolerance = 1e-5;   // relative change of x2; 0 disables early stopping
  TraceMode f1_trace = TraceMode::kJvp;
  DivergenceMode f2_divergence = DivergenceMode::kAnalyticIfAvailable;
  int threads = 1;           // concurrent probe evaluations
  bool auto_tune = false;    // reserved; not implemented

  void validate() const {
    if (max_iters < 0) throw ArgumentError("max_iters must be nonnegative");
    if (cg_iters < 1) throw ArgumentError("cg_iters must be at least 1");
    if (!(damping_rho > 0.0 && damping_rho <= 1.0)) throw ArgumentError("damping_rho must lie in (0, 1]");
    if (depth < 0) throw ArgumentError("depth must be nonnegative");
    if (!(clip_low > 0.0 && clip_low < clip_high && clip_high < 1.0)) {
      throw ArgumentError("precision clip bounds must satisfy 0 < low < high < 1");
    }
    if (!(init_inflation >= 0.0)) throw ArgumentError("init_inflation must be nonnegative");
    if (threads < 1) throw ArgumentError("threads must be at least 1");
    if (auto_tune) throw ArgumentError("precision auto-tuning is not implemented");
  }
};

struct GecState {
  WaveletPyramid r1, r2, c1_hat, c2_hat;
  PrecisionVector gamma1, gamma2, eta1, eta2;
  int iteration = 0;
};

// ---------------------------------------------------------------------------
// gdiag and trace estimation

/// [d_1 1_{N_1}; ...; d_L 1_{N_L}] with d_l = trace_l / N_l.
inline RVector gdiag_from_traces(const RVector& traces, const SubbandLayout& layout) {
  if (static_cast<std::size_t>(traces.size()) != layout.count()) throw ShapeError("gdiag: one trace per subband");
  if (!traces.allFinite()) throw ArgumentError("gdiag: non-finite trace");
  RVector out(static_cast<Eigen::Index>(layout.total_size()));
  for (std::size_t l = 0; l < layout.count(); ++l) {
    const Subband& s = layout[l];
    out.segment(static_cast<Eigen::Index>(s.offset), static_cast<Eigen::Index>(s.size()))
        .setConstant(traces[static_cast<Eigen::Index>(l)] / static_cast<double>(s.size()));
  }
  return out;
}

/// Per-subband average divergence d_l = trace_l / N_l.
inline RVector subband_averages(const RVector& traces, const SubbandLayout& layout) {
  RVector d(traces.size());
  for (std::size_t l = 0; l < layout.count(); ++l) {
    d[static_cast<Eigen::Index>(l)] = traces[static_cast<Eigen::Index>(l)] / static_cast<double>(layout[l].size());
  }
  return d;
}

/// Unit-variance complex probe supported on subband ell.
inline WaveletPyramid subband_probe(const SubbandLayout& layout, std::size_t ell, std::uint64_t seed) {
  WaveletPyramid q(layout);
  Rng rng(seed);
  q.band(ell) = complex_gaussian(layout[ell].size(), 1.0, rng);
  return q;
}

/// Probe step min(sqrt(1/gamma_l), |r_l|_1 / N_l), falling back to the first
/// term when subband ell of r is zero.
inline double probe_step(const WaveletPyramid& r, const PrecisionVector& gamma, std::size_t ell) {
  const double sd = std::sqrt(1.0 / gamma[ell]);
  const double mean_abs = r.band(ell).cwiseAbs().sum() / static_cast<double>(r.layout[ell].size());
  return mean_abs > 0.0 ? std::min(sd, mean_abs) : sd;
}

using PyramidMap = std::function<WaveletPyramid(const WaveletPyramid&)>;

/// Monte-Carlo estimate of tr(Q_ll), reusing a precomputed f(r).
inline double mc_subband_trace(const PyramidMap& f, const WaveletPyramid& r, const WaveletPyramid& f_r,
                               const PrecisionVector& gamma, std::size_t ell, std::uint64_t seed) {
  if (ell >= r.layout.count()) throw ArgumentError("mc_subband_trace: subband index out of range");
  const WaveletPyramid q = subband_probe(r.layout, ell, seed);
  const double delta = probe_step(r, gamma, ell);
  WaveletPyramid shifted = r;
  shifted.coeffs += delta * q.coeffs;
  const WaveletPyramid f_shift = f(shifted);
  require_same_layout(f_shift, r, "mc_subband_trace");
  return q.coeffs.dot(f_shift.coeffs - f_r.coeffs).real() / delta;
}

inline double mc_subband_trace(const PyramidMap& f, const WaveletPyramid& r, const PrecisionVector& gamma,
                               std::size_t ell, std::uint64_t seed) {
  return mc_subband_trace(f, r, f(r), gamma, ell, seed);
}

inline std::uint64_t probe_seed(std::uint64_t seed, int iteration, int half, std::size_t ell) {
  return derive_seed(seed, Stream::kProbe,
                     {static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(half), ell});
}

namespace detail {

/// Evaluates fn(l) for l in [0, count), concurrently when threads > 1.
inline RVector parallel_over_subbands(std::size_t count, int threads, const std::function<double(std::size_t)>& fn) {
  RVector out(static_cast<Eigen::Index>(count));
  if (threads <= 1) {
    for (std::size_t l = 0; l < count; ++l) out[static_cast<Eigen::Index>(l)] = fn(l);
    return out;
  }
  for (std::size_t start = 0; start < count; start += static_cast<std::size_t>(threads)) {
    std::vector<std::future<double>> jobs;
    const std::size_t stop = std::min(count, start + static_cast<std::size_t>(threads));
    for (std::size_t l = start; l < stop; ++l) jobs.push_back(std::async(std::launch::async, fn, l));
    for (std::size_t l = start; l < stop; ++l) out[static_cast<Eigen::Index>(l)] = jobs[l - start].get();
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Measurement fidelity f1

/// f1(r1, g1) = (gw B^H B + Diag(g1))^{-1} (gw B^H y + Diag(g1) r1) together
/// with its per-subband divergence.
class Fidelity {
 public:
  virtual ~Fidelity() = default;
  virtual const SubbandLayout& layout() const = 0;
  virtual WaveletPyramid estimate(const WaveletPyramid& r1, const PrecisionVector& g1) const = 0;
  /// Per-subband divergences d_l = tr(Q_ll) / N_l at (r1, g1); c1 = estimate(r1, g1).
  virtual RVector divergence(const WaveletPyramid& r1, const PrecisionVector& g1, const WaveletPyramid& c1,
                             int iteration, std::uint64_t seed, int threads) const = 0;
  /// B^H y.
  virtual const WaveletPyramid& bhy() const = 0;
};

/// f1 by conjugate gradients on the fast operator B.
inline WaveletPyramid f1_cg(const WaveletPyramid& r1, const PrecisionVector& gamma1, const CVector& y,
                            const ForwardModel& fm, double gamma_w, int cg_iters) {
  if (r1.layout != fm.layout || gamma1.layout != fm.layout) throw ShapeError("f1_cg: layout mismatch");
  gamma1.validate("f1_cg");
  if (gamma_w == 0.0) return r1;
  const RVector g = gamma1.expand();
  const CVector rhs = gamma_w * apply_BH(y, fm).coeffs + g.cwiseProduct(r1.coeffs);
  auto op = [&](const CVector& c) -> CVector {
    return gamma_w * apply_BHB(WaveletPyramid(fm.layout, c), fm).coeffs + g.cwiseProduct(c);
  };
  return WaveletPyramid(fm.layout, conjugate_gradient(op, rhs, r1.coeffs, cg_iters).x);
}

class CgFidelity final : public Fidelity {
 public:
  CgFidelity(std::shared_ptr<const ForwardModel> fm, CVector y, double gamma_w, int cg_iters, TraceMode mode)
      : fm_(std::move(fm)), y_(std::move(y)), gamma_w_(gamma_w), cg_iters_(cg_iters), mode_(mode) {
    if (static_cast<std::size_t>(y_.size()) != fm_->measurements()) throw ShapeError("CgFidelity: y has the wrong length");
    if (!(gamma_w >= 0.0)) throw ArgumentError("CgFidelity: gamma_w must be nonnegative");
    bhy_ = apply_BH(y_, *fm_);
  }

  const SubbandLayout& layout() const override { return fm_->layout; }
  const WaveletPyramid& bhy() const override { return bhy_; }
  const ForwardModel& model() const { return *fm_; }
  double gamma_w() const { return gamma_w_; }

  WaveletPyramid estimate(const WaveletPyramid& r1, const PrecisionVector& g1) const override {
    if (r1.layout != layout() || g1.layout != layout()) throw ShapeError("f1: layout mismatch");
    g1.validate("f1");
    if (gamma_w_ == 0.0) return r1;
    const RVector g = g1.expand();
    const CVector rhs = gamma_w_ * bhy_.coeffs + g.cwiseProduct(r1.coeffs);
    return WaveletPyramid(layout(), solve(g, rhs, r1.coeffs));
  }

  RVector divergence(const WaveletPyramid& r1, const PrecisionVector& g1, const WaveletPyramid& c1, int iteration,
                     std::uint64_t seed, int threads) const override {
    const SubbandLayout& lay = layout();
    if (gamma_w_ == 0.0) return RVector::Ones(static_cast<Eigen::Index>(lay.count()));
    const RVector g = g1.expand();
    RVector traces;
    switch (mode_) {
      case TraceMode::kMonteCarlo: {
        PyramidMap f = [&](const WaveletPyramid& r) { return estimate(r, g1); };
        traces = detail::parallel_over_subbands(lay.count(), threads, [&](std::size_t l) {
          return mc_subband_trace(f, r1, c1, g1, l, probe_seed(seed, iteration, 1, l));
        });
        break;
      }
      case TraceMode::kJvp:
        traces = detail::parallel_over_subbands(lay.count(), threads, [&](std::size_t l) {
          const WaveletPyramid q = subband_probe(lay, l, probe_seed(seed, iteration, 1, l));
          const CVector z = solve(g, g.cwiseProduct(q.coeffs), CVector::Zero(q.coeffs.size()));
          return q.coeffs.dot(z).real();
        });
        break;
      case TraceMode::kExact: {
        traces = RVector::Zero(static_cast<Eigen::Index>(lay.count()));
        const auto n = static_cast<Eigen::Index>(lay.total_size());
        for (Eigen::Index i = 0; i < n; ++i) {
          CVector e = CVector::Zero(n);
          e[i] = g[i];
          const CVector z = solve(g, e, CVector::Zero(n));
          traces[static_cast<Eigen::Index>(lay.subband_of(static_cast<std::size_t>(i)))] += z[i].real();
        }
        break;
      }
    }
    return subband_averages(traces, lay);
  }

 private:
  CVector solve(const RVector& g, const CVector& rhs, CVector x0) const {
    auto op = [&](const CVector& c) -> CVector {
      return gamma_w_ * apply_BHB(WaveletPyramid(layout(), c), *fm_).coeffs + g.cwiseProduct(c);
    };
    return conjugate_gradient(op, rhs, std::move(x0), cg_iters_).x;
  }

  std::shared_ptr<const ForwardModel> fm_;
  CVector y_;
  double gamma_w_;
  int cg_iters_;
  TraceMode mode_;
  WaveletPyramid bhy_;
};

/// f1 with an explicit matrix B (wavelet domain to measurements), solved
/// directly with exact block traces. Intended for small problems.
class DenseFidelity final : public Fidelity {
 public:
  DenseFidelity(SubbandLayout layout, CMatrix B, CVector y, double gamma_w)
      : layout_(std::move(layout)), B_(std::move(B)), y_(std::move(y)), gamma_w_(gamma_w) {
    if (static_cast<std::size_t>(B_.cols()) != layout_.total_size()) throw ShapeError("DenseFidelity: B has the wrong width");
    if (B_.rows() != y_.size()) throw ShapeError("DenseFidelity: y does not match B");
    bhb_ = B_.adjoint() * B_;
    bhy_ = WaveletPyramid(layout_, B_.adjoint() * y_);
  }

  const SubbandLayout& layout() const override { return layout_; }
  const WaveletPyramid& bhy() const override { return bhy_; }

  WaveletPyramid estimate(const WaveletPyramid& r1, const PrecisionVector& g1) const override {
    g1.validate("dense f1");
    const RVector g = g1.expand();
    const CVector rhs = gamma_w_ * bhy_.coeffs + g.cwiseProduct(r1.coeffs);
    return WaveletPyramid(layout_, system(g).llt().solve(rhs));
  }

  RVector divergence(const WaveletPyramid&, const PrecisionVector& g1, const WaveletPyramid&, int, std::uint64_t,
                     int) const override {
    const RVector g = g1.expand();
    const CMatrix Q = system(g).llt().solve(CMatrix(g.cast<cplx>().asDiagonal()));
    RVector traces = RVector::Zero(static_cast<Eigen::Index>(layout_.count()));
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
      traces[static_cast<Eigen::Index>(layout_.subband_of(static_cast<std::size_t>(i)))] += Q(i, i).real();
    }
    return subband_averages(traces, layout_);
  }

 private:
  CMatrix system(const RVector& g) const {
    CMatrix S = gamma_w_ * bhb_;
    S.diagonal() += g.cast<cplx>();
    return S;
  }

  SubbandLayout layout_;
  CMatrix B_;
  CVector y_;
  double gamma_w_;
  CMatrix bhb_;
  WaveletPyramid bhy_;
};

/// Dense matrix of B = A Psi^T, built column by column. Small models only.
inline CMatrix dense_B(const ForwardModel& fm) {
  const std::size_t n = fm.layout.total_size();
  CMatrix B(static_cast<Eigen::Index>(fm.measurements()), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    WaveletPyramid e(fm.layout);
    e.coeffs[static_cast<Eigen::Index>(j)] = 1.0;
    B.col(static_cast<Eigen::Index>(j)) = apply_B(e, fm);
  }
  return B;
}

// ---------------------------------------------------------------------------
// Denoiser divergence

inline RVector denoiser_divergence(const WaveletDenoiser& f2, const WaveletPyramid& r2, const PrecisionVector& g2,
                                   const DenoiserResult& base, std::uint64_t denoiser_seed, int iteration,
                                   std::uint64_t seed, const SolverConfig& cfg) {
  if (cfg.f2_divergence == DivergenceMode::kAnalyticIfAvailable && base.subband_divergence) {
    return *base.subband_divergence;
  }
  PyramidMap f = [&](const WaveletPyramid& r) { return f2(r, g2, denoiser_seed).estimate; };
  const RVector traces = detail::parallel_over_subbands(r2.layout.count(), cfg.threads, [&](std::size_t l) {
    return mc_subband_trace(f, r2, base.estimate, g2, l, probe_seed(seed, iteration, 2, l));
  });
  return subband_averages(traces, r2.layout);
}

// ---------------------------------------------------------------------------
// Precision bookkeeping

/// Extrinsic update: eta = gamma / d, gamma_out = clip(eta - gamma),
/// r_out = (eta xhat - gamma r) / gamma_out, per subband.
inline void extrinsic_update(const WaveletPyramid& xhat, const WaveletPyramid& r, const PrecisionVector& gamma,
                             RVector d, const SolverConfig& cfg, PrecisionVector& eta, PrecisionVector& gamma_out,
                             WaveletPyramid& r_out) {
  const SubbandLayout& lay = r.layout;
  d = d.cwiseMax(1e-15);
  eta = PrecisionVector(lay, gamma.gammas.cwiseQuotient(d));
  RVector g_new = eta.gammas - gamma.gammas;
  for (Eigen::Index l = 0; l < g_new.size(); ++l) {
    g_new[l] = std::clamp(g_new[l], cfg.clip_low * eta.gammas[l], cfg.clip_high * eta.gammas[l]);
  }
  gamma_out = PrecisionVector(lay, g_new);
  r_out = WaveletPyramid(lay);
  for (std::size_t l = 0; l < lay.count(); ++l) {
    r_out.band(l) = (eta[l] * xhat.band(l) - gamma[l] * r.band(l)) / g_new[static_cast<Eigen::Index>(l)];
  }
}

/// r <- rho r_new + (1 - rho) r_old; log gamma <- rho log gamma_new + (1 - rho) log gamma_old.
inline void damp(WaveletPyramid& r_new, PrecisionVector& g_new, const WaveletPyramid& r_old,
                 const PrecisionVector& g_old, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ArgumentError("damping factor must lie in (0, 1]");
  if (rho == 1.0) return;
  r_new.coeffs = rho * r_new.coeffs + (1.0 - rho) * r_old.coeffs;
  for (Eigen::Index l = 0; l < g_new.gammas.size(); ++l) {
    g_new.gammas[l] = std::exp(rho * std::log(g_new.gammas[l]) + (1.0 - rho) * std::log(g_old.gammas[l]));
  }
}

/// Damps both extrinsic messages of a state toward a previous state.
inline GecState damp(GecState next, const GecState& old, double rho) {
  damp(next.r1, next.gamma1, old.r1, old.gamma1, rho);
  damp(next.r2, next.gamma2, old.r2, old.gamma2, rho);
  return next;
}

// ---------------------------------------------------------------------------
// Initialization

/// Per-subband mean |B^H y - c0|^2 over a calibration set.
struct CalibrationStats {
  RVector subband_variance;
  std::size_t samples = 0;
};

inline CalibrationStats calibration_from_pairs(const std::vector<WaveletPyramid>& bhy,
                                               const std::vector<WaveletPyramid>& c0) {
  if (bhy.empty() || bhy.size() != c0.size()) throw ArgumentError("calibration needs matching, nonempty sets");
  const SubbandLayout& lay = bhy.front().layout;
  CalibrationStats s{RVector::Zero(static_cast<Eigen::Index>(lay.count())), bhy.size()};
  for (std::size_t k = 0; k < bhy.size(); ++k) {
    require_same_layout(bhy[k], c0[k], "calibration");
    for (std::size_t l = 0; l < lay.count(); ++l) {
      s.subband_variance[static_cast<Eigen::Index>(l)] +=
          (bhy[k].band(l) - c0[k].band(l)).squaredNorm() / static_cast<double>(lay[l].size());
    }
  }
  s.subband_variance /= static_cast<double>(bhy.size());
  return s;
}

/// r1 = B^H y + n with n white per subband of variance inflation * v_l
/// (bhy_plus_noise) or n = 0 (bhy_plain); gamma1 = 1 / E|r1 - c0|^2 per subband.
inline GecState init_state(const Fidelity& f1, const SolverConfig& cfg, const std::optional<CalibrationStats>& calib,
                           std::uint64_t seed) {
  const SubbandLayout& lay = f1.layout();
  GecState st;
  st.r1 = f1.bhy();
  RVector v(static_cast<Eigen::Index>(lay.count()));
  if (calib) {
    if (static_cast<std::size_t>(calib->subband_variance.size()) != lay.count()) {
      throw ShapeError("calibration statistics do not match the subband layout");
    }
    v = calib->subband_variance;
  } else {
    if (cfg.init_mode == InitMode::kBhyPlusNoise) {
      throw ArgumentError("bhy_plus_noise initialization needs calibration statistics");
    }
    // Without calibration data the per-subband energy of B^H y stands in for the error variance.
    for (std::size_t l = 0; l < lay.count(); ++l) {
      v[static_cast<Eigen::Index>(l)] = st.r1.band(l).squaredNorm() / static_cast<double>(lay[l].size());
    }
  }
  const double floor = std::max(v.maxCoeff(), 1e-300) * 1e-12;
  v = v.cwiseMax(floor);
  if (cfg.init_mode == InitMode::kBhyPlusNoise) {
    Rng rng(derive_seed(seed, Stream::kInit));
    for (std::size_t l = 0; l < lay.count(); ++l) {
      st.r1.band(l) += complex_gaussian(lay[l].size(), cfg.init_inflation * v[static_cast<Eigen::Index>(l)], rng);
    }
    v *= 1.0 + cfg.init_inflation;
  }
  st.gamma1 = PrecisionVector(lay, v.cwiseInverse());
  st.gamma2 = st.gamma1;
  st.eta1 = st.eta2 = st.gamma1;
  st.r2 = st.c1_hat = st.c2_hat = WaveletPyramid(lay);
  st.iteration = 0;
  return st;
}

// ---------------------------------------------------------------------------
// Iteration

/// One full D-GEC iteration (measurement fidelity, then denoising).
inline GecState dgec_iterate(const GecState& state, const Fidelity& f1, const WaveletDenoiser& f2,
                             const SolverConfig& cfg, std::uint64_t seed) {
  const int it = state.iteration;
  GecState next = state;
  try {
    next.c1_hat = f1.estimate(state.r1, state.gamma1);
    const RVector d1 = f1.divergence(state.r1, state.gamma1, next.c1_hat, it, seed, cfg.threads);
    extrinsic_update(next.c1_hat, state.r1, state.gamma1, d1, cfg, next.eta1, next.gamma2, next.r2);
    if (it > 0) damp(next.r2, next.gamma2, state.r2, state.gamma2, cfg.damping_rho);
  } catch (const Error& e) {
    throw NumericalError("iteration " + std::to_string(it + 1) + ", measurement step: " + e.what());
  }
  try {
    const std::uint64_t dseed = derive_seed(seed, Stream::kDenoiserNoise, {static_cast<std::uint64_t>(it)});
    DenoiserResult res = f2(next.r2, next.gamma2, dseed);
    require_same_layout(res.estimate, next.r2, "denoiser output");
    if (!res.estimate.coeffs.allFinite()) throw NumericalError("denoiser output is not finite");
    const RVector d2 = denoiser_divergence(f2, next.r2, next.gamma2, res, dseed, it, seed, cfg);
    next.c2_hat = std::move(res.estimate);
    extrinsic_update(next.c2_hat, next.r2, next.gamma2, d2, cfg, next.eta2, next.gamma1, next.r1);
    if (it > 0) damp(next.r1, next.gamma1, state.r1, state.gamma1, cfg.damping_rho);
  } catch (const Error& e) {
    throw NumericalError("iteration " + std::to_string(it + 1) + ", denoising step: " + e.what());
  }
  next.iteration = it + 1;
  return next;
}

/// One row per iteration.
struct IterationRecord {
  int iteration = 0;
  double psnr = std::numeric_limits<double>::quiet_NaN();
  double relative_change = std::numeric_limits<double>::quiet_NaN();
  double residual_norm = std::numeric_limits<double>::quiet_NaN();
  RVector predicted_sd;   // 1 / sqrt(gamma2)
  RVector empirical_sd;   // RMS of r2 - c0 per subband (empty without ground truth)
};

struct IterationDiagnostics {
  std::vector<IterationRecord> rows;
  std::size_t size() const { return rows.size(); }
};

struct GecResult {
  ComplexImage image;
  IterationDiagnostics diagnostics;
  GecState state;
  bool converged = false;
};

/// Optional ground truth and support for diagnostics.
struct GroundTruth {
  ComplexImage x0;
  WaveletPyramid c0;
  std::vector<std::uint8_t> coefficient_support;  // empty: every coefficient
};

inline RVector empirical_subband_sd(const WaveletPyramid& r, const WaveletPyramid& c0,
                                    const std::vector<std::uint8_t>& support) {
  const SubbandLayout& lay = r.layout;
  RVector sd(static_cast<Eigen::Index>(lay.count()));
  for (std::size_t l = 0; l < lay.count(); ++l) {
    const Subband& s = lay[l];
    double acc = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = s.offset; i < s.offset + s.size(); ++i) {
      if (!support.empty() && !support[i]) continue;
      acc += std::norm(r.coeffs[static_cast<Eigen::Index>(i)] - c0.coeffs[static_cast<Eigen::Index>(i)]);
      ++cnt;
    }
    sd[static_cast<Eigen::Index>(l)] = cnt ? std::sqrt(acc / static_cast<double>(cnt)) : std::numeric_limits<double>::quiet_NaN();
  }
  return sd;
}

using IterationObserver = std::function<void(const GecState&, const IterationRecord&)>;

/// Runs D-GEC from init_state until max_iters or convergence. The returned
/// image is zeroed outside `pixel_support` when one is given.
inline GecResult run_dgec(const Fidelity& f1, const WaveletDenoiser& f2, const SolverConfig& cfg,
                          const std::optional<CalibrationStats>& calib, std::uint64_t seed,
                          const GroundTruth* truth = nullptr, const std::vector<std::uint8_t>& pixel_support = {},
                          const IterationObserver& observer = {}, const ForwardModel* fm = nullptr,
                          const CVector* y = nullptr) {
  cfg.validate();
  GecResult out;
  out.state = init_state(f1, cfg, calib, seed);
  ComplexImage prev;
  for (int k = 0; k < cfg.max_iters; ++k) {
    out.state = dgec_iterate(out.state, f1, f2, cfg, seed);
    ComplexImage x = idwt2_haar(out.state.c2_hat);
    if (!pixel_support.empty()) x = restrict_to_support(std::move(x), pixel_support);
    IterationRecord rec;
    rec.iteration = out.state.iteration;
    rec.predicted_sd = out.state.gamma2.gammas.cwiseInverse().cwiseSqrt();
    if (prev.size() == x.size() && prev.size() > 0) {
      const double pn = prev.data.norm();
      rec.relative_change = pn > 0.0 ? (x.data - prev.data).norm() / pn : (x.data.norm() > 0.0 ? 1.0 : 0.0);
    }
    if (fm != nullptr && y != nullptr) rec.residual_norm = (*y - apply_B(out.state.c2_hat, *fm)).norm();
    if (truth != nullptr) {
      rec.psnr = psnr(x, truth->x0);
      rec.empirical_sd = empirical_subband_sd(out.state.r2, truth->c0, truth->coefficient_support);
    }
    out.diagnostics.rows.push_back(rec);
    if (observer) observer(out.state, rec);
    prev = x;
    out.image = std::move(x);
    if (cfg.tolerance > 0.0 && std::isfinite(rec.relative_change) && rec.relative_change < cfg.tolerance) {
      out.converged = true;
      break;
    }
  }
  if (cfg.max_iters == 0) {
    out.image = idwt2_haar(out.state.r1);
    if (!pixel_support.empty()) out.image = restrict_to_support(std::move(out.image), pixel_support);
  }
  return out;
}

// ---------------------------------------------------------------------------
// EC / VAMP with scalar precisions

struct EcState {
  CVector r1, r2, x1, x2;
  double gamma1 = 1.0, gamma2 = 1.0, eta1 = 1.0, eta2 = 1.0;
  int iteration = 0;
};

/// Estimator x = f(r, gamma) with its average divergence.
struct ScalarEstimator {
  std::function<CVector(const CVector& r, double gamma)> apply;
  std::function<double(const CVector& r, double gamma)> divergence;
};

struct EcOptions {
  double damping_rho = 1.0;
  double clip_low = 1e-8;
  double clip_high = 0.999;
  bool freeze_precisions = false;  // keep gamma1, gamma2 fixed and eta = gamma1 + gamma2
};

/// One scalar EC iteration.
inline EcState ec_iterate(const EcState& s, const ScalarEstimator& f1, const ScalarEstimator& f2,
                          const EcOptions& opt = {}) {
  EcState n = s;
  auto half = [&](const ScalarEstimator& f, const CVector& r, double gamma, double gamma_other_old,
                  const CVector& r_other_old, CVector& xhat, double& eta, double& gamma_out, CVector& r_out) {
    xhat = f.apply(r, gamma);
    if (opt.freeze_precisions) {
      eta = gamma + gamma_other_old;
      gamma_out = gamma_other_old;
    } else {
      const double d = std::max(f.divergence(r, gamma), 1e-15);
      eta = gamma / d;
      gamma_out = std::clamp(eta - gamma, opt.clip_low * eta, opt.clip_high * eta);
    }
    r_out = (eta * xhat - gamma * r) / gamma_out;
    if (s.iteration > 0 && opt.damping_rho < 1.0) {
      r_out = opt.damping_rho * r_out + (1.0 - opt.damping_rho) * r_other_old;
      gamma_out = std::exp(opt.damping_rho * std::log(gamma_out) + (1.0 - opt.damping_rho) * std::log(gamma_other_old));
    }
  };
  half(f1, s.r1, s.gamma1, s.gamma2, s.r2, n.x1, n.eta1, n.gamma2, n.r2);
  half(f2, n.r2, n.gamma2, s.gamma1, s.r1, n.x2, n.eta2, n.gamma1, n.r1);
  n.iteration = s.iteration + 1;
  return n;
}

}  // namespace dgec
