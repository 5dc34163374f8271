#pragma once

// Verification suites run by `dgec verify` and by the acceptance binary.
// Each check returns one pass/fail line with the measured numbers.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dgec/commands.hpp"
#include "dgec/oracle.hpp"

namespace dgec {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct SuiteBudget {
  std::size_t weingarten_trials = 100000;
  std::size_t epsilon2_trials = 20000;
  std::size_t scaling_trials = 20000;
  int se_seeds = 20;
  int stats_trials = 20;
  int recovery_seeds = 5;
};

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

template <class Fn>
CheckResult timed(int id, const std::string& name, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = fn();
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.id = id;
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Dense one-level 2D Haar analysis on an h x w grid, rows ordered LL, LH, HL, HH
/// (each band row-major), built from index arithmetic.
inline RMatrix haar_level_matrix(std::size_t h, std::size_t w) {
  const std::size_t hh = h / 2, hw = w / 2, q = hh * hw;
  RMatrix M = RMatrix::Zero(static_cast<Eigen::Index>(h * w), static_cast<Eigen::Index>(h * w));
  const double sgn[4][4] = {{1, 1, 1, 1}, {1, -1, 1, -1}, {1, 1, -1, -1}, {1, -1, -1, 1}};
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t i = 0; i < hh; ++i) {
      for (std::size_t j = 0; j < hw; ++j) {
        const auto row = static_cast<Eigen::Index>(b * q + i * hw + j);
        const std::size_t px[4] = {2 * i * w + 2 * j, 2 * i * w + 2 * j + 1, (2 * i + 1) * w + 2 * j,
                                   (2 * i + 1) * w + 2 * j + 1};
        for (int k = 0; k < 4; ++k) M(row, static_cast<Eigen::Index>(px[k])) = 0.5 * sgn[b][k];
      }
    }
  }
  return M;
}

/// Full depth-D analysis matrix: recursion on the leading LL block.
inline RMatrix haar_matrix(std::size_t h, std::size_t w, int depth) {
  const auto n = static_cast<Eigen::Index>(h * w);
  RMatrix W = RMatrix::Identity(n, n);
  std::size_t ch = h, cw = w;
  for (int d = 0; d < depth; ++d) {
    RMatrix step = RMatrix::Identity(n, n);
    const auto m = static_cast<Eigen::Index>(ch * cw);
    step.topLeftCorner(m, m) = haar_level_matrix(ch, cw);
    W = step * W;
    ch /= 2;
    cw /= 2;
  }
  return W;
}

inline CMatrix dft_matrix_1d(std::size_t n) {
  CMatrix F(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      F(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = std::polar(1.0 / std::sqrt(static_cast<double>(n)), ang);
    }
  }
  return F;
}

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// 1. transforms

inline CheckResult check_transforms(std::uint64_t seed) {
  return detail::timed(1, "transforms", [&] {
    Rng rng(derive_seed(seed, Stream::kOracle, {100}));
    const std::size_t shapes[][3] = {{8, 8, 3}, {16, 32, 4}, {64, 64, 6}, {48, 80, 4}, {128, 128, 4}};
    double dft_rt = 0.0, dft_norm = 0.0, haar_rt = 0.0, haar_norm = 0.0;
    for (int k = 0; k < 100; ++k) {
      const auto& s = shapes[k % 5];
      const ComplexImage x(s[0], s[1], complex_gaussian(s[0] * s[1], 1.0, rng));
      const double nx = x.data.norm();
      const ComplexImage X = dft2(x);
      dft_rt = std::max(dft_rt, (idft2(X).data - x.data).norm() / nx);
      dft_norm = std::max(dft_norm, std::abs(X.data.norm() - nx) / nx);
      const WaveletPyramid c = dwt2_haar(x, static_cast<int>(s[2]));
      haar_rt = std::max(haar_rt, (idwt2_haar(c).data - x.data).norm() / nx);
      haar_norm = std::max(haar_norm, std::abs(c.coeffs.norm() - nx) / nx);
    }
    // Dense 8x8 equivalence.
    const std::size_t n = 8;
    const CMatrix F = detail::kron(detail::dft_matrix_1d(n), detail::dft_matrix_1d(n));
    const RMatrix W = detail::haar_matrix(n, n, 3);
    double dft_dense = 0.0, haar_dense = 0.0;
    for (std::size_t j = 0; j < n * n; ++j) {
      ComplexImage e(n, n);
      e.data[static_cast<Eigen::Index>(j)] = 1.0;
      dft_dense = std::max(dft_dense, (dft2(e).data - F.col(static_cast<Eigen::Index>(j))).cwiseAbs().maxCoeff());
      const CVector wc = W.col(static_cast<Eigen::Index>(j)).cast<cplx>();
      haar_dense = std::max(haar_dense, (dwt2_haar(e, 3).coeffs - wc).cwiseAbs().maxCoeff());
    }
    const double orth = (W.transpose() * W - RMatrix::Identity(64, 64)).cwiseAbs().maxCoeff();
    CheckResult r;
    r.passed = dft_rt <= 1e-12 && dft_norm <= 1e-12 && haar_rt <= 1e-12 && haar_norm <= 1e-12 && dft_dense <= 1e-10 &&
               haar_dense <= 1e-10 && orth <= 1e-10;
    r.detail = "dft round trip " + detail::fmt("%.2e", dft_rt) + ", dft norm " + detail::fmt("%.2e", dft_norm) +
               ", haar round trip " + detail::fmt("%.2e", haar_rt) + ", haar norm " + detail::fmt("%.2e", haar_norm) +
               ", dense dft " + detail::fmt("%.2e", dft_dense) + ", dense haar " + detail::fmt("%.2e", haar_dense);
    return r;
  });
}

// ---------------------------------------------------------------------------
// 2. EC error recursion

inline CheckResult check_ec_recursion(std::uint64_t seed) {
  return detail::timed(2, "ec error recursion", [&] {
    Rng rng(derive_seed(seed, Stream::kOracle, {200}));
    std::uniform_int_distribution<int> dim(8, 64);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double worst = 0.0, worst_trace = 0.0;
    for (int k = 0; k < 20; ++k) {
      const int N = dim(rng);
      const int M = std::max(4, static_cast<int>(N * (0.5 + unif(rng))));
      const RMatrix A = RMatrix::NullaryExpr(M, N, [&] { return std::normal_distribution<double>(0.0, 1.0 / std::sqrt(M))(rng); });
      const double gamma1 = std::pow(10.0, -1.0 + 2.0 * unif(rng));
      const double gamma_w = std::pow(10.0, 3.0 * unif(rng));
      const RVector x0 = real_gaussian(static_cast<std::size_t>(N), 1.0, rng);
      const RVector e1 = real_gaussian(static_cast<std::size_t>(N), 1.0 / gamma1, rng);
      const RVector w = real_gaussian(static_cast<std::size_t>(M), 1.0 / gamma_w, rng);
      worst = std::max(worst, ec_recursion_equivalence(A, gamma1, gamma_w, x0, e1, w));
      worst_trace = std::max(worst_trace, std::abs(build_ec_error_model(A, gamma1, gamma_w).trace_D()));
    }
    CheckResult r;
    r.passed = worst <= 1e-10 && worst_trace <= 1e-10;
    r.detail = "max |e2 direct - e2 model| " + detail::fmt("%.2e", worst) + ", max |tr D| " + detail::fmt("%.2e", worst_trace) +
               " over 20 instances";
    return r;
  });
}

// ---------------------------------------------------------------------------
// 3. orthogonal-matrix moments and epsilon_2

/// Spectrum used by the epsilon_2 checks: log-uniform over four decades.
inline RVector epsilon2_test_spectrum(std::size_t N) {
  RVector lambda(static_cast<Eigen::Index>(N));
  for (std::size_t n = 0; n < N; ++n) lambda[static_cast<Eigen::Index>(n)] = std::pow(10.0, -2.0 + 4.0 * (n + 0.5) / N);
  return lambda;
}

inline CheckResult check_orthogonal_moments(std::uint64_t seed, const SuiteBudget& b = {}) {
  return detail::timed(3, "orthogonal moments and epsilon2", [&] {
    const double gamma1 = 1.0, gamma_w = 100.0, eps1 = 4.0;
    const MomentReport mom = weingarten_moment_check(8, b.weingarten_trials, seed);
    const Epsilon2Report e128 =
        epsilon2_covariance_check(epsilon2_test_spectrum(128), gamma1, gamma_w, eps1, b.epsilon2_trials, seed);
    const Epsilon2Report e64 =
        epsilon2_covariance_check(epsilon2_test_spectrum(64), gamma1, gamma_w, eps1, b.scaling_trials, seed + 1);
    const Epsilon2Report e256 =
        epsilon2_covariance_check(epsilon2_test_spectrum(256), gamma1, gamma_w, eps1, b.scaling_trials, seed + 2);
    const double r1 = e64.offdiag_coefficient / e128.offdiag_coefficient;
    const double r2 = e128.offdiag_coefficient / e256.offdiag_coefficient;
    const bool moments_ok = mom.max_relative_deviation() <= 0.05;
    const bool diag_ok = e128.diagonal_relative_error() <= 0.05 && std::abs(e128.grand_mean_z) <= 3.0;
    const bool scaling_ok = r1 >= 2.0 / 1.5 && r1 <= 2.0 * 1.5 && r2 >= 2.0 / 1.5 && r2 <= 2.0 * 1.5;
    CheckResult r;
    r.passed = moments_ok && diag_ok && scaling_ok;
    std::ostringstream os;
    os << "fourth moments max rel dev " << detail::fmt("%.4f", mom.max_relative_deviation()) << "; eps2 "
       << detail::fmt("%.4g", e128.epsilon2) << " vs diag " << detail::fmt("%.4g", e128.mean_diagonal) << " (rel "
       << detail::fmt("%.3f", e128.diagonal_relative_error()) << "), mean z " << detail::fmt("%.2f", e128.grand_mean_z)
       << "; off-diagonal coefficient N=64/128/256 " << detail::fmt("%.4g", e64.offdiag_coefficient) << "/"
       << detail::fmt("%.4g", e128.offdiag_coefficient) << "/" << detail::fmt("%.4g", e256.offdiag_coefficient)
       << ", ratios " << detail::fmt("%.2f", r1) << " " << detail::fmt("%.2f", r2);
    r.detail = os.str();
    return r;
  });
}

// ---------------------------------------------------------------------------
// 4. EC fixed point on a conjugate-Gaussian problem

struct GaussianProblem {
  std::shared_ptr<const ForwardModel> fm;
  CMatrix B;
  CVector y;
  double gamma_w = 0.0;
  double prior_precision = 1.0;
  CVector posterior_mean;
};

inline GaussianProblem make_gaussian_problem(std::size_t h, std::size_t w, std::uint64_t seed) {
  GaussianProblem g;
  auto fm = std::make_shared<const ForwardModel>(make_point_mask(h, w, 2.0, 2.0, 2, seed),
                                                 generate_coil_maps(h, w, 1, 1.0, seed), 0);
  g.B = dense_B(*fm);
  Rng rng(derive_seed(seed, Stream::kOracle, {400}));
  const CVector x0 = complex_gaussian(h * w, 1.0 / g.prior_precision, rng);
  g.gamma_w = 100.0;
  g.y = g.B * x0 + complex_gaussian(static_cast<std::size_t>(g.B.rows()), 1.0 / g.gamma_w, rng);
  CMatrix S = g.gamma_w * g.B.adjoint() * g.B;
  S.diagonal().array() += g.prior_precision;
  g.posterior_mean = S.ldlt().solve(g.gamma_w * g.B.adjoint() * g.y);
  g.fm = std::move(fm);
  return g;
}

inline CheckResult check_ec_fixed_point(std::uint64_t seed) {
  return detail::timed(4, "ec fixed point", [&] {
    const GaussianProblem g = make_gaussian_problem(8, 8, seed);
    const SubbandLayout lay = g.fm->layout;
    const DenseFidelity f1(lay, g.B, g.y, g.gamma_w);
    const WaveletDenoiser f2 = linear_shrinkage_denoiser(RVector::Constant(1, g.prior_precision));
    SolverConfig cfg;
    cfg.depth = 0;
    cfg.damping_rho = 1.0;
    cfg.max_iters = 30;
    GecState gs = init_state(f1, cfg, std::nullopt, seed);

    const auto N = static_cast<double>(lay.total_size());
    const CMatrix BhB = g.B.adjoint() * g.B;
    const CVector bhy = g.B.adjoint() * g.y;
    auto solve = [&](double gamma) {
      CMatrix S = g.gamma_w * BhB;
      S.diagonal().array() += gamma;
      return S.ldlt();
    };
    ScalarEstimator e1{[&](const CVector& r, double gamma) -> CVector { return solve(gamma).solve(g.gamma_w * bhy + gamma * r); },
                       [&](const CVector&, double gamma) {
                         return (gamma * solve(gamma).solve(CMatrix::Identity(lay.total_size(), lay.total_size()))).trace().real() / N;
                       }};
    ScalarEstimator e2{[&](const CVector& r, double gamma) -> CVector { return gamma / (gamma + g.prior_precision) * r; },
                       [&](const CVector&, double gamma) { return gamma / (gamma + g.prior_precision); }};
    EcState es;
    es.r1 = gs.r1.coeffs;
    es.gamma1 = gs.gamma1[0];
    es.gamma2 = es.gamma1;
    double max_track = 0.0;
    for (int k = 0; k < cfg.max_iters; ++k) {
      gs = dgec_iterate(gs, f1, f2, cfg, seed);
      es = ec_iterate(es, e1, e2);
      auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); };
      // With a Gaussian prior r1 is zero up to rounding, so vectors are
      // compared on the scale of the posterior mean.
      const double scale = g.posterior_mean.cwiseAbs().maxCoeff();
      max_track = std::max({max_track, (gs.r1.coeffs - es.r1).cwiseAbs().maxCoeff() / scale,
                            (gs.r2.coeffs - es.r2).cwiseAbs().maxCoeff() / scale,
                            (gs.c2_hat.coeffs - es.x2).cwiseAbs().maxCoeff() / scale,
                            rel(gs.gamma1[0], es.gamma1), rel(gs.gamma2[0], es.gamma2)});
    }
    const double mean_err = (es.x2 - g.posterior_mean).cwiseAbs().maxCoeff() / g.posterior_mean.cwiseAbs().maxCoeff();
    const double sum = es.gamma1 + es.gamma2;
    const double eta_err = std::max(std::abs(es.eta1 - sum), std::abs(es.eta2 - sum)) / sum;
    CheckResult r;
    r.passed = mean_err <= 1e-6 && eta_err <= 1e-6 && max_track <= 1e-10;
    r.detail = "posterior mean rel err " + detail::fmt("%.2e", mean_err) + ", eta vs gamma1+gamma2 " +
               detail::fmt("%.2e", eta_err) + ", GEC(L=1) vs EC max rel diff " + detail::fmt("%.2e", max_track) +
               " over " + std::to_string(cfg.max_iters) + " iterations";
    return r;
  });
}

// ---------------------------------------------------------------------------
// 5. AMP state evolution

inline CheckResult check_amp_state_evolution(std::uint64_t seed, const SuiteBudget& b = {}) {
  return detail::timed(5, "amp state evolution", [&] {
    const int N = 1024, P = 512, T = 10;
    const BernoulliGaussian prior{0.1, 1.0};
    const double tau_w = 1e-3;
    const SeTrace se = amp_state_evolution([&](double tau) { return prior.mmse_error(tau); }, prior.second_moment(),
                                           tau_w, N, P, T + 1);
    std::vector<double> mean_tau(T + 1, 0.0);
    for (int s = 0; s < b.se_seeds; ++s) {
      Rng rng(derive_seed(seed, Stream::kTrial, {500, static_cast<std::uint64_t>(s)}));
      std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(P)));
      const Mat<double> A = Mat<double>::NullaryExpr(P, N, [&] { return normal(rng); });
      const Vec<double> x0 = prior.sample(N, rng);
      const Vec<double> y = A * x0 + real_gaussian(P, tau_w, rng);
      const auto op = LinearOperator<double>::dense(A);
      AmpState<double> st = amp_init(op);
      const AmpDenoiser<double> f = prior.denoiser();
      for (int t = 0; t <= T; ++t) {
        st = amp_iterate(st, y, op, f);
        mean_tau[t] += st.tau / b.se_seeds;
      }
    }
    double worst = 0.0;
    for (int t = 0; t <= T; ++t) worst = std::max(worst, std::abs(mean_tau[t] - se.tau[t]) / se.tau[t]);
    CheckResult r;
    r.passed = worst <= 0.10;
    r.detail = "max |tau_emp - tau_se| / tau_se over t=0..10 " + detail::fmt("%.3f", worst) + " (tau_se[0] " +
               detail::fmt("%.4g", se.tau[0]) + ", tau_se[10] " + detail::fmt("%.4g", se.tau[T]) + ", emp " +
               detail::fmt("%.4g", mean_tau[T]) + ")";
    return r;
  });
}

// ---------------------------------------------------------------------------
// 6. D-GEC error statistics

struct ErrorStatistics {
  std::vector<std::string> subbands;
  RMatrix predicted_var;  // iterations x subbands, averaged over trials
  RMatrix empirical_var;
  std::size_t rejections = 0;
  std::size_t tests = 0;
  std::pair<std::size_t, std::size_t> interval;
  std::vector<double> final_errors_real;  // subband-standardized, for QQ plots
};

inline ExperimentConfig error_statistics_config() {
  ExperimentConfig cfg;
  cfg.phantom = PhantomKind::kPiecewiseSmooth;
  cfg.height = cfg.width = 128;
  cfg.mask = MaskKind::kPoint2d;
  cfg.acceleration = 4.0;
  cfg.snr_db = 40.0;
  cfg.solver.depth = 4;
  cfg.solver.cg_iters = 150;
  cfg.solver.max_iters = 10;
  cfg.solver.tolerance = 0.0;
  cfg.solver.damping_rho = 1.0;
  cfg.solver.init_mode = InitMode::kBhyPlusNoise;
  cfg.solver.init_inflation = 10.0;
  cfg.calibration_samples = 8;
  cfg.lambda = 1.0;
  return cfg;
}

inline ErrorStatistics dgec_error_statistics(const ExperimentConfig& cfg, int trials, std::uint64_t seed) {
  const int iters = cfg.solver.max_iters;
  struct Trial {
    RMatrix pred, emp;
    std::size_t rejections = 0, tests = 0;
    std::vector<double> errors;
  };
  const std::vector<Trial> results =
      run_indexed<Trial>(static_cast<std::size_t>(trials), std::thread::hardware_concurrency(), [&](std::size_t t) {
        const std::uint64_t s = derive_seed(seed, Stream::kTrial, {600, t});
        const Problem p = build_problem(cfg, s);
        const SubbandLayout& lay = p.fm->layout;
        const CgFidelity f1(p.fm, p.meas.y, p.meas.gamma_w, cfg.solver.cg_iters, cfg.solver.f1_trace);
        const CalibrationStats calib = build_calibration(cfg, *p.fm, s);
        const WaveletDenoiser f2 = make_denoiser(cfg);
        Trial tr;
        tr.pred = RMatrix::Zero(iters, static_cast<Eigen::Index>(lay.count()));
        tr.emp = tr.pred;
        GecState st;
        IterationObserver obs = [&](const GecState& state, const IterationRecord& rec) {
          const int k = rec.iteration - 1;
          tr.pred.row(k) = rec.predicted_sd.array().square().matrix().transpose();
          tr.emp.row(k) = rec.empirical_sd.array().square().matrix().transpose();
          st = state;
        };
        run_dgec(f1, f2, cfg.solver, calib, s, &*p.truth, p.pixel_support, obs);
        const SubbandErrorReport rep = subband_error_report(st.r2, p.truth->c0, p.truth->coefficient_support);
        tr.rejections = rep.rejections();
        tr.tests = rep.tests();
        for (std::size_t l = 0; l < lay.count(); ++l) {
          const double sd = std::sqrt(0.5 / st.gamma2[l]);
          for (Eigen::Index i = 0; i < st.r2.band(l).size(); ++i) {
            tr.errors.push_back((st.r2.band(l)[i] - p.truth->c0.band(l)[i]).real() / sd);
          }
        }
        return tr;
      });
  ErrorStatistics out;
  out.subbands = detail::subband_names(SubbandLayout(cfg.height, cfg.width, cfg.solver.depth));
  out.predicted_var = RMatrix::Zero(results[0].pred.rows(), results[0].pred.cols());
  out.empirical_var = out.predicted_var;
  for (const Trial& t : results) {
    out.predicted_var += t.pred / trials;
    out.empirical_var += t.emp / trials;
    out.rejections += t.rejections;
    out.tests += t.tests;
    out.final_errors_real.insert(out.final_errors_real.end(), t.errors.begin(), t.errors.end());
  }
  out.interval = binomial_interval(out.tests, 0.05);
  return out;
}

inline CheckResult check_error_statistics(std::uint64_t seed, const SuiteBudget& b = {}) {
  return detail::timed(6, "d-gec error statistics", [&] {
    const ExperimentConfig cfg = error_statistics_config();
    const ErrorStatistics es = dgec_error_statistics(cfg, b.stats_trials, seed);
    const RMatrix ratio = (es.empirical_var.array() / es.predicted_var.array()).sqrt();
    const double worst = (ratio.array() - 1.0).abs().maxCoeff();
    Eigen::Index wi = 0, wl = 0;
    (ratio.array() - 1.0).abs().maxCoeff(&wi, &wl);
    const bool sd_ok = worst <= 0.15;
    const bool t_ok = es.rejections >= es.interval.first && es.rejections <= es.interval.second;
    CheckResult r;
    r.passed = sd_ok && t_ok;
    std::ostringstream os;
    os << "max |emp/pred SD - 1| " << detail::fmt("%.3f", worst) << " (iteration " << wi + 1 << ", "
       << es.subbands[static_cast<std::size_t>(wl)] << "); t-test rejections " << es.rejections << "/" << es.tests
       << " (95% interval " << es.interval.first << ".." << es.interval.second << ")";
    r.detail = os.str();
    return r;
  });
}

// ---------------------------------------------------------------------------
// 7. Recovery quality against the zero-filled baseline

inline ExperimentConfig recovery_config(MaskKind mask) {
  ExperimentConfig cfg;
  cfg.phantom = PhantomKind::kSheppLogan;
  cfg.height = cfg.width = 128;
  cfg.mask = mask;
  cfg.acceleration = 4.0;
  cfg.snr_db = 40.0;
  cfg.solver.depth = 4;
  cfg.solver.cg_iters = 10;
  cfg.solver.max_iters = 50;
  cfg.solver.damping_rho = 0.5;
  cfg.solver.tolerance = 1e-5;
  cfg.lambda = 1.0;
  if (mask == MaskKind::kLine2d) {
    // line masks: four coils, multicoil damping
    cfg.coils = 4;
    cfg.solver.damping_rho = 0.3;
  }
  return cfg;
}

inline CheckResult check_recovery_quality(std::uint64_t seed, const SuiteBudget& b = {}) {
  return detail::timed(7, "recovery quality", [&] {
    double min_gain = std::numeric_limits<double>::infinity();
    double mean_gain = 0.0;
    bool baselines_ok = true;
    std::string baseline_note;
    int runs = 0;
    for (MaskKind mk : {MaskKind::kPoint2d, MaskKind::kLine2d}) {
      for (int k = 0; k < b.recovery_seeds; ++k) {
        ExperimentConfig cfg = recovery_config(mk);
        const std::uint64_t s = derive_seed(seed, Stream::kTrial, {700, static_cast<std::uint64_t>(mk), static_cast<std::uint64_t>(k)});
        const Problem p = build_problem(cfg, s);
        const RunOutput d = run_algorithm(cfg, p, s);
        const double gain = d.psnr - d.zero_filled_psnr;
        min_gain = std::min(min_gain, gain);
        mean_gain += gain;
        ++runs;
        for (Algorithm a : {Algorithm::kPnpPgd, Algorithm::kPrAdmm}) {
          cfg.algorithm = a;
          cfg.solver.max_iters = 100;
          try {
            const RunOutput o = run_algorithm(cfg, p, s);
            const double r0 = o.rows.front().residual_norm, r1 = o.rows.back().residual_norm;
            if (!std::isfinite(o.psnr) || !(r1 <= 10.0 * r0)) {
              baselines_ok = false;
              baseline_note = std::string(algorithm_name(a)) + " residual grew from " + detail::fmt("%.3g", r0) + " to " +
                              detail::fmt("%.3g", r1);
            }
          } catch (const NumericalError& e) {
            baselines_ok = false;
            baseline_note = e.what();
          }
        }
      }
    }
    mean_gain /= runs;
    CheckResult r;
    r.passed = min_gain >= 3.0 && baselines_ok;
    r.detail = "D-GEC gain over zero-filled: min " + detail::fmt("%.2f", min_gain) + " dB, mean " +
               detail::fmt("%.2f", mean_gain) + " dB over " + std::to_string(runs) + " problems; PnP-PGD and PR-ADMM " +
               (baselines_ok ? std::string("stable") : "diverged: " + baseline_note);
    return r;
  });
}

// ---------------------------------------------------------------------------
// 8. Monte-Carlo subband trace against the analytic soft-threshold divergence

inline CheckResult check_divergence_estimation(std::uint64_t seed) {
  return detail::timed(8, "mc divergence", [&] {
    const SubbandLayout lay(512, 512, 1);
    Rng rng(derive_seed(seed, Stream::kOracle, {800}));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
      const WaveletPyramid r(lay, complex_gaussian(lay.total_size(), 1.0, rng));
      RVector g(static_cast<Eigen::Index>(lay.count()));
      for (Eigen::Index l = 0; l < g.size(); ++l) g[l] = std::pow(10.0, 2.0 + unif(rng));
      const PrecisionVector gamma(lay, g);
      const double lambda = 0.5 + 2.5 * unif(rng);
      const RVector lambdas = default_lambdas(gamma, lambda);
      const DenoiserResult base = subband_soft_threshold(r, gamma, lambdas);
      PyramidMap f = [&](const WaveletPyramid& x) { return subband_soft_threshold(x, gamma, lambdas).estimate; };
      for (std::size_t l = 0; l < lay.count(); ++l) {
        const double analytic = (*base.subband_divergence)[static_cast<Eigen::Index>(l)] * lay[l].size();
        const double mc = mc_subband_trace(f, r, base.estimate, gamma, l, probe_seed(seed, k, 2, l));
        worst = std::max(worst, std::abs(mc - analytic) / analytic);
      }
    }
    CheckResult r;
    r.passed = worst <= 0.02;
    r.detail = "max relative error " + detail::fmt("%.4f", worst) + " over 10 draws x 4 subbands, N_l = 65536";
    return r;
  });
}

// ---------------------------------------------------------------------------
// 9. Determinism of cmd_recover

inline ExperimentConfig determinism_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.phantom = PhantomKind::kPiecewiseSmooth;
  cfg.height = cfg.width = 64;
  cfg.coils = 4;
  cfg.coil_support = 0.95;
  cfg.solver.depth = 3;
  cfg.solver.max_iters = 8;
  cfg.solver.f1_trace = TraceMode::kMonteCarlo;
  cfg.solver.f2_divergence = DivergenceMode::kMonteCarlo;
  cfg.solver.init_mode = InitMode::kBhyPlusNoise;
  cfg.solver.threads = 2;
  return cfg;
}

inline CheckResult check_determinism(std::uint64_t seed, const std::filesystem::path& scratch) {
  return detail::timed(9, "recover determinism", [&] {
    ExperimentConfig cfg = determinism_config(seed);
    std::vector<std::vector<std::uint8_t>> csv;
    for (const char* run : {"run_a", "run_b"}) {
      cfg.out_dir = scratch / run;
      std::filesystem::remove_all(cfg.out_dir);
      cmd_recover(cfg, 2);
      csv.push_back(read_bytes(cfg.out_dir / "diagnostics.csv"));
      const auto summary = read_bytes(cfg.out_dir / "summary.csv");
      csv.back().insert(csv.back().end(), summary.begin(), summary.end());
    }
    CheckResult r;
    r.passed = !csv[0].empty() && csv[0] == csv[1];
    r.detail = std::to_string(csv[0].size()) + " CSV bytes, " + (r.passed ? "identical" : "different");
    return r;
  });
}

// ---------------------------------------------------------------------------
// Suites

inline std::vector<std::string> suite_names() { return {"transforms", "appendix", "solver", "all"}; }

/// transforms: 1; appendix: 2, 3; solver: 4, 5, 8; all: the three together.
inline std::vector<CheckResult> run_suite(const std::string& name, std::uint64_t seed, const SuiteBudget& b = {},
                                          const std::function<void(const CheckResult&)>& on_result = {}) {
  std::vector<std::function<CheckResult()>> checks;
  const bool all = name == "all";
  if (all || name == "transforms") checks.push_back([&] { return check_transforms(seed); });
  if (all || name == "appendix") {
    checks.push_back([&] { return check_ec_recursion(seed); });
    checks.push_back([&] { return check_orthogonal_moments(seed, b); });
  }
  if (all || name == "solver") {
    checks.push_back([&] { return check_ec_fixed_point(seed); });
    checks.push_back([&] { return check_amp_state_evolution(seed, b); });
    checks.push_back([&] { return check_divergence_estimation(seed); });
  }
  if (checks.empty()) throw ArgumentError("unknown suite '" + name + "' (expected transforms, appendix, solver or all)");
  std::vector<CheckResult> out;
  for (auto& c : checks) {
    out.push_back(c());
    if (on_result) on_result(out.back());
  }
  return out;
}

inline std::string format_result(const CheckResult& r) {
  char head[128];
  std::snprintf(head, sizeof head, "[%d] %-4s %-32s (%.1f s) ", r.id, r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds);
  return head + r.detail;
}

}  // namespace dgec
