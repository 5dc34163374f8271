#pragma once

// Problem construction, algorithm dispatch and report files shared by the
// command-line tool and the verification suites.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dgec/baselines.hpp"
#include "dgec/config.hpp"
#include "dgec/denoisers.hpp"
#include "dgec/diagnostics.hpp"
#include "dgec/gec.hpp"
#include "dgec/io.hpp"
#include "dgec/protocol.hpp"

namespace dgec {

struct Problem {
  std::shared_ptr<const ForwardModel> fm;
  MeasurementSet meas;
  std::optional<GroundTruth> truth;  // absent when loaded without truth.cim
  std::vector<std::uint8_t> pixel_support;
};

inline SamplingMask make_mask(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.mask == MaskKind::kPoint2d) {
    return make_point_mask(cfg.height, cfg.width, cfg.acceleration, cfg.mask_density_exponent(), cfg.calib_size, seed);
  }
  return make_line_mask(cfg.height, cfg.width, cfg.acceleration, cfg.mask_density_exponent(), cfg.calib_size, seed);
}

inline CoilMaps make_coils(const ExperimentConfig& cfg, std::uint64_t seed) {
  return generate_coil_maps(cfg.height, cfg.width, cfg.coils, cfg.coil_smoothness, seed, cfg.coil_support);
}

inline ComplexImage make_phantom(const ExperimentConfig& cfg, PhantomKind kind, std::uint64_t seed,
                                 const std::vector<std::uint8_t>& support) {
  PhantomOptions opt;
  opt.depth = std::max(cfg.solver.depth, 1);
  return restrict_to_support(generate_phantom(cfg.height, cfg.width, kind, seed, opt), support);
}

inline GroundTruth make_truth(const ComplexImage& x0, const ForwardModel& fm) {
  GroundTruth t{x0, dwt2_haar(x0, fm.layout.depth()), {}};
  const auto& sup = fm.coils.support;
  if (std::find(sup.begin(), sup.end(), std::uint8_t{0}) != sup.end()) {
    t.coefficient_support = coefficient_support(fm.layout, sup);
  }
  return t;
}

/// Phantom, mask, coils and noisy measurements, all derived from `seed`.
inline Problem build_problem(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  auto fm = std::make_shared<const ForwardModel>(make_mask(cfg, seed), make_coils(cfg, seed), cfg.solver.depth);
  Problem p;
  p.pixel_support = fm->coils.support;
  const ComplexImage x0 = make_phantom(cfg, cfg.phantom, seed, p.pixel_support);
  p.meas = simulate_measurements(x0, *fm, cfg.snr_db, seed);
  p.truth = make_truth(x0, *fm);
  p.fm = std::move(fm);
  return p;
}

/// Per-subband variance of B^H y - c0 over `calibration_samples` independent
/// phantoms measured through the same operator. Noiseless settings are
/// calibrated with noise at the nominal gamma_w.
inline CalibrationStats build_calibration(const ExperimentConfig& cfg, const ForwardModel& fm, std::uint64_t seed) {
  std::vector<WaveletPyramid> bhy, c0;
  for (std::size_t k = 0; k < cfg.calibration_samples; ++k) {
    const std::uint64_t s = derive_seed(seed, Stream::kCalibration, {k});
    const ComplexImage x = make_phantom(cfg, cfg.calibration_phantom, s, fm.coils.support);
    MeasurementSet m = simulate_measurements(x, fm, cfg.snr_db, s);
    if (m.noiseless) {
      Rng rng(derive_seed(s, Stream::kMeasurementNoise));
      m.y += complex_gaussian(static_cast<std::size_t>(m.y.size()), 1.0 / m.gamma_w, rng);
    }
    bhy.push_back(apply_BH(m.y, fm));
    c0.push_back(dwt2_haar(x, fm.layout.depth()));
  }
  return calibration_from_pairs(bhy, c0);
}

// ---------------------------------------------------------------------------
// Simulation files

inline std::string indexed_name(const char* stem, std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02zu.cim", stem, k);
  return buf;
}

/// truth.cim, mask.msk, coil_XX.cim, kspace_XX.cim (zero where unsampled) and
/// measurement.ini.
inline void save_problem(const Problem& p, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const ForwardModel& fm = *p.fm;
  if (p.truth) save_cim1(dir / "truth.cim", p.truth->x0);
  save_msk1(dir / "mask.msk", fm.mask);
  const std::size_t m = fm.samples_per_coil();
  for (std::size_t c = 0; c < fm.coils.coils(); ++c) {
    save_cim1(dir / indexed_name("coil", c), ComplexImage(fm.height(), fm.width(), fm.coils.maps[c]));
    ComplexImage k(fm.height(), fm.width());
    for (std::size_t i = 0; i < m; ++i) k.data[fm.sampled[i]] = p.meas.y[c * m + i];
    save_cim1(dir / indexed_name("kspace", c), k);
  }
  std::ofstream ini(dir / "measurement.ini");
  ini << "coils = " << fm.coils.coils() << "\n";
  ini << "gamma_w = " << csv_number(p.meas.gamma_w) << "\n";
  ini << "snr_db = " << csv_number(p.meas.snr_db) << "\n";
  ini << "noiseless = " << (p.meas.noiseless ? 1 : 0) << "\n";
  ini << "seed = " << p.meas.seed << "\n";
  if (!ini) throw FormatError("cannot write " + (dir / "measurement.ini").string());
}

inline Problem load_problem(const ExperimentConfig& cfg) {
  const std::filesystem::path& dir = cfg.input_dir;
  const auto ini_path = dir / "measurement.ini";
  std::ifstream in(ini_path);
  if (!in) throw FormatError("missing " + ini_path.string());
  boost::property_tree::ptree meta;
  try {
    boost::property_tree::read_ini(in, meta);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw FormatError(ini_path.string() + ": " + e.what());
  }
  Problem p;
  std::size_t C = 0;
  try {
    C = meta.get<std::size_t>("coils");
    p.meas.gamma_w = detail::parse_real("gamma_w", meta.get<std::string>("gamma_w"));
    p.meas.snr_db = detail::parse_real("snr_db", meta.get<std::string>("snr_db"));
    p.meas.noiseless = meta.get<int>("noiseless") != 0;
    p.meas.seed = meta.get<std::uint64_t>("seed");
  } catch (const boost::property_tree::ptree_error& e) {
    throw FormatError(ini_path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(ini_path.string() + ": " + e.what());
  }
  if (C == 0) throw FormatError(ini_path.string() + ": coils must be positive");
  SamplingMask mask = load_msk1(dir / "mask.msk");
  CoilMaps coils{mask.height, mask.width, {}, std::vector<std::uint8_t>(mask.height * mask.width, 0)};
  for (std::size_t c = 0; c < C; ++c) {
    const ComplexImage s = load_cim1(dir / indexed_name("coil", c));
    if (s.height != mask.height || s.width != mask.width) throw FormatError("coil map shape does not match mask");
    coils.maps.push_back(s.data);
  }
  for (std::size_t i = 0; i < coils.support.size(); ++i) {
    double e = 0.0;
    for (const CVector& m : coils.maps) e += std::norm(m[static_cast<Eigen::Index>(i)]);
    coils.support[i] = e > 0.0 ? 1 : 0;
  }
  auto fm = std::make_shared<const ForwardModel>(std::move(mask), std::move(coils), cfg.solver.depth);
  const std::size_t m = fm->samples_per_coil();
  p.meas.y = CVector(static_cast<Eigen::Index>(fm->measurements()));
  for (std::size_t c = 0; c < C; ++c) {
    const ComplexImage k = load_cim1(dir / indexed_name("kspace", c));
    if (k.height != fm->height() || k.width != fm->width()) throw FormatError("k-space shape does not match mask");
    for (std::size_t i = 0; i < m; ++i) p.meas.y[c * m + i] = k.data[fm->sampled[i]];
  }
  p.pixel_support = fm->coils.support;
  if (std::filesystem::exists(dir / "truth.cim")) {
    const ComplexImage x0 = load_cim1(dir / "truth.cim");
    if (x0.height != fm->height() || x0.width != fm->width()) throw FormatError("truth shape does not match mask");
    p.truth = make_truth(x0, *fm);
  }
  p.fm = std::move(fm);
  return p;
}

// ---------------------------------------------------------------------------
// Algorithms

struct RunOutput {
  ComplexImage image;
  std::vector<IterationRecord> rows;
  std::vector<std::string> subband_names;  // set when rows carry SDs
  bool converged = false;
  double psnr = std::numeric_limits<double>::quiet_NaN();
  double ssim = std::numeric_limits<double>::quiet_NaN();
  double zero_filled_psnr = std::numeric_limits<double>::quiet_NaN();
};

/// Zero-filled reconstruction Psi^T B^H y = A^H y on the coil support.
inline ComplexImage zero_filled(const Problem& p) {
  return restrict_to_support(apply_AH(p.meas.y, *p.fm), p.pixel_support);
}

inline WaveletDenoiser make_denoiser(const ExperimentConfig& cfg) {
  if (cfg.denoiser == DenoiserKind::kSoftThreshold) return soft_threshold_denoiser(cfg.lambda);
  auto client = std::make_shared<DenoiserClient>(Endpoint::parse(cfg.endpoint), cfg.endpoint_timeout_ms);
  return wrap_pixel_denoiser(external_pixel_denoiser(std::move(client), cfg.noise_channels));
}

namespace detail {

inline std::vector<std::string> subband_names(const SubbandLayout& lay) {
  std::vector<std::string> out;
  for (const Subband& s : lay.subbands()) out.push_back(s.name());
  return out;
}

/// Complex soft threshold with threshold t on every detail subband; the
/// coarsest approximation band passes through.
inline WaveletPyramid threshold_details(const WaveletPyramid& c, double t) {
  const SubbandLayout& lay = c.layout;
  RVector lambda = RVector::Constant(static_cast<Eigen::Index>(lay.count()), t);
  if (lay.depth() > 0) lambda[0] = 0.0;
  return subband_soft_threshold(c, PrecisionVector::constant(lay, 1.0), lambda).estimate;
}

inline void finish_row(IterationRecord& rec, const ComplexImage& x, const ComplexImage& prev, const Problem& p,
                       const WaveletPyramid& c) {
  if (prev.size() == x.size() && prev.size() > 0) {
    const double pn = prev.data.norm();
    rec.relative_change = pn > 0.0 ? (x.data - prev.data).norm() / pn : (x.data.norm() > 0.0 ? 1.0 : 0.0);
  }
  rec.residual_norm = (p.meas.y - apply_B(c, *p.fm)).norm();
  if (p.truth) rec.psnr = psnr(x, p.truth->x0);
}

/// Shared loop for algorithms whose state exposes a coefficient estimate.
template <class Step>
void iterate_baseline(const ExperimentConfig& cfg, const Problem& p, RunOutput& out, Step&& step) {
  ComplexImage prev;
  for (int k = 0; k < cfg.solver.max_iters; ++k) {
    const WaveletPyramid c = step();
    ComplexImage x = restrict_to_support(idwt2_haar(c), p.pixel_support);
    IterationRecord rec;
    rec.iteration = k + 1;
    finish_row(rec, x, prev, p, c);
    if (!x.data.allFinite()) throw NumericalError(std::string(algorithm_name(cfg.algorithm)) + " diverged at iteration " +
                                                  std::to_string(k + 1));
    out.rows.push_back(rec);
    prev = x;
    out.image = std::move(x);
    if (cfg.solver.tolerance > 0.0 && std::isfinite(rec.relative_change) && rec.relative_change < cfg.solver.tolerance) {
      out.converged = true;
      break;
    }
  }
}

inline LinearOperator<cplx> wavelet_operator(const ForwardModel& fm) {
  LinearOperator<cplx> op;
  const SubbandLayout lay = fm.layout;
  op.apply = [&fm, lay](const CVector& c) -> CVector { return apply_B(WaveletPyramid(lay, c), fm); };
  op.adjoint = [&fm](const CVector& v) -> CVector { return apply_BH(v, fm).coeffs; };
  op.rows = static_cast<Eigen::Index>(fm.measurements());
  op.cols = static_cast<Eigen::Index>(fm.pixels());
  double energy = 0.0;
  for (const CVector& m : fm.coils.maps) energy += m.squaredNorm();
  op.frobenius_norm = std::sqrt(energy * static_cast<double>(fm.samples_per_coil()) / static_cast<double>(fm.pixels()));
  return op;
}

inline RunOutput run_dgec_problem(const ExperimentConfig& cfg, const Problem& p, std::uint64_t seed) {
  const CgFidelity f1(p.fm, p.meas.y, p.meas.gamma_w, cfg.solver.cg_iters, cfg.solver.f1_trace);
  std::optional<CalibrationStats> calib;
  if (cfg.solver.init_mode == InitMode::kBhyPlusNoise) calib = build_calibration(cfg, *p.fm, seed);
  const WaveletDenoiser f2 = make_denoiser(cfg);
  const GecResult res = run_dgec(f1, f2, cfg.solver, calib, seed, p.truth ? &*p.truth : nullptr, p.pixel_support, {},
                                 p.fm.get(), &p.meas.y);
  RunOutput out;
  out.image = res.image;
  out.rows = res.diagnostics.rows;
  out.subband_names = subband_names(p.fm->layout);
  out.converged = res.converged;
  return out;
}

/// EC with one precision per half over all wavelet coefficients.
inline RunOutput run_ec_problem(const ExperimentConfig& cfg, const Problem& p, std::uint64_t seed) {
  const SubbandLayout& lay = p.fm->layout;
  const CgFidelity f1(p.fm, p.meas.y, p.meas.gamma_w, cfg.solver.cg_iters, cfg.solver.f1_trace);
  std::optional<CalibrationStats> calib;
  if (cfg.solver.init_mode == InitMode::kBhyPlusNoise) calib = build_calibration(cfg, *p.fm, seed);
  const WaveletDenoiser f2 = make_denoiser(cfg);
  const GecState init = init_state(f1, cfg.solver, calib, seed);
  const auto N = static_cast<double>(lay.total_size());
  auto weighted = [&](const RVector& per_subband) {
    double acc = 0.0;
    for (std::size_t l = 0; l < lay.count(); ++l) acc += per_subband[static_cast<Eigen::Index>(l)] * lay[l].size();
    return acc / N;
  };
  int iteration = 0;
  ScalarEstimator e1{
      [&](const CVector& r, double g) { return f1.estimate(WaveletPyramid(lay, r), PrecisionVector::constant(lay, g)).coeffs; },
      [&](const CVector& r, double g) {
        const WaveletPyramid rp(lay, r);
        const PrecisionVector gp = PrecisionVector::constant(lay, g);
        return weighted(f1.divergence(rp, gp, f1.estimate(rp, gp), iteration, seed, cfg.solver.threads));
      }};
  ScalarEstimator e2{
      [&](const CVector& r, double g) {
        return f2(WaveletPyramid(lay, r), PrecisionVector::constant(lay, g),
                  derive_seed(seed, Stream::kDenoiserNoise, {static_cast<std::uint64_t>(iteration)}))
            .estimate.coeffs;
      },
      [&](const CVector& r, double g) {
        const WaveletPyramid rp(lay, r);
        const PrecisionVector gp = PrecisionVector::constant(lay, g);
        const std::uint64_t dseed = derive_seed(seed, Stream::kDenoiserNoise, {static_cast<std::uint64_t>(iteration)});
        const DenoiserResult base = f2(rp, gp, dseed);
        return weighted(denoiser_divergence(f2, rp, gp, base, dseed, iteration, seed, cfg.solver));
      }};
  EcState s;
  s.r1 = init.r1.coeffs;
  s.gamma1 = 1.0 / weighted(init.gamma1.gammas.cwiseInverse());
  s.gamma2 = s.gamma1;
  EcOptions opt;
  opt.damping_rho = cfg.solver.damping_rho;
  opt.clip_low = cfg.solver.clip_low;
  opt.clip_high = cfg.solver.clip_high;
  RunOutput out;
  out.subband_names = subband_names(lay);
  ComplexImage prev;
  for (int k = 0; k < cfg.solver.max_iters; ++k) {
    iteration = k;
    s = ec_iterate(s, e1, e2, opt);
    const WaveletPyramid c(lay, s.x2);
    ComplexImage x = restrict_to_support(idwt2_haar(c), p.pixel_support);
    IterationRecord rec;
    rec.iteration = s.iteration;
    rec.predicted_sd = RVector::Constant(static_cast<Eigen::Index>(lay.count()), 1.0 / std::sqrt(s.gamma2));
    if (p.truth) rec.empirical_sd = empirical_subband_sd(WaveletPyramid(lay, s.r2), p.truth->c0, p.truth->coefficient_support);
    finish_row(rec, x, prev, p, c);
    out.rows.push_back(rec);
    prev = x;
    out.image = std::move(x);
    if (cfg.solver.tolerance > 0.0 && std::isfinite(rec.relative_change) && rec.relative_change < cfg.solver.tolerance) {
      out.converged = true;
      break;
    }
  }
  return out;
}

inline RunOutput run_amp_problem(const ExperimentConfig& cfg, const Problem& p, std::uint64_t seed) {
  if (cfg.denoiser != DenoiserKind::kSoftThreshold) throw ArgumentError("amp supports the soft-threshold denoiser only");
  const SubbandLayout& lay = p.fm->layout;
  const LinearOperator<cplx> A = wavelet_operator(*p.fm);
  AmpOptions opt;
  opt.beta_scale = cfg.amp_beta_scale;
  opt.probe_seed = seed;
  AmpDenoiser<cplx> f2 = [&](const CVector& r, double tau) {
    const PrecisionVector g = PrecisionVector::constant(lay, 1.0 / std::max(tau, 1e-300));
    const DenoiserResult res = subband_soft_threshold(WaveletPyramid(lay, r), g, default_lambdas(g, cfg.lambda));
    double trace = 0.0;
    for (std::size_t l = 0; l < lay.count(); ++l) trace += (*res.subband_divergence)[static_cast<Eigen::Index>(l)] * lay[l].size();
    return AmpDenoiserOutput<cplx>{res.estimate.coeffs, trace};
  };
  AmpState<cplx> s = amp_init(A, opt);
  RunOutput out;
  iterate_baseline(cfg, p, out, [&] {
    s = amp_iterate(s, p.meas.y, A, f2, opt);
    return WaveletPyramid(lay, s.x);
  });
  return out;
}

inline RunOutput run_pgd_problem(const ExperimentConfig& cfg, const Problem& p) {
  const SubbandLayout& lay = p.fm->layout;
  const LinearOperator<cplx> A = wavelet_operator(*p.fm);
  std::function<CVector(const CVector&)> f2 = [&](const CVector& c) {
    return threshold_details(WaveletPyramid(lay, c), cfg.pgd_step * cfg.baseline_threshold).coeffs;
  };
  PgdState<cplx> s;
  s.x2 = apply_BH(p.meas.y, *p.fm).coeffs;
  RunOutput out;
  iterate_baseline(cfg, p, out, [&] {
    s = pnp_pgd_iterate(s, p.meas.y, A, cfg.pgd_step, f2);
    return WaveletPyramid(lay, s.x2);
  });
  return out;
}

inline RunOutput run_admm_problem(const ExperimentConfig& cfg, const Problem& p) {
  const SubbandLayout& lay = p.fm->layout;
  const ForwardModel& fm = *p.fm;
  const double rho = cfg.admm_penalty;
  const CVector bhy = apply_BH(p.meas.y, fm).coeffs;
  std::function<CVector(const CVector&)> prox1 = [&](const CVector& v) {
    auto op = [&](const CVector& c) -> CVector { return apply_BHB(WaveletPyramid(lay, c), fm).coeffs + rho * c; };
    return conjugate_gradient(op, bhy + rho * v, v, cfg.solver.cg_iters).x;
  };
  std::function<CVector(const CVector&)> prox2 = [&](const CVector& v) {
    return threshold_details(WaveletPyramid(lay, v), cfg.baseline_threshold / rho).coeffs;
  };
  AdmmState<cplx> s;
  s.x1 = s.x2 = bhy;
  s.u = CVector::Zero(bhy.size());
  RunOutput out;
  iterate_baseline(cfg, p, out, [&] {
    s = pr_admm_iterate(s, prox1, prox2);
    return WaveletPyramid(lay, s.x2);
  });
  return out;
}

}  // namespace detail

inline RunOutput run_algorithm(const ExperimentConfig& cfg, const Problem& p, std::uint64_t seed) {
  cfg.validate();
  RunOutput out;
  switch (cfg.algorithm) {
    case Algorithm::kDgec: out = detail::run_dgec_problem(cfg, p, seed); break;
    case Algorithm::kEc: out = detail::run_ec_problem(cfg, p, seed); break;
    case Algorithm::kAmp: out = detail::run_amp_problem(cfg, p, seed); break;
    case Algorithm::kPnpPgd: out = detail::run_pgd_problem(cfg, p); break;
    case Algorithm::kPrAdmm: out = detail::run_admm_problem(cfg, p); break;
  }
  if (out.rows.empty()) out.image = zero_filled(p);
  if (p.truth) {
    out.psnr = psnr(out.image, p.truth->x0);
    out.ssim = ssim(out.image, p.truth->x0);
    out.zero_filled_psnr = psnr(zero_filled(p), p.truth->x0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV reports

/// iter, psnr, predicted SDs, empirical SDs, relative change, residual norm.
/// A leading trial column is added when `trial` is set.
inline void write_diagnostics_csv(std::ostream& os, const RunOutput& run, std::optional<std::size_t> trial,
                                  bool header) {
  const bool sds = !run.subband_names.empty();
  const bool emp = sds && !run.rows.empty() && run.rows.front().empirical_sd.size() > 0;
  if (header) {
    std::vector<std::string> h;
    if (trial) h.push_back("trial");
    h.push_back("iter");
    h.push_back("psnr");
    if (sds) {
      for (const auto& n : run.subband_names) h.push_back("pred_sd_" + n);
      if (emp) {
        for (const auto& n : run.subband_names) h.push_back("emp_sd_" + n);
      }
    }
    h.push_back("rel_change");
    h.push_back("residual");
    write_csv_row(os, h);
  }
  for (const IterationRecord& r : run.rows) {
    std::vector<std::string> cells;
    if (trial) cells.push_back(std::to_string(*trial));
    cells.push_back(std::to_string(r.iteration));
    cells.push_back(csv_number(r.psnr));
    if (sds) {
      for (Eigen::Index l = 0; l < r.predicted_sd.size(); ++l) cells.push_back(csv_number(r.predicted_sd[l]));
      if (emp) {
        for (Eigen::Index l = 0; l < r.empirical_sd.size(); ++l) cells.push_back(csv_number(r.empirical_sd[l]));
      }
    }
    cells.push_back(csv_number(r.relative_change));
    cells.push_back(csv_number(r.residual_norm));
    write_csv_row(os, cells);
  }
}

}  // namespace dgec
