#include <gtest/gtest.h>

#include "dgec/experiment.hpp"
#include "dgec/gec.hpp"

using namespace dgec;

namespace {

struct SmallProblem {
  std::shared_ptr<const ForwardModel> fm;
  ComplexImage x0;
  MeasurementSet meas;
};

SmallProblem small_problem(std::size_t n, std::size_t coils, int depth, std::uint64_t seed) {
  SmallProblem p;
  p.fm = std::make_shared<const ForwardModel>(make_point_mask(n, n, 3.0, 8.0, 4, seed),
                                              generate_coil_maps(n, n, coils, 0.6, seed), depth);
  p.x0 = generate_phantom(n, n, PhantomKind::kPiecewiseSmooth, seed);
  p.meas = simulate_measurements(p.x0, *p.fm, 30.0, seed);
  return p;
}

}  // namespace

TEST(Gdiag, ExpandsPerSubbandAverages) {
  const SubbandLayout lay(8, 8, 1);
  RVector tr(4);
  tr << 16.0, 8.0, 4.0, 0.0;
  const RVector g = gdiag_from_traces(tr, lay);
  EXPECT_DOUBLE_EQ(g[0], 1.0);
  EXPECT_DOUBLE_EQ(g[20], 0.5);
  EXPECT_DOUBLE_EQ(g[63], 0.0);
  EXPECT_THROW(gdiag_from_traces(RVector::Ones(3), lay), ShapeError);
}

TEST(ExtrinsicUpdate, FormulaAndClipping) {
  const SubbandLayout lay(2, 2, 1);
  WaveletPyramid xhat(lay), r(lay);
  xhat.coeffs.setConstant(2.0);
  r.coeffs.setConstant(1.0);
  const PrecisionVector gamma = PrecisionVector::constant(lay, 1.0);
  RVector d(4);
  d << 0.5, 1.0, 1e-20, 0.25;
  SolverConfig cfg;
  PrecisionVector eta, gout;
  WaveletPyramid rout;
  extrinsic_update(xhat, r, gamma, d, cfg, eta, gout, rout);
  EXPECT_DOUBLE_EQ(eta[0], 2.0);
  EXPECT_DOUBLE_EQ(gout[0], 1.0);
  EXPECT_DOUBLE_EQ(rout.coeffs[0].real(), 3.0);
  // d = 1 gives eta - gamma = 0, clipped up to clip_low * eta
  EXPECT_DOUBLE_EQ(gout[1], cfg.clip_low * 1.0);
  // tiny d floors at 1e-15
  EXPECT_DOUBLE_EQ(eta[2], 1e15);
  EXPECT_DOUBLE_EQ(eta[3], 4.0);
  EXPECT_DOUBLE_EQ(gout[3], 3.0);
}

TEST(Damping, LinearMessagesGeometricPrecisions) {
  const SubbandLayout lay(2, 2, 0);
  WaveletPyramid rn(lay), ro(lay);
  rn.coeffs.setConstant(4.0);
  ro.coeffs.setConstant(0.0);
  PrecisionVector gn = PrecisionVector::constant(lay, 16.0);
  const PrecisionVector go = PrecisionVector::constant(lay, 1.0);
  damp(rn, gn, ro, go, 0.5);
  EXPECT_DOUBLE_EQ(rn.coeffs[0].real(), 2.0);
  EXPECT_NEAR(gn[0], 4.0, 1e-12);
  EXPECT_THROW(damp(rn, gn, ro, go, 0.0), ArgumentError);
}

TEST(Init, PrecisionsFromCalibration) {
  const SmallProblem p = small_problem(16, 1, 2, 3);
  const CgFidelity f1(p.fm, p.meas.y, p.meas.gamma_w, 10, TraceMode::kExact);
  SolverConfig cfg;
  cfg.depth = 2;
  cfg.init_mode = InitMode::kBhyPlusNoise;
  EXPECT_THROW(init_state(f1, cfg, std::nullopt, 1), ArgumentError);
  CalibrationStats calib{RVector::LinSpaced(7, 1.0, 7.0), 4};
  const GecState s = init_state(f1, cfg, calib, 1);
  for (std::size_t l = 0; l < 7; ++l) EXPECT_NEAR(s.gamma1[l], 1.0 / ((1.0 + cfg.init_inflation) * (l + 1.0)), 1e-15);
  EXPECT_GT((s.r1.coeffs - f1.bhy().coeffs).norm(), 0.0);
  cfg.init_mode = InitMode::kBhyPlain;
  const GecState plain = init_state(f1, cfg, std::nullopt, 1);
  EXPECT_EQ((plain.r1.coeffs - f1.bhy().coeffs).norm(), 0.0);
}

TEST(Fidelity, CgMatchesDenseSolveAndExactTraces) {
  const SmallProblem p = small_problem(16, 2, 2, 4);
  const CgFidelity cg(p.fm, p.meas.y, p.meas.gamma_w, 200, TraceMode::kExact);
  const DenseFidelity dense(p.fm->layout, dense_B(*p.fm), p.meas.y, p.meas.gamma_w);
  const SubbandLayout& lay = p.fm->layout;
  RVector g(static_cast<Eigen::Index>(lay.count()));
  for (Eigen::Index l = 0; l < g.size(); ++l) g[l] = p.meas.gamma_w * (0.05 + 0.1 * l);
  const PrecisionVector g1(lay, g);
  Rng rng(1);
  const WaveletPyramid r1(lay, complex_gaussian(lay.total_size(), 1.0, rng));
  const WaveletPyramid a = cg.estimate(r1, g1);
  const WaveletPyramid b = dense.estimate(r1, g1);
  EXPECT_LE((a.coeffs - b.coeffs).norm(), 1e-8 * b.coeffs.norm());
  const RVector da = cg.divergence(r1, g1, a, 0, 1, 1);
  const RVector db = dense.divergence(r1, g1, b, 0, 1, 1);
  EXPECT_LE((da - db).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_TRUE((db.array() > 0.0).all() && (db.array() <= 1.0).all());
}

TEST(Fidelity, StochasticTracesAreUnbiasedish) {
  const SmallProblem p = small_problem(32, 1, 1, 5);
  const SubbandLayout& lay = p.fm->layout;
  const PrecisionVector g1 = PrecisionVector::constant(lay, p.meas.gamma_w * 0.3);
  const CgFidelity exact(p.fm, p.meas.y, p.meas.gamma_w, 100, TraceMode::kExact);
  const CgFidelity jvp(p.fm, p.meas.y, p.meas.gamma_w, 100, TraceMode::kJvp);
  const CgFidelity mc(p.fm, p.meas.y, p.meas.gamma_w, 100, TraceMode::kMonteCarlo);
  const WaveletPyramid r1 = exact.bhy();
  const WaveletPyramid c1 = exact.estimate(r1, g1);
  const RVector de = exact.divergence(r1, g1, c1, 0, 1, 1);
  RVector dj = RVector::Zero(de.size()), dm = RVector::Zero(de.size());
  const int reps = 20;
  for (int k = 0; k < reps; ++k) {
    dj += jvp.divergence(r1, g1, c1, k, 7, 1) / reps;
    dm += mc.divergence(r1, g1, c1, k, 7, 1) / reps;
  }
  for (Eigen::Index l = 0; l < de.size(); ++l) {
    EXPECT_NEAR(dj[l], de[l], 0.05 * de[l]) << l;
    EXPECT_NEAR(dm[l], de[l], 0.05 * de[l]) << l;
  }
}

TEST(Dgec, ThreadCountDoesNotChangeResults) {
  const SmallProblem p = small_problem(32, 2, 2, 6);
  const CgFidelity f1(p.fm, p.meas.y, p.meas.gamma_w, 10, TraceMode::kMonteCarlo);
  SolverConfig cfg;
  cfg.depth = 2;
  cfg.max_iters = 5;
  cfg.f2_divergence = DivergenceMode::kMonteCarlo;
  const GecResult a = run_dgec(f1, soft_threshold_denoiser(1.0), cfg, std::nullopt, 9);
  cfg.threads = 3;
  const GecResult b = run_dgec(f1, soft_threshold_denoiser(1.0), cfg, std::nullopt, 9);
  EXPECT_EQ((a.image.data - b.image.data).norm(), 0.0);
  EXPECT_EQ((a.state.gamma2.gammas - b.state.gamma2.gammas).norm(), 0.0);
}

TEST(Dgec, ImprovesOnZeroFilledAndRecordsDiagnostics) {
  const std::size_t n = 64;
  const std::uint64_t seed = 7;
  const auto fm = std::make_shared<const ForwardModel>(make_point_mask(n, n, 3.0, 8.0, 4, seed),
                                                       generate_coil_maps(n, n, 1, 0.6, seed), 3);
  const ComplexImage x0 = generate_phantom(n, n, PhantomKind::kSheppLogan, seed);
  const MeasurementSet meas = simulate_measurements(x0, *fm, 40.0, seed);
  const CgFidelity f1(fm, meas.y, meas.gamma_w, 10, TraceMode::kJvp);
  ExperimentConfig ecfg;
  ecfg.height = ecfg.width = n;
  ecfg.solver.depth = 3;
  const CalibrationStats calib = build_calibration(ecfg, *fm, seed);
  SolverConfig cfg;
  cfg.depth = 3;
  cfg.max_iters = 30;
  cfg.init_mode = InitMode::kBhyPlusNoise;
  const GroundTruth truth{x0, dwt2_haar(x0, 3), {}};
  int seen = 0;
  const GecResult res = run_dgec(f1, soft_threshold_denoiser(1.0), cfg, calib, 3, &truth, {},
                                 [&](const GecState&, const IterationRecord&) { ++seen; }, fm.get(), &meas.y);
  ASSERT_FALSE(res.diagnostics.rows.empty());
  EXPECT_EQ(static_cast<std::size_t>(seen), res.diagnostics.size());
  const IterationRecord& last = res.diagnostics.rows.back();
  EXPECT_EQ(last.predicted_sd.size(), 10);
  EXPECT_EQ(last.empirical_sd.size(), 10);
  EXPECT_TRUE(std::isfinite(last.residual_norm));
  const double zf = psnr(apply_AH(meas.y, *fm), x0);
  EXPECT_GT(last.psnr, zf + 3.0);
}

TEST(Dgec, ZeroIterationsReturnsInitialEstimate) {
  const SmallProblem p = small_problem(16, 1, 1, 8);
  const CgFidelity f1(p.fm, p.meas.y, p.meas.gamma_w, 10, TraceMode::kJvp);
  SolverConfig cfg;
  cfg.depth = 1;
  cfg.max_iters = 0;
  const GecResult res = run_dgec(f1, soft_threshold_denoiser(1.0), cfg, std::nullopt, 1);
  EXPECT_LE((res.image.data - apply_AH(p.meas.y, *p.fm).data).norm(), 1e-12 * res.image.data.norm());
  EXPECT_TRUE(res.diagnostics.rows.empty());
}

TEST(Dgec, NonFiniteDenoiserIsReported) {
  const SmallProblem p = small_problem(16, 1, 1, 9);
  const CgFidelity f1(p.fm, p.meas.y, p.meas.gamma_w, 10, TraceMode::kJvp);
  SolverConfig cfg;
  cfg.depth = 1;
  cfg.max_iters = 2;
  const WaveletDenoiser bad = [](const WaveletPyramid& r, const PrecisionVector&, std::uint64_t) {
    WaveletPyramid out = r;
    out.coeffs[0] = cplx(std::numeric_limits<double>::quiet_NaN(), 0.0);
    return DenoiserResult{out, std::nullopt};
  };
  EXPECT_THROW(run_dgec(f1, bad, cfg, std::nullopt, 1), NumericalError);
}

TEST(Ec, FrozenPrecisionsStayFixed) {
  ScalarEstimator id{[](const CVector& r, double) { return r; }, [](const CVector&, double) { return 0.5; }};
  EcState s;
  s.r1 = CVector::Ones(4);
  s.gamma1 = 2.0;
  s.gamma2 = 3.0;
  EcOptions opt;
  opt.freeze_precisions = true;
  const EcState n = ec_iterate(s, id, id, opt);
  EXPECT_DOUBLE_EQ(n.gamma2, 3.0);
  EXPECT_DOUBLE_EQ(n.gamma1, 2.0);
  EXPECT_DOUBLE_EQ(n.eta1, 5.0);
}
