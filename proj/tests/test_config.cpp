#include <gtest/gtest.h>

#include <sstream>

#include "dgec/config.hpp"

using namespace dgec;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

}  // namespace

TEST(Config, DefaultsValidate) {
  ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_FALSE(cfg.seed.has_value());
  EXPECT_DOUBLE_EQ(cfg.mask_density_exponent(), 8.0);
  cfg.mask = MaskKind::kLine2d;
  EXPECT_DOUBLE_EQ(cfg.mask_density_exponent(), 4.0);
}

TEST(Config, ParsesKeysCommentsAndInf) {
  const ExperimentConfig cfg = parse(
      "# experiment\n"
      "seed = 42\n"
      "; another comment\n"
      "phantom = piecewise_smooth\n"
      "height = 64\n"
      "width = 32\n"
      "mask = line2d\n"
      "acceleration = 2.5   # trailing note\n"
      "snr_db = inf\n"
      "algorithm = pr_admm\n"
      "max_iters = 7\n"
      "damping_rho = 0.5\n"
      "init_mode = bhy_plus_noise\n"
      "f1_trace = monte_carlo\n"
      "denoiser = soft_threshold\n"
      "lambda = 1.25\n");
  EXPECT_EQ(*cfg.seed, 42u);
  EXPECT_EQ(cfg.phantom, PhantomKind::kPiecewiseSmooth);
  EXPECT_EQ(cfg.height, 64u);
  EXPECT_EQ(cfg.width, 32u);
  EXPECT_EQ(cfg.mask, MaskKind::kLine2d);
  EXPECT_DOUBLE_EQ(cfg.acceleration, 2.5);
  EXPECT_TRUE(std::isinf(cfg.snr_db));
  EXPECT_EQ(cfg.algorithm, Algorithm::kPrAdmm);
  EXPECT_EQ(cfg.solver.max_iters, 7);
  EXPECT_DOUBLE_EQ(cfg.solver.damping_rho, 0.5);
  EXPECT_EQ(cfg.solver.init_mode, InitMode::kBhyPlusNoise);
  EXPECT_EQ(cfg.solver.f1_trace, TraceMode::kMonteCarlo);
  EXPECT_DOUBLE_EQ(cfg.lambda, 1.25);
}

TEST(Config, RejectsUnknownKeysBadValuesAndSections) {
  EXPECT_THROW(parse("colour = red\n"), ConfigError);
  EXPECT_THROW(parse("height = tall\n"), ConfigError);
  EXPECT_THROW(parse("height = 12x\n"), ConfigError);
  EXPECT_THROW(parse("algorithm = magic\n"), ConfigError);
  EXPECT_THROW(parse("[solver]\nmax_iters = 3\n"), ConfigError);
  EXPECT_THROW(parse("auto_tune = maybe\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/dgec.ini"), ConfigError);
}

TEST(Config, ValidationCatchesInconsistentSettings) {
  ExperimentConfig cfg;
  cfg.height = 100;  // not divisible by 2^4
  EXPECT_THROW(cfg.validate(), ShapeError);
  cfg = {};
  cfg.denoiser = DenoiserKind::kExternal;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.solver.auto_tune = true;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.solver.damping_rho = 0.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.solver.init_mode = InitMode::kBhyPlusNoise;
  cfg.calibration_samples = 0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
}

TEST(Config, AlgorithmNamesRoundTrip) {
  for (Algorithm a : {Algorithm::kDgec, Algorithm::kEc, Algorithm::kAmp, Algorithm::kPnpPgd, Algorithm::kPrAdmm}) {
    EXPECT_EQ(parse_algorithm(algorithm_name(a)), a);
  }
}
