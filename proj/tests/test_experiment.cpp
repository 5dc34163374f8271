#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dgec/commands.hpp"

using namespace dgec;

namespace {

ExperimentConfig small_config(const std::filesystem::path& out) {
  ExperimentConfig cfg;
  cfg.seed = 11;
  cfg.height = cfg.width = 32;
  cfg.calib_size = 8;
  cfg.acceleration = 3.0;
  cfg.snr_db = 35.0;
  cfg.solver.depth = 2;
  cfg.solver.max_iters = 6;
  cfg.out_dir = out;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class Scratch : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("dgec_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

}  // namespace

TEST(Seeds, TrialSeeds) {
  EXPECT_EQ(trial_seeds(5, 1), std::vector<std::uint64_t>{5});
  const auto s = trial_seeds(5, 3);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_NE(s[0], s[1]);
  EXPECT_EQ(s, trial_seeds(5, 3));
  EXPECT_THROW(trial_seeds(5, 0), ArgumentError);
  EXPECT_NE(derive_seed(1, Stream::kMask), derive_seed(1, Stream::kCoils));
  EXPECT_NE(derive_seed(1, Stream::kProbe, {0, 1}), derive_seed(1, Stream::kProbe, {1, 0}));
}

TEST(RunIndexed, KeepsOrderAndRethrows) {
  const auto v = run_indexed<int>(20, 4, [](std::size_t k) { return static_cast<int>(k * k); });
  for (std::size_t k = 0; k < 20; ++k) EXPECT_EQ(v[k], static_cast<int>(k * k));
  EXPECT_THROW(run_indexed<int>(5, 2, [](std::size_t k) -> int {
                 if (k == 3) throw NumericalError("x");
                 return 0;
               }),
               NumericalError);
}

TEST_F(Scratch, SimulateThenLoadReproducesProblem) {
  ExperimentConfig cfg = small_config(dir_);
  cfg.coils = 3;
  cfg.coil_support = 0.9;
  const Problem p = build_problem(cfg, *cfg.seed);
  save_problem(p, dir_);
  for (const char* f : {"truth.cim", "mask.msk", "coil_00.cim", "coil_02.cim", "kspace_01.cim", "measurement.ini"}) {
    EXPECT_TRUE(std::filesystem::exists(dir_ / f)) << f;
  }
  cfg.input_dir = dir_;
  const Problem q = load_problem(cfg);
  EXPECT_EQ(q.fm->mask.sampled, p.fm->mask.sampled);
  EXPECT_EQ(q.pixel_support, p.pixel_support);
  EXPECT_DOUBLE_EQ(q.meas.gamma_w, p.meas.gamma_w);
  // float32 storage
  EXPECT_LE((q.meas.y - p.meas.y).norm(), 1e-6 * p.meas.y.norm());
  ASSERT_TRUE(q.truth.has_value());
  EXPECT_LE((q.truth->x0.data - p.truth->x0.data).norm(), 1e-6 * p.truth->x0.data.norm());
}

TEST_F(Scratch, LoadReportsMissingFiles) {
  ExperimentConfig cfg = small_config(dir_);
  cfg.input_dir = dir_ / "nothing";
  EXPECT_THROW(load_problem(cfg), FormatError);
  save_problem(build_problem(cfg, 1), dir_);
  std::filesystem::remove(dir_ / "kspace_00.cim");
  cfg.input_dir = dir_;
  EXPECT_THROW(load_problem(cfg), FormatError);
}

TEST(Algorithms, EveryAlgorithmRunsAndBeatsZeroFilled) {
  ExperimentConfig cfg = small_config("unused");
  const Problem p = build_problem(cfg, 3);
  for (Algorithm a : {Algorithm::kDgec, Algorithm::kEc, Algorithm::kAmp, Algorithm::kPnpPgd, Algorithm::kPrAdmm}) {
    cfg.algorithm = a;
    cfg.solver.max_iters = a == Algorithm::kDgec || a == Algorithm::kEc ? 10 : 60;
    const RunOutput out = run_algorithm(cfg, p, 3);
    EXPECT_TRUE(out.image.data.allFinite()) << algorithm_name(a);
    EXPECT_FALSE(out.rows.empty()) << algorithm_name(a);
    if (a != Algorithm::kAmp) EXPECT_GT(out.psnr, out.zero_filled_psnr) << algorithm_name(a);  // AMP: runs only
    EXPECT_GT(out.ssim, 0.0) << algorithm_name(a);
  }
}

TEST(Algorithms, DiagnosticsCsvLayout) {
  ExperimentConfig cfg = small_config("unused");
  const RunOutput out = run_algorithm(cfg, build_problem(cfg, 2), 2);
  std::ostringstream os;
  write_diagnostics_csv(os, out, 4, true);
  std::istringstream in(os.str());
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header.rfind("trial,iter,psnr,pred_sd_LL2,", 0), 0u) << header;
  EXPECT_NE(header.find(",emp_sd_HH1,rel_change,residual"), std::string::npos) << header;
  EXPECT_EQ(first.rfind("4,1,", 0), 0u);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(first.begin(), first.end(), ','));
}

TEST_F(Scratch, RecoverIsByteReproducible) {
  ExperimentConfig cfg = small_config(dir_ / "a");
  cfg.solver.f1_trace = TraceMode::kMonteCarlo;
  cfg.solver.init_mode = InitMode::kBhyPlusNoise;
  cmd_recover(cfg, 2);
  cfg.out_dir = dir_ / "b";
  cmd_recover(cfg, 2);
  for (const char* f : {"diagnostics.csv", "summary.csv", "recon_00.cim", "recon_01.cim"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
    EXPECT_FALSE(slurp(dir_ / "a" / f).empty()) << f;
  }
}

TEST_F(Scratch, RecoverFromSimulatedDirectory) {
  ExperimentConfig cfg = small_config(dir_ / "sim");
  cmd_simulate(cfg);
  cfg.input_dir = dir_ / "sim";
  cfg.out_dir = dir_ / "rec";
  const RecoverReport rep = cmd_recover(cfg);
  ASSERT_EQ(rep.runs.size(), 1u);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "rec" / "recon.cim"));
  EXPECT_TRUE(std::isfinite(rep.runs[0].psnr));
}

TEST_F(Scratch, MaskGenWritesMask) {
  ExperimentConfig cfg = small_config(dir_);
  const std::string msg = cmd_mask_gen(cfg);
  const SamplingMask m = load_msk1(dir_ / "mask.msk");
  EXPECT_EQ(m.count(), 32u * 32u / 3u);
  EXPECT_NE(msg.find("R=3/1"), std::string::npos);
  cfg.seed.reset();
  EXPECT_THROW(cmd_mask_gen(cfg), ConfigError);
}
