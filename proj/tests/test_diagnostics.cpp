#include <filesystem>
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "dgec/diagnostics.hpp"
#include "dgec/random.hpp"

using namespace dgec;

namespace {

const std::filesystem::path kFixtures = DGEC_FIXTURE_DIR;

RMatrix pattern_a() {
  RMatrix a(32, 40);
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 40; ++c) a(r, c) = 0.5 + 0.4 * std::sin(0.3 * r) * std::cos(0.2 * c);
  }
  return a;
}

}  // namespace

TEST(Psnr, KnownValues) {
  ComplexImage x0(2, 2);
  x0.data << 1.0, 0.0, 0.0, 0.0;
  ComplexImage x = x0;
  x.data[1] = 0.1;
  // N max^2 / err = 4 / 0.01
  EXPECT_NEAR(psnr(x, x0), 10.0 * std::log10(400.0), 1e-12);
  EXPECT_TRUE(std::isinf(psnr(x0, x0)));
  EXPECT_THROW(psnr(x0, ComplexImage(2, 2)), ArgumentError);
  EXPECT_THROW(psnr(x0, ComplexImage(2, 3)), ShapeError);
}

TEST(Ssim, MatchesScikitImage) {
  std::ifstream ref(kFixtures / "ssim_reference.txt");
  double s1 = 0.0, s2 = 0.0;
  ref >> s1 >> s2;
  ASSERT_TRUE(ref);
  const RMatrix a = pattern_a();
  RMatrix b = a;
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 40; ++c) b(r, c) += 0.1 * std::sin(1.7 * r + 2.3 * c);
  }
  EXPECT_NEAR(ssim(a, b), s1, 1e-10);
  const RMatrix affine = (0.7 * a.array() + 0.1).matrix();
  EXPECT_NEAR(ssim(a, affine), s2, 1e-10);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, ComplexUsesMagnitudes) {
  const RMatrix a = pattern_a();
  ComplexImage x(32, 40);
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 40; ++c) x(r, c) = std::polar(a(r, c), 0.3 * r);
  }
  EXPECT_NEAR(ssim(x, x), 1.0, 1e-12);
  EXPECT_THROW(ssim(RMatrix::Zero(5, 5), RMatrix::Zero(5, 5)), ShapeError);
}

TEST(TTest, ZeroMeanSamplesRarelyReject) {
  Rng rng(3);
  int rejects = 0;
  for (int k = 0; k < 400; ++k) {
    const RVector v = real_gaussian(50, 1.0, rng);
    const auto [t, p] = one_sample_t(std::vector<double>(v.data(), v.data() + v.size()));
    rejects += p < 0.05;
  }
  const auto [lo, hi] = binomial_interval(400, 0.05);
  EXPECT_GE(rejects, static_cast<int>(lo));
  EXPECT_LE(rejects, static_cast<int>(hi));
  EXPECT_TRUE(std::isnan(one_sample_t({1.0, 1.0, 1.0}).second));
}

TEST(TTest, KnownStatistic) {
  // mean 2, sd sqrt(2/3), n 4; two-sided p for 3 dof
  const auto [t, p] = one_sample_t({1.0, 2.0, 3.0, 2.0});
  EXPECT_NEAR(t, 2.0 / (std::sqrt(2.0 / 3.0) / 2.0), 1e-12);
  EXPECT_NEAR(p, 0.0162766, 1e-6);
}

TEST(BinomialInterval, CoversTheMass) {
  const auto [lo, hi] = binomial_interval(208, 0.05);
  EXPECT_LE(lo, 11u);
  EXPECT_GE(hi, 11u);
  EXPECT_EQ(lo, 5u);
  EXPECT_EQ(hi, 17u);
}

TEST(SubbandReport, CountsRealAndImaginaryTests) {
  const SubbandLayout lay(32, 32, 2);
  Rng rng(1);
  const WaveletPyramid c0(lay, complex_gaussian(1024, 1.0, rng));
  WaveletPyramid r2 = c0;
  r2.coeffs += complex_gaussian(1024, 0.01, rng);
  const SubbandErrorReport rep = subband_error_report(r2, c0, {});
  EXPECT_EQ(rep.subbands.size(), 7u);
  EXPECT_EQ(rep.tests(), 14u);
  for (const auto& s : rep.subbands) EXPECT_NEAR(s.sd, 0.1, 0.05);
  r2.coeffs.array() += cplx(1.0, 0.0);
  EXPECT_EQ(subband_error_report(r2, c0, {}).rejections() >= 7u, true);
}

TEST(QqAndWhiteness, GaussianNoiseLooksGaussianAndWhite) {
  Rng rng(5);
  const RVector v = real_gaussian(4000, 4.0, rng);
  const auto qq = qq_data(std::vector<double>(v.data(), v.data() + v.size()), 9);
  ASSERT_EQ(qq.size(), 9u);
  for (const auto& [theory, sample] : qq) EXPECT_NEAR(sample, theory, 0.1);
  const CVector white = complex_gaussian(64 * 64, 1.0, rng);
  EXPECT_LT(std::abs(*whiteness_score(white, 64, 64)), 0.05);
  CVector smooth(64 * 64);
  for (int i = 0; i < 64 * 64; ++i) smooth[i] = std::sin(0.05 * (i % 64)) + std::cos(0.05 * (i / 64));
  EXPECT_GT(*whiteness_score(smooth, 64, 64), 0.9);
  EXPECT_FALSE(whiteness_score(CVector::Ones(16), 4, 4).has_value());
}

TEST(Csv, NumbersRoundTrip) {
  EXPECT_EQ(csv_number(0.1), "0.1");
  EXPECT_EQ(csv_number(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(csv_number(std::nan("")), "nan");
  const double x = 1.0 / 3.0;
  EXPECT_EQ(std::stod(csv_number(x)), x);
  std::ostringstream os;
  write_csv_row(os, {"a", "b", "c"});
  EXPECT_EQ(os.str(), "a,b,c\n");
}
