#include <gtest/gtest.h>

#include "dgec/forward_model.hpp"
#include "dgec/gec.hpp"

using namespace dgec;

TEST(Acceleration, FromDouble) {
  const Acceleration a = Acceleration::from_double(2.5);
  EXPECT_EQ(a.num, 5u);
  EXPECT_EQ(a.den, 2u);
  EXPECT_EQ(Acceleration::from_double(4.0).den, 1u);
  EXPECT_THROW(Acceleration::from_double(0.5), ArgumentError);
}

TEST(Masks, PointMaskHitsBudgetAndCalibration) {
  const SamplingMask m = make_point_mask(64, 64, 4.0, 8.0, 8, 11);
  EXPECT_EQ(m.count(), 64u * 64u / 4u);
  // DC and its neighbours are always sampled.
  EXPECT_EQ(m.sampled[0], 1);
  EXPECT_EQ(m.sampled[1], 1);
  EXPECT_EQ(m.sampled[63], 1);
  EXPECT_EQ(m.sampled[64 * 63], 1);
}

TEST(Masks, LineMaskSamplesWholeColumns) {
  const SamplingMask m = make_line_mask(32, 64, 4.0, 4.0, 4, 2);
  ASSERT_EQ(m.kind, MaskKind::kLine2d);
  for (std::size_t c = 0; c < 64; ++c) {
    const std::uint8_t v = m.sampled[c];
    for (std::size_t r = 1; r < 32; ++r) ASSERT_EQ(m.sampled[r * 64 + c], v) << c;
  }
  EXPECT_EQ(m.count(), 32u * 16u);
}

TEST(Masks, DeterministicPerSeed) {
  EXPECT_EQ(make_point_mask(32, 32, 3.0, 8.0, 4, 5).sampled, make_point_mask(32, 32, 3.0, 8.0, 4, 5).sampled);
  EXPECT_NE(make_point_mask(32, 32, 3.0, 8.0, 4, 5).sampled, make_point_mask(32, 32, 3.0, 8.0, 4, 6).sampled);
}

TEST(Coils, SumOfSquaresIsOneOnSupport) {
  const CoilMaps c = generate_coil_maps(32, 32, 4, 0.6, 1, 0.9);
  for (std::size_t i = 0; i < 32 * 32; ++i) {
    double e = 0.0;
    for (const CVector& m : c.maps) e += std::norm(m[i]);
    EXPECT_NEAR(e, c.support[i] ? 1.0 : 0.0, 1e-12);
  }
}

TEST(Operators, AdjointIdentity) {
  auto fm = ForwardModel(make_point_mask(16, 16, 2.0, 8.0, 4, 3), generate_coil_maps(16, 16, 3, 0.6, 3), 2);
  Rng rng(4);
  const ComplexImage x(16, 16, complex_gaussian(256, 1.0, rng));
  const CVector y = complex_gaussian(fm.measurements(), 1.0, rng);
  const cplx lhs = apply_A(x, fm).dot(y);
  const cplx rhs = x.data.dot(apply_AH(y, fm).data);
  EXPECT_NEAR(std::abs(lhs - rhs), 0.0, 1e-10);

  const WaveletPyramid c = dwt2_haar(x, 2);
  EXPECT_LE((apply_B(c, fm) - apply_A(x, fm)).norm(), 1e-12 * x.data.norm());
  EXPECT_LE((apply_BHB(c, fm).coeffs - apply_BH(apply_B(c, fm), fm).coeffs).norm(), 1e-12 * x.data.norm());
}

TEST(Operators, FullSamplingSingleCoilIsUnitary) {
  const ForwardModel fm(full_mask(8, 8), generate_coil_maps(8, 8, 1, 0.6, 1), 1);
  const CMatrix B = dense_B(fm);
  EXPECT_LE((B.adjoint() * B - CMatrix::Identity(64, 64)).norm(), 1e-12);
}

TEST(Measurements, SnrSetsNoiseLevel) {
  const ForwardModel fm(full_mask(64, 64), generate_coil_maps(64, 64, 1, 0.6, 1), 0);
  const ComplexImage x0 = generate_phantom(64, 64, PhantomKind::kSheppLogan, 1);
  const MeasurementSet m = simulate_measurements(x0, fm, 20.0, 7);
  const CVector clean = apply_A(x0, fm);
  const double snr = 10.0 * std::log10(clean.squaredNorm() / (m.y - clean).squaredNorm());
  EXPECT_NEAR(snr, 20.0, 0.2);
  EXPECT_NEAR(1.0 / m.gamma_w, (m.y - clean).squaredNorm() / static_cast<double>(clean.size()), 0.05 / m.gamma_w);
}

TEST(Measurements, InfiniteSnrIsNoiseless) {
  const ForwardModel fm(full_mask(16, 16), generate_coil_maps(16, 16, 1, 0.6, 1), 0);
  const ComplexImage x0 = generate_phantom(16, 16, PhantomKind::kPiecewiseSmooth, 2);
  const MeasurementSet m = simulate_measurements(x0, fm, std::numeric_limits<double>::infinity(), 1);
  EXPECT_EQ((m.y - apply_A(x0, fm)).norm(), 0.0);
  EXPECT_TRUE(std::isfinite(m.gamma_w));
  EXPECT_THROW(simulate_measurements(x0, fm, std::nan(""), 1), ArgumentError);
}

TEST(Phantoms, ShapesAndDeterminism) {
  for (PhantomKind k : {PhantomKind::kSheppLogan, PhantomKind::kPiecewiseSmooth, PhantomKind::kRandomWaveletSparse}) {
    const ComplexImage a = generate_phantom(32, 48, k, 3);
    EXPECT_EQ(a.height, 32u);
    EXPECT_EQ(a.width, 48u);
    EXPECT_TRUE(a.data.allFinite());
    EXPECT_GT(a.data.norm(), 0.0);
    EXPECT_EQ((a.data - generate_phantom(32, 48, k, 3).data).norm(), 0.0);
  }
  EXPECT_EQ(parse_phantom_kind(phantom_kind_name(PhantomKind::kPiecewiseSmooth)), PhantomKind::kPiecewiseSmooth);
  EXPECT_THROW(parse_phantom_kind("brain"), ArgumentError);
}
