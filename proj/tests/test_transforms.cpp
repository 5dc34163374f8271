#include <gtest/gtest.h>

#include "dgec/random.hpp"
#include "dgec/transforms.hpp"

using namespace dgec;

namespace {

ComplexImage random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  return ComplexImage(h, w, complex_gaussian(h * w, 1.0, rng));
}

}  // namespace

TEST(Dft, RoundTripAndUnitarity) {
  const ComplexImage x = random_image(12, 20, 3);
  const ComplexImage k = dft2(x);
  EXPECT_NEAR(k.data.norm(), x.data.norm(), 1e-12 * x.data.norm());
  EXPECT_LE((idft2(k).data - x.data).norm(), 1e-12 * x.data.norm());
}

TEST(Dft, DcTermIsScaledSum) {
  const ComplexImage x = random_image(8, 4, 5);
  const cplx dc = dft2(x).data[0];
  const cplx expect = x.data.sum() / std::sqrt(32.0);
  EXPECT_NEAR(std::abs(dc - expect), 0.0, 1e-12);
}

TEST(Dft, ShiftsAreInverse) {
  const ComplexImage x = random_image(7, 6, 1);
  EXPECT_EQ((ifftshift(fftshift(x)).data - x.data).norm(), 0.0);
  EXPECT_EQ(fftshift(x)(3, 3), x(0, 0));
}

TEST(Dft, SignedFrequency) {
  EXPECT_EQ(signed_frequency(0, 8), 0);
  EXPECT_EQ(signed_frequency(3, 8), 3);
  EXPECT_EQ(signed_frequency(4, 8), -4);
  EXPECT_EQ(signed_frequency(7, 8), -1);
}

TEST(Haar, OrthogonalAtEveryDepth) {
  const ComplexImage x = random_image(32, 16, 9);
  for (int depth = 0; depth <= 4; ++depth) {
    const WaveletPyramid c = dwt2_haar(x, depth);
    EXPECT_NEAR(c.coeffs.norm(), x.data.norm(), 1e-12 * x.data.norm()) << depth;
    EXPECT_LE((idwt2_haar(c).data - x.data).norm(), 1e-12 * x.data.norm()) << depth;
  }
}

TEST(Haar, ConstantImageLivesInCoarseBand) {
  ComplexImage x(16, 16);
  x.data.setConstant(cplx(2.0, -1.0));
  const WaveletPyramid c = dwt2_haar(x, 3);
  const auto ll = c.band(0);
  EXPECT_NEAR((c.coeffs.norm() - ll.norm()), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(ll[0] - cplx(16.0, -8.0)), 0.0, 1e-12);
}

TEST(Haar, LayoutCoversAllCoefficients) {
  const SubbandLayout lay(64, 32, 3);
  ASSERT_EQ(lay.count(), 10u);
  EXPECT_EQ(lay[0].name(), "LL3");
  EXPECT_EQ(lay[1].name(), "LH3");
  EXPECT_EQ(lay[9].name(), "HH1");
  std::size_t total = 0;
  for (const Subband& s : lay.subbands()) {
    EXPECT_EQ(s.offset, total);
    total += s.size();
  }
  EXPECT_EQ(total, lay.total_size());
  EXPECT_EQ(lay.subband_of(0), 0u);
  EXPECT_EQ(lay.subband_of(lay.total_size() - 1), 9u);
  EXPECT_EQ(lay.find(1, Orientation::kHL), 8u);
}

TEST(Haar, RejectsIndivisibleShapes) {
  EXPECT_THROW(SubbandLayout(12, 16, 3), ShapeError);
  EXPECT_THROW(SubbandLayout(16, 16, -1), ArgumentError);
  EXPECT_THROW(idwt2_haar(WaveletPyramid()), ShapeError);
}

TEST(Haar, SingleLevelMatchesDefinition) {
  ComplexImage x(2, 2, CVector::Zero(4));
  x(0, 0) = 1.0;
  x(0, 1) = 2.0;
  x(1, 0) = 3.0;
  x(1, 1) = 5.0;
  const WaveletPyramid c = dwt2_haar(x, 1);
  // LL is the scaled 2x2 sum; each detail band has norm fixed by orthogonality.
  EXPECT_NEAR(std::abs(c.coeffs[0] - cplx(5.5)), 0.0, 1e-14);
  EXPECT_NEAR(c.coeffs.squaredNorm(), 39.0, 1e-12);
}
