#include <gtest/gtest.h>

#include "dgec/cg.hpp"
#include "dgec/random.hpp"

using namespace dgec;

namespace {

CMatrix random_hpd(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  const CMatrix G = CMatrix(n, n).unaryExpr([&](cplx) { return complex_gaussian(1, 1.0, rng)[0]; });
  CMatrix S = G.adjoint() * G;
  S.diagonal().array() += 1.0;
  return S;
}

}  // namespace

TEST(ConjugateGradient, ConvergesWithinDimensionSteps) {
  const CMatrix S = random_hpd(30, 2);
  Rng rng(3);
  const CVector b = complex_gaussian(30, 1.0, rng);
  const CgResult res = conjugate_gradient([&](const CVector& x) -> CVector { return S * x; }, b, CVector::Zero(30), 200);
  const CVector exact = S.ldlt().solve(b);
  EXPECT_LE((res.x - exact).norm(), 1e-9 * exact.norm());
  EXPECT_LE(res.relative_residual, 1e-12);
  EXPECT_FALSE(res.breakdown);
}

TEST(ConjugateGradient, RespectsIterationBudgetAndWarmStart) {
  const CMatrix S = random_hpd(40, 5);
  Rng rng(6);
  const CVector b = complex_gaussian(40, 1.0, rng);
  auto op = [&](const CVector& x) -> CVector { return S * x; };
  const CgResult two = conjugate_gradient(op, b, CVector::Zero(40), 2);
  EXPECT_EQ(two.iterations, 2);
  const CVector exact = S.ldlt().solve(b);
  const CgResult warm = conjugate_gradient(op, b, exact, 5);
  EXPECT_EQ(warm.iterations, 0);
  EXPECT_LE((warm.x - exact).norm(), 1e-9 * exact.norm());
  const CgResult none = conjugate_gradient(op, b, CVector::Zero(40), 0);
  EXPECT_EQ(none.x.norm(), 0.0);
}

TEST(ConjugateGradient, ZeroRightHandSide) {
  const CgResult res = conjugate_gradient([](const CVector& x) -> CVector { return x; }, CVector::Zero(5), CVector::Zero(5), 10);
  EXPECT_EQ(res.x.norm(), 0.0);
}

TEST(ConjugateGradient, FlagsIndefiniteOperator) {
  CVector d(3);
  d << 1.0, -1.0, 0.0;
  const CgResult res =
      conjugate_gradient([&](const CVector& x) -> CVector { return d.cwiseProduct(x); }, CVector::Ones(3), CVector::Zero(3), 10);
  EXPECT_TRUE(res.breakdown);
}

TEST(ConjugateGradient, BadArguments) {
  auto op = [](const CVector& x) -> CVector { return x; };
  EXPECT_THROW(conjugate_gradient(op, CVector::Ones(3), CVector::Zero(2), 3), ShapeError);
  EXPECT_THROW(conjugate_gradient(op, CVector::Ones(3), CVector::Zero(3), -1), ArgumentError);
}
