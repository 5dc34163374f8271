#include <gtest/gtest.h>

#include "dgec/oracle.hpp"

using namespace dgec;

TEST(RandomOrthogonal, IsOrthogonalAndSeeded) {
  const RMatrix V = random_orthogonal(20, 3);
  EXPECT_LE((V.transpose() * V - RMatrix::Identity(20, 20)).norm(), 1e-12);
  EXPECT_EQ((V - random_orthogonal(20, 3)).norm(), 0.0);
  EXPECT_GT((V - random_orthogonal(20, 4)).norm(), 1.0);
}

TEST(Weingarten, SecondAndFourthMoments) {
  const MomentReport rep = weingarten_moment_check(8, 20000, 5);
  EXPECT_NEAR(rep.mean_square, 1.0 / 8.0, 1e-12);  // exact for every orthogonal matrix
  EXPECT_NEAR(rep.mean_entry, 0.0, 0.01);
  ASSERT_EQ(rep.fourth.size(), 4u);
  EXPECT_LT(rep.max_relative_deviation(), 0.05);
}

TEST(Weingarten, TrialChunkingIsDeterministic) {
  const MomentReport a = weingarten_moment_check(6, 500, 1);
  const MomentReport b = weingarten_moment_check(6, 500, 1);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(a.fourth[k].empirical, b.fourth[k].empirical);
}

TEST(EcErrorModel, TraceOfDVanishes) {
  Rng rng(7);
  const RMatrix A = RMatrix(10, 16).unaryExpr([&](double) { return real_gaussian(1, 1.0, rng)[0]; });
  const EcErrorModel m = build_ec_error_model(A, 0.7, 3.0);
  EXPECT_NEAR(m.trace_D(), 0.0, 1e-12);
  EXPECT_NEAR(m.Sigma.mean(), 1.0, 1e-12);
  EXPECT_GT(m.gamma2(), 0.0);
}

TEST(EcErrorModel, RecursionMatchesDirectHalfIteration) {
  Rng rng(8);
  for (Eigen::Index N : {4, 9, 24}) {
    const RMatrix A = RMatrix(N / 2 + 1, N).unaryExpr([&](double) { return real_gaussian(1, 1.0, rng)[0]; });
    const RVector x0 = real_gaussian(N, 1.0, rng);
    const RVector e1 = real_gaussian(N, 0.5, rng);
    const RVector w = real_gaussian(A.rows(), 0.1, rng);
    EXPECT_LT(ec_recursion_equivalence(A, 2.0, 10.0, x0, e1, w), 1e-10) << N;
  }
}

TEST(Epsilon2, FormulaLimits) {
  const RVector lambda = RVector::LinSpaced(16, 0.1, 10.0);
  const double g1 = 1.5;
  const double alpha = (lambda.array() / (lambda.array() + g1)).mean();
  const double g2 = g1 * alpha / (1.0 - alpha);
  // eps1 = 1/gamma1 is the matched case: eps2 = 1/gamma2.
  EXPECT_NEAR(epsilon2_formula(lambda, g1, 1.0 / g1), 1.0 / g2, 1e-14);
  EXPECT_GT(epsilon2_formula(lambda, g1, 2.0 / g1), 1.0 / g2);
}

TEST(Epsilon2, MonteCarloAgreesWithFormula) {
  const RVector lambda = RVector::LinSpaced(32, 0.05, 20.0);
  const Epsilon2Report rep = epsilon2_covariance_check(lambda, 1.0, 100.0, 4.0, 3000, 2);
  EXPECT_LT(rep.diagonal_relative_error(), 0.05);
  EXPECT_LT(std::abs(rep.grand_mean_z), 4.0);
  EXPECT_EQ(rep.N, 32u);
}

TEST(ChunkedTrials, SumsInFixedOrder) {
  const double total = detail::chunked_trials<double>(1000, 7, 0.0, [](std::size_t t, double& acc) { acc += t; });
  EXPECT_DOUBLE_EQ(total, 999.0 * 1000.0 / 2.0);
}
