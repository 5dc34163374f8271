#include <gtest/gtest.h>

#include "dgec/baselines.hpp"

using namespace dgec;

namespace {

Mat<double> gaussian_matrix(Eigen::Index m, Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
  return Mat<double>::NullaryExpr(m, n, [&] { return normal(rng); });
}

}  // namespace

TEST(BernoulliGaussian, DenoiserLimits) {
  const BernoulliGaussian p{0.1, 1.0};
  // Far from zero the posterior mean is the slab Wiener estimate.
  EXPECT_NEAR(p.mmse(5.0, 0.01).first, 5.0 / 1.01, 1e-9);
  EXPECT_NEAR(p.mmse(0.0, 0.01).first, 0.0, 1e-15);
  // Derivative by finite differences.
  const double h = 1e-6;
  for (double r : {0.05, 0.2, 0.5, 1.0}) {
    const double fd = (p.mmse(r + h, 0.04).first - p.mmse(r - h, 0.04).first) / (2 * h);
    EXPECT_NEAR(p.mmse(r, 0.04).second, fd, 1e-5) << r;
  }
}

TEST(BernoulliGaussian, MmseErrorMatchesMonteCarlo) {
  const BernoulliGaussian p{0.1, 1.0};
  Rng rng(2);
  for (double tau : {0.5, 0.02, 1e-3}) {
    const int n = 400000;
    const Vec<double> x = p.sample(n, rng);
    const Vec<double> r = x + real_gaussian(n, tau, rng);
    double se = 0.0;
    for (int i = 0; i < n; ++i) se += std::pow(p.mmse(r[i], tau).first - x[i], 2);
    const double mc = se / n;
    EXPECT_NEAR(p.mmse_error(tau), mc, 0.03 * mc) << tau;
  }
  EXPECT_NEAR(p.mmse_error(1e6), p.second_moment(), 1e-6);
}

TEST(StateEvolution, FixedPointRecursion) {
  const SeTrace tr = amp_state_evolution([](double tau) { return 0.5 * tau; }, 1.0, 0.1, 2.0, 1.0, 30);
  // tau = 0.1 + 2 * 0.5 * tau has no finite fixed point; with N/P = 1 it does.
  EXPECT_GT(tr.tau.back(), tr.tau.front());
  const SeTrace conv = amp_state_evolution([](double tau) { return 0.5 * tau; }, 1.0, 0.1, 1.0, 1.0, 60);
  EXPECT_NEAR(conv.tau.back(), 0.2, 1e-12);
  EXPECT_DOUBLE_EQ(conv.tau[0], 1.1);
}

TEST(Amp, RecoversSparseSignal) {
  const int N = 800, P = 400;
  const BernoulliGaussian prior{0.05, 1.0};
  const Mat<double> A = gaussian_matrix(P, N, 4);
  Rng rng(5);
  const Vec<double> x0 = prior.sample(N, rng);
  const Vec<double> y = A * x0 + real_gaussian(P, 1e-4, rng);
  const auto op = LinearOperator<double>::dense(A);
  AmpState<double> st = amp_init(op);
  for (int t = 0; t < 25; ++t) st = amp_iterate(st, y, op, prior.denoiser());
  EXPECT_LT((st.x - x0).squaredNorm() / x0.squaredNorm(), 1e-2);
}

TEST(Amp, MonteCarloTraceMatchesAnalytic) {
  const BernoulliGaussian prior{0.1, 1.0};
  Rng rng(6);
  const Vec<double> r = prior.sample(20000, rng) + real_gaussian(20000, 0.05, rng);
  const auto out = prior.denoiser()(r, 0.05);
  std::function<Vec<double>(const Vec<double>&)> f = [&](const Vec<double>& z) { return prior.denoiser()(z, 0.05).x; };
  const double mc = mc_trace<double>(f, r, out.x, 3);
  EXPECT_NEAR(mc, *out.trace, 0.03 * *out.trace);
}

TEST(Pgd, ConvergesToLeastSquaresWithIdentityDenoiser) {
  const Mat<double> A = gaussian_matrix(60, 30, 7);
  Rng rng(8);
  const Vec<double> y = real_gaussian(60, 1.0, rng);
  const auto op = LinearOperator<double>::dense(A);
  PgdState<double> s{Vec<double>::Zero(30), Vec<double>::Zero(30), 0};
  const double L = (A.transpose() * A).eigenvalues().real().maxCoeff();
  std::function<Vec<double>(const Vec<double>&)> id = [](const Vec<double>& v) { return v; };
  for (int t = 0; t < 2000; ++t) s = pnp_pgd_iterate(s, y, op, 1.0 / L, id);
  const Vec<double> ls = A.colPivHouseholderQr().solve(y);
  EXPECT_LE((s.x2 - ls).norm(), 1e-8 * ls.norm());
  EXPECT_THROW(pnp_pgd_iterate(s, y, op, -1.0, id), ArgumentError);
}

TEST(Admm, SolvesRidgeProblem) {
  // min 1/2|y - A x|^2 + mu/2 |x|^2 split as f1 + f2 with penalty rho.
  const Mat<double> A = gaussian_matrix(40, 20, 9);
  Rng rng(10);
  const Vec<double> y = real_gaussian(40, 1.0, rng);
  const double mu = 0.5, rho = 1.0;
  Mat<double> S = A.transpose() * A;
  S.diagonal().array() += rho;
  const Eigen::LDLT<Mat<double>> ldlt(S);
  std::function<Vec<double>(const Vec<double>&)> prox1 = [&](const Vec<double>& v) -> Vec<double> {
    return ldlt.solve(A.transpose() * y + rho * v);
  };
  std::function<Vec<double>(const Vec<double>&)> prox2 = [&](const Vec<double>& v) -> Vec<double> {
    return rho / (rho + mu) * v;
  };
  AdmmState<double> s{Vec<double>::Zero(20), Vec<double>::Zero(20), Vec<double>::Zero(20), 0};
  for (int t = 0; t < 300; ++t) s = pr_admm_iterate(s, prox1, prox2);
  Mat<double> R = A.transpose() * A;
  R.diagonal().array() += mu;
  const Vec<double> exact = R.ldlt().solve(A.transpose() * y);
  EXPECT_LE((s.x2 - exact).norm(), 1e-8 * exact.norm());
}
