#pragma once

// Dense numerical checks of the EC error recursion
//   e2 = V D V^T e1 + u
// and of its statistics under Haar-distributed orthogonal V. Real-valued
// throughout; no fast operators are used here.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "dgec/core.hpp"
#include "dgec/random.hpp"

namespace dgec {

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
/// of R's diagonal moved into Q.
inline RMatrix random_orthogonal(Eigen::Index N, Rng& rng) {
  if (N < 2) throw ArgumentError("random_orthogonal needs N >= 2");
  std::normal_distribution<double> normal;
  RMatrix G(N, N);
  for (Eigen::Index j = 0; j < N; ++j) {
    for (Eigen::Index i = 0; i < N; ++i) G(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<RMatrix> qr(G);
  RMatrix Q = qr.householderQ();
  const RMatrix& R = qr.matrixQR();
  for (Eigen::Index j = 0; j < N; ++j) {
    if (R(j, j) < 0.0) Q.col(j) *= -1.0;
  }
  return Q;
}

inline RMatrix random_orthogonal(Eigen::Index N, std::uint64_t seed) {
  Rng rng(derive_seed(seed, Stream::kOracle));
  return random_orthogonal(N, rng);
}

namespace detail {

/// Runs body(trial, partial) over trials split into fixed chunks, one partial
/// accumulator per chunk, and sums the partials in chunk order.
template <class Acc, class Body>
Acc chunked_trials(std::size_t trials, std::size_t chunks, const Acc& zero, Body body) {
  chunks = std::max<std::size_t>(1, std::min(chunks, trials));
  std::vector<Acc> partial(chunks, zero);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::thread> pool;
  std::size_t next_chunk = 0;
  auto run_chunk = [&](std::size_t c) {
    const std::size_t lo = trials * c / chunks;
    const std::size_t hi = trials * (c + 1) / chunks;
    for (std::size_t t = lo; t < hi; ++t) body(t, partial[c]);
  };
  while (next_chunk < chunks) {
    pool.clear();
    for (unsigned k = 0; k < hw && next_chunk < chunks; ++k) pool.emplace_back(run_chunk, next_chunk++);
    for (auto& th : pool) th.join();
  }
  Acc total = zero;
  for (const Acc& p : partial) total += p;
  return total;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Orthogonal-matrix moments

struct MomentCase {
  std::string label;
  double empirical = 0.0;
  double theoretical = 0.0;
  double relative_deviation() const { return std::abs(empirical - theoretical) / theoretical; }
};

struct MomentReport {
  std::size_t N = 0;
  std::size_t trials = 0;
  double mean_entry = 0.0;         // E v_nj
  double mean_square = 0.0;        // E v_nj^2, theory 1/N
  std::vector<MomentCase> fourth;  // the four E v_nj^2 v_mk^2 index cases
  double max_relative_deviation() const {
    double m = 0.0;
    for (const auto& c : fourth) m = std::max(m, c.relative_deviation());
    return m;
  }
};

/// Monte-Carlo estimates of E v_nj^2 v_mk^2 for the four index cases, each
/// averaged over every index tuple of the case and over trials.
inline MomentReport weingarten_moment_check(std::size_t N, std::size_t trials, std::uint64_t seed) {
  if (N < 2) throw ArgumentError("weingarten_moment_check needs N >= 2");
  if (trials == 0) throw ArgumentError("weingarten_moment_check needs trials");
  const auto n = static_cast<Eigen::Index>(N);
  // sums: [v, v^2, case1, case2, case3, case4]
  using Acc = Eigen::Matrix<double, 6, 1>;
  const Acc total = detail::chunked_trials<Acc>(trials, 64, Acc::Zero(), [&](std::size_t t, Acc& acc) {
    Rng rng(derive_seed(seed, Stream::kOracle, {1, t}));
    const RMatrix V = random_orthogonal(n, rng);
    const RMatrix V2 = V.cwiseAbs2();
    const double s4 = V2.cwiseAbs2().sum();
    const double rows = V2.rowwise().sum().squaredNorm();  // sum_n (sum_j v^2)^2
    const double cols = V2.colwise().sum().squaredNorm();
    const double all = V2.sum() * V2.sum();
    acc[0] += V.sum();
    acc[1] += V2.sum();
    acc[2] += s4;
    acc[3] += rows - s4;
    acc[4] += cols - s4;
    acc[5] += all - rows - cols + s4;
  });
  const double Nd = static_cast<double>(N);
  const double T = static_cast<double>(trials);
  MomentReport rep;
  rep.N = N;
  rep.trials = trials;
  rep.mean_entry = total[0] / (T * Nd * Nd);
  rep.mean_square = total[1] / (T * Nd * Nd);
  const double c1 = Nd * Nd;
  const double c23 = Nd * Nd * (Nd - 1.0);
  const double c4 = Nd * Nd * (Nd - 1.0) * (Nd - 1.0);
  rep.fourth = {
      {"n=m, j=k", total[2] / (T * c1), 3.0 / (Nd * (Nd + 2.0))},
      {"n=m, j!=k", total[3] / (T * c23), 1.0 / (Nd * (Nd + 2.0))},
      {"n!=m, j=k", total[4] / (T * c23), 1.0 / (Nd * (Nd + 2.0))},
      {"n!=m, j!=k", total[5] / (T * c4), (Nd + 1.0) / (Nd * (Nd + 2.0) * (Nd - 1.0))},
  };
  return rep;
}

// ---------------------------------------------------------------------------
// EC error model

struct EcErrorModel {
  RMatrix V;        // eigenvectors of C = gamma_w A^T A
  RVector lambda;   // eigenvalues of C
  double alpha = 0.0;
  RVector D;        // diagonal of D = I - (1/alpha)(Lambda + gamma1)^{-1} Lambda
  RVector Sigma;    // diagonal of Sigma = I - D
  double gamma1 = 0.0;
  double gamma_w = 0.0;

  double trace_D() const { return D.sum(); }
  double gamma2() const { return gamma1 * alpha / (1.0 - alpha); }
};

inline EcErrorModel ec_error_model_from_spectrum(RMatrix V, RVector lambda, double gamma1, double gamma_w) {
  if (!(gamma1 > 0.0)) throw ArgumentError("gamma1 must be positive");
  EcErrorModel m;
  m.V = std::move(V);
  m.lambda = std::move(lambda);
  m.gamma1 = gamma1;
  m.gamma_w = gamma_w;
  const RVector ratio = m.lambda.array() / (m.lambda.array() + gamma1);
  m.alpha = ratio.mean();
  if (!(m.alpha > 0.0)) throw ArgumentError("EC error model: alpha is zero (C has no positive eigenvalues)");
  m.Sigma = ratio / m.alpha;
  m.D = RVector::Ones(ratio.size()) - m.Sigma;
  return m;
}

inline EcErrorModel build_ec_error_model(const RMatrix& A, double gamma1, double gamma_w) {
  const RMatrix C = gamma_w * A.transpose() * A;
  Eigen::SelfAdjointEigenSolver<RMatrix> eig(C);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of gamma_w A^T A failed");
  EcErrorModel m = ec_error_model_from_spectrum(eig.eigenvectors(), eig.eigenvalues().cwiseMax(0.0), gamma1, gamma_w);
  if (std::abs(m.trace_D()) > 1e-10 * static_cast<double>(A.cols())) {
    throw NumericalError("EC error model: trace(D) is not zero");
  }
  return m;
}

/// Runs one EC measurement-fidelity half iteration with a dense LMMSE f1 and
/// compares e2 = r2 - x0 against V D V^T e1 + u. Returns the max abs deviation.
inline double ec_recursion_equivalence(const RMatrix& A, double gamma1, double gamma_w, const RVector& x0,
                                       const RVector& e1, const RVector& w) {
  const Eigen::Index N = A.cols();
  if (x0.size() != N || e1.size() != N || w.size() != A.rows()) throw ShapeError("ec_recursion_equivalence: sizes");
  // Direct path: one fidelity half of EC.
  const RVector y = A * x0 + w;
  const RVector r1 = x0 + e1;
  RMatrix S = gamma_w * A.transpose() * A;
  S.diagonal().array() += gamma1;
  const Eigen::LDLT<RMatrix> ldlt(S);
  if (ldlt.info() != Eigen::Success) throw NumericalError("singular EC system");
  const RVector x1 = ldlt.solve(gamma_w * A.transpose() * y + gamma1 * r1);
  const double div = (gamma1 * ldlt.solve(RMatrix::Identity(N, N))).trace() / static_cast<double>(N);
  const double eta1 = gamma1 / div;
  const double gamma2 = eta1 - gamma1;
  const RVector r2 = (eta1 * x1 - gamma1 * r1) / gamma2;
  const RVector e2_direct = r2 - x0;
  // Recursion path.
  const EcErrorModel m = build_ec_error_model(A, gamma1, gamma_w);
  const RVector inv = (m.lambda.array() + gamma1).inverse();
  const RVector u = (gamma_w / m.alpha) * (m.V * inv.asDiagonal() * (m.V.transpose() * (A.transpose() * w)));
  const RVector e2_model = m.V * (m.D.asDiagonal() * (m.V.transpose() * e1)) + u;
  return (e2_direct - e2_model).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// epsilon_2 covariance

/// (eps1 - 1/gamma1)/N sum((1 - lambda/gamma2)/(1 + lambda/gamma1))^2 + 1/gamma2.
inline double epsilon2_formula(const RVector& lambda, double gamma1, double eps1) {
  const double alpha = (lambda.array() / (lambda.array() + gamma1)).mean();
  const double gamma2 = gamma1 * alpha / (1.0 - alpha);
  const double s = ((1.0 - lambda.array() / gamma2) / (1.0 + lambda.array() / gamma1)).square().mean();
  return (eps1 - 1.0 / gamma1) * s + 1.0 / gamma2;
}

struct Epsilon2Report {
  std::size_t N = 0;
  std::size_t trials = 0;
  double epsilon2 = 0.0;              // closed form
  double mean_diagonal = 0.0;         // average of the empirical per-coordinate variances
  double max_diagonal_deviation = 0.0;  // max_n |C_nn - eps2| / eps2
  double grand_mean = 0.0;            // mean of all e2 entries
  double grand_mean_z = 0.0;          // grand_mean / its standard error
  double offdiag_coefficient = 0.0;   // regression of C_nm on e_n e_m (1/N) sum d^2
  double offdiag_theory = 0.0;        // (N - 3) / ((N + 2)(N - 1))
  double mean_abs_offdiag = 0.0;
  double diagonal_relative_error() const { return std::abs(mean_diagonal - epsilon2) / epsilon2; }
};

/// Monte-Carlo over Haar V and Gaussian w for fixed e1 and spectrum Lambda:
/// A = diag(sqrt(lambda / gamma_w)) V^T so that gamma_w A^T A = V Lambda V^T.
inline Epsilon2Report epsilon2_covariance_check(const RVector& lambda, double gamma1, double gamma_w, double e1_variance,
                                                std::size_t trials, std::uint64_t seed) {
  const Eigen::Index N = lambda.size();
  if (N < 2) throw ArgumentError("epsilon2_covariance_check needs N >= 2");
  if (!(gamma_w > 0.0) || !(gamma1 > 0.0)) throw ArgumentError("precisions must be positive");
  const EcErrorModel base = ec_error_model_from_spectrum(RMatrix::Identity(N, N), lambda, gamma1, gamma_w);
  Rng erng(derive_seed(seed, Stream::kOracle, {2}));
  RVector e1 = real_gaussian(static_cast<std::size_t>(N), 1.0, erng);
  e1 *= std::sqrt(e1_variance * static_cast<double>(N)) / e1.norm();
  const RVector scale_w =
      (gamma_w / base.alpha) * (lambda.array() / gamma_w).sqrt() / (lambda.array() + gamma1);
  struct Acc {
    RVector sum;
    RMatrix outer;
    Acc& operator+=(const Acc& o) {
      sum += o.sum;
      outer += o.outer;
      return *this;
    }
  };
  const Acc zero{RVector::Zero(N), RMatrix::Zero(N, N)};
  const Acc total = detail::chunked_trials<Acc>(trials, 64, zero, [&](std::size_t t, Acc& acc) {
    Rng rng(derive_seed(seed, Stream::kOracle, {3, t}));
    const RMatrix V = random_orthogonal(N, rng);
    const RVector w = real_gaussian(static_cast<std::size_t>(N), 1.0 / gamma_w, rng);
    const RVector e2 = V * (base.D.cwiseProduct(V.transpose() * e1) + scale_w.cwiseProduct(w));
    acc.sum += e2;
    acc.outer.selfadjointView<Eigen::Lower>().rankUpdate(e2);
  });
  const double T = static_cast<double>(trials);
  const RVector mean = total.sum / T;
  RMatrix cov = total.outer.selfadjointView<Eigen::Lower>();
  cov /= T;  // second moments about the known zero mean

  Epsilon2Report rep;
  rep.N = static_cast<std::size_t>(N);
  rep.trials = trials;
  rep.epsilon2 = epsilon2_formula(lambda, gamma1, e1.squaredNorm() / static_cast<double>(N));
  rep.mean_diagonal = cov.diagonal().mean();
  rep.max_diagonal_deviation = ((cov.diagonal().array() - rep.epsilon2).abs() / rep.epsilon2).maxCoeff();
  rep.grand_mean = mean.mean();
  rep.grand_mean_z = rep.grand_mean / std::sqrt(rep.epsilon2 / (T * static_cast<double>(N)));
  const double dbar = base.D.squaredNorm() / static_cast<double>(N);
  double num = 0.0, den = 0.0, abs_sum = 0.0;
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index m = 0; m < n; ++m) {
      const double x = e1[n] * e1[m] * dbar;
      num += cov(n, m) * x;
      den += x * x;
      abs_sum += std::abs(cov(n, m));
    }
  }
  rep.offdiag_coefficient = num / den;
  const double Nd = static_cast<double>(N);
  rep.offdiag_theory = (Nd - 3.0) / ((Nd + 2.0) * (Nd - 1.0));
  rep.mean_abs_offdiag = abs_sum / (Nd * (Nd - 1.0) / 2.0);
  return rep;
}

}  // namespace dgec
