#pragma once

// Reference algorithms: AMP with Onsager correction and its scalar state
// evolution, plug-and-play proximal gradient descent, and Peaceman-Rachford
// ADMM. All are templated on the scalar type (double or std::complex<double>).

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <type_traits>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "dgec/core.hpp"
#include "dgec/random.hpp"

namespace dgec {

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Matrix-free linear operator.
template <class Scalar>
struct LinearOperator {
  std::function<Vec<Scalar>(const Vec<Scalar>&)> apply;
  std::function<Vec<Scalar>(const Vec<Scalar>&)> adjoint;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  double frobenius_norm = 0.0;

  static LinearOperator dense(Mat<Scalar> A) {
    auto shared = std::make_shared<const Mat<Scalar>>(std::move(A));
    LinearOperator op;
    op.apply = [shared](const Vec<Scalar>& x) -> Vec<Scalar> { return (*shared) * x; };
    op.adjoint = [shared](const Vec<Scalar>& v) -> Vec<Scalar> { return shared->adjoint() * v; };
    op.rows = shared->rows();
    op.cols = shared->cols();
    op.frobenius_norm = shared->norm();
    return op;
  }
};

namespace detail {

template <class Scalar>
Vec<Scalar> gaussian_probe(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  if constexpr (std::is_same_v<Scalar, double>) {
    return real_gaussian(static_cast<std::size_t>(n), 1.0, rng);
  } else {
    return complex_gaussian(static_cast<std::size_t>(n), 1.0, rng);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// AMP

/// Denoiser output and, when available, the Jacobian trace at the input.
template <class Scalar>
struct AmpDenoiserOutput {
  Vec<Scalar> x;
  std::optional<double> trace;
};

/// f2^t(r; tau) where tau is the current noise-variance estimate.
template <class Scalar>
using AmpDenoiser = std::function<AmpDenoiserOutput<Scalar>(const Vec<Scalar>& r, double tau)>;

template <class Scalar>
struct AmpState {
  Vec<Scalar> v;
  Vec<Scalar> x;
  double tau = 0.0;
  double beta = 1.0;
  double trace = 0.0;  // tr grad f2 at the input that produced x
  int t = 0;
};

struct AmpOptions {
  double beta_scale = 1.0;     // beta = beta_scale * sqrt(N) / |A|_F
  bool onsager = true;         // false turns AMP into PnP-PGD with mu = beta^2
  std::uint64_t probe_seed = 0;
};

template <class Scalar>
AmpState<Scalar> amp_init(const LinearOperator<Scalar>& A, const AmpOptions& opt = {}) {
  if (!(A.frobenius_norm > 0.0)) throw ArgumentError("AMP: operator has zero Frobenius norm");
  AmpState<Scalar> s;
  s.v = Vec<Scalar>::Zero(A.rows);
  s.x = Vec<Scalar>::Zero(A.cols);
  s.beta = opt.beta_scale * std::sqrt(static_cast<double>(A.cols)) / A.frobenius_norm;
  return s;
}

/// Monte-Carlo Jacobian trace delta^{-1} Re q^H [f(r + delta q) - f(r)].
template <class Scalar>
double mc_trace(const std::function<Vec<Scalar>(const Vec<Scalar>&)>& f, const Vec<Scalar>& r, const Vec<Scalar>& f_r,
                std::uint64_t seed) {
  const Vec<Scalar> q = detail::gaussian_probe<Scalar>(r.size(), seed);
  const double delta = std::max(r.cwiseAbs().sum() / static_cast<double>(r.size()), 1e-12) * 1e-3;
  const Vec<Scalar> fd = f(r + delta * q) - f_r;
  return std::real(q.dot(fd)) / delta;
}

/// One AMP iteration:
///   v <- beta (y - A x) + (1/M) v tr(grad f2 at previous input)
///   tau <- |v|^2 / M
///   x <- f2(x + beta A^H v; tau)
template <class Scalar>
AmpState<Scalar> amp_iterate(const AmpState<Scalar>& s, const Vec<Scalar>& y, const LinearOperator<Scalar>& A,
                             const AmpDenoiser<Scalar>& f2, const AmpOptions& opt = {}) {
  if (y.size() != A.rows) throw ShapeError("AMP: y does not match the operator");
  const auto M = static_cast<double>(A.rows);
  AmpState<Scalar> n = s;
  n.v = s.beta * (y - A.apply(s.x));
  if (opt.onsager) n.v += (s.trace / M) * s.v;
  n.tau = n.v.squaredNorm() / M;
  const Vec<Scalar> r = s.x + s.beta * A.adjoint(n.v);
  AmpDenoiserOutput<Scalar> out = f2(r, n.tau);
  if (out.x.size() != r.size()) throw ShapeError("AMP: denoiser changed the vector length");
  if (out.trace) {
    n.trace = *out.trace;
  } else {
    std::function<Vec<Scalar>(const Vec<Scalar>&)> f = [&](const Vec<Scalar>& z) { return f2(z, n.tau).x; };
    n.trace = mc_trace<Scalar>(f, r, out.x, derive_seed(opt.probe_seed, Stream::kProbe, {static_cast<std::uint64_t>(s.t)}));
  }
  n.x = std::move(out.x);
  n.t = s.t + 1;
  return n;
}

// ---------------------------------------------------------------------------
// Scalar denoisers and state evolution

/// Bernoulli-Gaussian prior: x = 0 w.p. 1 - rho, else x ~ N(0, sigma_x^2).
struct BernoulliGaussian {
  double rho = 0.1;
  double sigma_x2 = 1.0;

  double second_moment() const { return rho * sigma_x2; }

  /// Posterior mean E[x | r] for r = x + N(0, tau) and its derivative.
  std::pair<double, double> mmse(double r, double tau) const {
    const double s1 = sigma_x2 + tau;
    // Log-likelihood ratio of the slab vs the spike.
    const double llr = std::log(rho / (1.0 - rho)) + 0.5 * std::log(tau / s1) + 0.5 * r * r * (1.0 / tau - 1.0 / s1);
    const double pi = 1.0 / (1.0 + std::exp(-llr));
    const double g = sigma_x2 / s1;
    const double dpi = pi * (1.0 - pi) * r * g / tau;
    return {pi * g * r, g * (pi + r * dpi)};
  }

  Vec<double> sample(std::size_t n, Rng& rng) const {
    std::bernoulli_distribution on(rho);
    std::normal_distribution<double> normal(0.0, std::sqrt(sigma_x2));
    Vec<double> x(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const bool active = on(rng);
      const double v = normal(rng);
      x[i] = active ? v : 0.0;
    }
    return x;
  }

  /// MSE of the MMSE denoiser at noise variance tau: E[x^2] - E[f(r)^2].
  /// The integrand switches from ~0 to ~r^2 over a width of order sqrt(tau),
  /// so it is integrated adaptively over r rather than by a fixed rule.
  double mmse_error(double tau) const {
    using boost::math::quadrature::gauss_kronrod;
    const double s1 = sigma_x2 + tau;
    auto density = [&](double r) {
      return (1.0 - rho) * std::exp(-0.5 * r * r / tau) / std::sqrt(2.0 * M_PI * tau) +
             rho * std::exp(-0.5 * r * r / s1) / std::sqrt(2.0 * M_PI * s1);
    };
    auto g = [&](double r) {
      const double f = mmse(r, tau).first;
      return f * f * density(r);
    };
    // Even integrand: twice the half line, split where the posterior flips.
    const double knee = std::sqrt(2.0 * tau * std::max(1.0, std::log(s1 / tau) + 2.0 * std::log((1.0 - rho) / rho)));
    const double ef2 = 2.0 * (gauss_kronrod<double, 61>::integrate(g, 0.0, knee, 15, 1e-12) +
                              gauss_kronrod<double, 61>::integrate(g, knee, 2.0 * knee, 15, 1e-12) +
                              gauss_kronrod<double, 61>::integrate(g, 2.0 * knee, std::numeric_limits<double>::infinity(), 15, 1e-12));
    return std::max(second_moment() - ef2, 0.0);
  }

  AmpDenoiser<double> denoiser() const {
    const BernoulliGaussian prior = *this;
    return [prior](const Vec<double>& r, double tau) {
      AmpDenoiserOutput<double> out{Vec<double>(r.size()), 0.0};
      double tr = 0.0;
      for (Eigen::Index i = 0; i < r.size(); ++i) {
        const auto [f, df] = prior.mmse(r[i], tau);
        out.x[i] = f;
        tr += df;
      }
      out.trace = tr;
      return out;
    };
  }
};

struct SeTrace {
  std::vector<double> tau;  // tau^t = tau_w + (N/P) E^t
  std::vector<double> mse;  // E^t
};

/// Iterates tau^t = tau_w + (N/P) E^t, E^{t+1} = mse(tau^t) from E^0.
inline SeTrace amp_state_evolution(const std::function<double(double)>& mse, double E0, double tau_w, double N,
                                   double P, int iters) {
  if (!(N > 0.0 && P > 0.0)) throw ArgumentError("state evolution needs positive dimensions");
  SeTrace tr;
  double E = E0;
  for (int t = 0; t < iters; ++t) {
    tr.mse.push_back(E);
    tr.tau.push_back(tau_w + N / P * E);
    E = mse(tr.tau.back());
    if (!std::isfinite(E)) throw NumericalError("state evolution produced a non-finite MSE");
  }
  return tr;
}

// ---------------------------------------------------------------------------
// PnP proximal gradient descent

template <class Scalar>
struct PgdState {
  Vec<Scalar> x1;
  Vec<Scalar> x2;
  int t = 0;
};

/// x1 <- x2 - mu A^H (A x2 - y); x2 <- f2(x1).
template <class Scalar>
PgdState<Scalar> pnp_pgd_iterate(const PgdState<Scalar>& s, const Vec<Scalar>& y, const LinearOperator<Scalar>& A,
                                 double mu, const std::function<Vec<Scalar>(const Vec<Scalar>&)>& f2) {
  if (mu < 0.0) throw ArgumentError("PGD step size must be nonnegative");
  PgdState<Scalar> n;
  n.x1 = s.x2 - mu * A.adjoint(A.apply(s.x2) - y);
  n.x2 = f2(n.x1);
  n.t = s.t + 1;
  return n;
}

// ---------------------------------------------------------------------------
// Peaceman-Rachford ADMM

template <class Scalar>
struct AdmmState {
  Vec<Scalar> x1;
  Vec<Scalar> x2;
  Vec<Scalar> u;
  int t = 0;
};

/// x1 <- prox1(x2 - u); u <- u + x1 - x2; x2 <- prox2(x1 + u); u <- u + x1 - x2.
/// The penalty gamma is baked into prox1 and prox2.
template <class Scalar>
AdmmState<Scalar> pr_admm_iterate(const AdmmState<Scalar>& s,
                                  const std::function<Vec<Scalar>(const Vec<Scalar>&)>& prox1,
                                  const std::function<Vec<Scalar>(const Vec<Scalar>&)>& prox2) {
  AdmmState<Scalar> n = s;
  n.x1 = prox1(s.x2 - s.u);
  n.u = s.u + (n.x1 - s.x2);
  n.x2 = prox2(n.x1 + n.u);
  n.u += n.x1 - n.x2;
  n.t = s.t + 1;
  return n;
}

}  // namespace dgec
