#pragma once

#include <cmath>
#include <limits>

#include "dgec/core.hpp"

namespace dgec {

struct CgResult {
  CVector x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool breakdown = false;
};

/// Conjugate gradients for a Hermitian positive-definite operator.
/// Stops after max_iters, when |r| <= rel_tol |b|, or on breakdown (zero or
/// negative curvature), in which case the current iterate is returned.
template <class Op>
CgResult conjugate_gradient(Op&& apply, const CVector& b, CVector x0, int max_iters, double rel_tol = 1e-13) {
  if (max_iters < 0) throw ArgumentError("conjugate_gradient: negative iteration budget");
  if (x0.size() != b.size()) throw ShapeError("conjugate_gradient: initial guess has the wrong length");
  CgResult res;
  res.x = std::move(x0);
  const double bnorm = b.norm();
  if (bnorm == 0.0 && res.x.squaredNorm() == 0.0) return res;
  CVector r = b - apply(res.x);
  const double scale = bnorm > 0.0 ? bnorm : 1.0;
  double rr = r.squaredNorm();
  res.relative_residual = std::sqrt(rr) / scale;
  CVector p = r;
  for (int it = 0; it < max_iters; ++it) {
    if (std::sqrt(rr) <= rel_tol * scale) break;
    const CVector ap = apply(p);
    const double curvature = p.dot(ap).real();
    if (!(curvature > 0.0) || !std::isfinite(curvature)) {
      res.breakdown = true;
      break;
    }
    const double alpha = rr / curvature;
    res.x += alpha * p;
    r -= alpha * ap;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
    res.iterations = it + 1;
    res.relative_residual = std::sqrt(rr) / scale;
  }
  return res;
}

}  // namespace dgec
