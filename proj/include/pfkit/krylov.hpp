#pragma once

// Matrix-free Krylov solvers over ScalarField, parameterized by the operator
// and preconditioner applications.  PCG is used where the system is
// symmetric positive definite in the L2 inner product (IEQ updates, shifted
// eigensolver); BiCGStab covers the nonsymmetric / indefinite Jacobians that
// Newton produces for the implicit steppers.

#include <cmath>
#include <cstddef>

#include "pfkit/errors.hpp"
#include "pfkit/grid.hpp"
#include "pfkit/operators.hpp"

namespace pfkit {

struct KrylovResult {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

namespace detail {

inline double dot(const ScalarField& a, const ScalarField& b) {
  return inner_product_l2(a, b);
}

}  // namespace detail

// Preconditioned conjugate gradients for SPD systems.  Solves A x = b with
// initial guess in `x`; M approximates A^{-1}.  Convergence on the true
// residual norm relative to ||b||.
template <class ApplyA, class ApplyM>
KrylovResult pcg(const ApplyA& A, const ApplyM& M, const ScalarField& b,
                 ScalarField& x, double rtol, int max_iter) {
  const double bnorm = std::sqrt(detail::dot(b, b));
  KrylovResult res;
  if (bnorm == 0.0) {
    std::fill(x.a.begin(), x.a.end(), 0.0);
    res.converged = true;
    return res;
  }
  ScalarField r = b;
  {
    ScalarField ax = A(x);
    for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] -= ax.a[i];
  }
  ScalarField z = M(r);
  ScalarField p = z;
  double rz = detail::dot(r, z);
  double rnorm = std::sqrt(detail::dot(r, r));
  for (int it = 0; it < max_iter; ++it) {
    res.relative_residual = rnorm / bnorm;
    if (rnorm <= rtol * bnorm) {
      res.converged = true;
      res.iterations = it;
      return res;
    }
    ScalarField ap = A(p);
    const double pap = detail::dot(p, ap);
    if (!(pap > 0.0))
      throw LinearSolveDiverged("pcg: operator not positive definite (p'Ap <= 0)");
    const double alpha = rz / pap;
    for (std::size_t i = 0; i < x.a.size(); ++i) {
      x.a[i] += alpha * p.a[i];
      r.a[i] -= alpha * ap.a[i];
    }
    z = M(r);
    const double rz_new = detail::dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < p.a.size(); ++i) p.a[i] = z.a[i] + beta * p.a[i];
    rnorm = std::sqrt(detail::dot(r, r));
  }
  res.relative_residual = rnorm / bnorm;
  res.iterations = max_iter;
  return res;
}

// Right-preconditioned BiCGStab.  Solves A x = b with initial guess in `x`;
// M approximates A^{-1}.  Handles the nonsymmetric Jacobians of the implicit
// steppers (advection, fourth-order CH terms with varying coefficients).
template <class ApplyA, class ApplyM>
KrylovResult bicgstab(const ApplyA& A, const ApplyM& M, const ScalarField& b,
                      ScalarField& x, double rtol, int max_iter) {
  const double bnorm = std::sqrt(detail::dot(b, b));
  KrylovResult res;
  if (bnorm == 0.0) {
    std::fill(x.a.begin(), x.a.end(), 0.0);
    res.converged = true;
    return res;
  }
  ScalarField r = b;
  {
    ScalarField ax = A(x);
    for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] -= ax.a[i];
  }
  const ScalarField rhat = r;  // shadow residual
  double rho = 1.0, alpha = 1.0, omega = 1.0;
  ScalarField v = r, p = r;
  std::fill(v.a.begin(), v.a.end(), 0.0);
  std::fill(p.a.begin(), p.a.end(), 0.0);
  double rnorm = std::sqrt(detail::dot(r, r));
  const double tiny = 1e-300;
  for (int it = 0; it < max_iter; ++it) {
    res.relative_residual = rnorm / bnorm;
    if (rnorm <= rtol * bnorm) {
      res.converged = true;
      res.iterations = it;
      return res;
    }
    const double rho_new = detail::dot(rhat, r);
    if (std::abs(rho_new) < tiny)
      throw LinearSolveDiverged("bicgstab: rho breakdown");
    if (it == 0) {
      p = r;
    } else {
      const double beta = (rho_new / rho) * (alpha / omega);
      for (std::size_t i = 0; i < p.a.size(); ++i)
        p.a[i] = r.a[i] + beta * (p.a[i] - omega * v.a[i]);
    }
    rho = rho_new;
    ScalarField phat = M(p);
    v = A(phat);
    const double rhat_v = detail::dot(rhat, v);
    if (std::abs(rhat_v) < tiny)
      throw LinearSolveDiverged("bicgstab: rhat'v breakdown");
    alpha = rho / rhat_v;
    ScalarField s = r;
    for (std::size_t i = 0; i < s.a.size(); ++i) s.a[i] -= alpha * v.a[i];
    const double snorm = std::sqrt(detail::dot(s, s));
    if (snorm <= rtol * bnorm) {
      for (std::size_t i = 0; i < x.a.size(); ++i) x.a[i] += alpha * phat.a[i];
      res.converged = true;
      res.iterations = it + 1;
      res.relative_residual = snorm / bnorm;
      return res;
    }
    ScalarField shat = M(s);
    ScalarField t = A(shat);
    const double tt = detail::dot(t, t);
    if (!(tt > 0.0)) throw LinearSolveDiverged("bicgstab: t't breakdown");
    omega = detail::dot(t, s) / tt;
    if (std::abs(omega) < tiny)
      throw LinearSolveDiverged("bicgstab: omega breakdown");
    for (std::size_t i = 0; i < x.a.size(); ++i)
      x.a[i] += alpha * phat.a[i] + omega * shat.a[i];
    r = s;
    for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] -= omega * t.a[i];
    rnorm = std::sqrt(detail::dot(r, r));
  }
  res.relative_residual = rnorm / bnorm;
  res.iterations = max_iter;
  return res;
}

}  // namespace pfkit
