#pragma once

// Time-stepping catalogue.  Every scheme advances (u, auxiliary state) by one
// step of size tau for any ModelSpec it structurally supports, and reports
// energies and solver statistics.  Conventions shared by all schemes:
//
//  - The semi-discrete flow is du/dt = A u + N(u) = -J'(u) with A the
//    stabilized linear symbol from the model layer.
//  - Implicit schemes solve their nonlinear systems by Newton iteration with
//    BiCGStab inner solves preconditioned by the constant-coefficient
//    spectral operator (I - tau A)^{-1}; the residual tolerance is an RMS
//    (L2/sqrt(area)) threshold so constant-field runs reduce to the scalar
//    root-finding problem with the same tolerance.
//  - Cahn-Hilliard updates are computed in the zero-mean complement
//    (u1 = u0 + w with w projected), so the k = 0 mode is invariant to
//    rounding; nothing is ever clipped or rescaled.
//  - IEQ quadratizes the potential with q = sqrt(F(u)+C0) and dissipates
//    E^n = (eps/2)||grad u||^2 + (1/eps)||q||^2; SAV uses the scalar
//    r = sqrt(E1(u)+C1) and dissipates G^n = (eps/2)||grad u||^2 + r^2/eps.
//    For Allen-Cahn both use the L2 step scaled by 1/eps so they remain
//    consistent with the fast-time equation u_t = lap(u) - f(u)/eps^2.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include "pfkit/errors.hpp"
#include "pfkit/fft.hpp"
#include "pfkit/grid.hpp"
#include "pfkit/krylov.hpp"
#include "pfkit/model.hpp"
#include "pfkit/operators.hpp"
#include "pfkit/potential.hpp"

namespace pfkit {

enum class SchemeKind {
  forward_euler,
  backward_euler,
  crank_nicolson_mid,
  cn_discrete_variation,
  convex_splitting,
  stabilized_imex,
  etd_rk1,
  etd_rk2,
  ieq,
  sav,
};

inline const char* to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::forward_euler: return "forward_euler";
    case SchemeKind::backward_euler: return "backward_euler";
    case SchemeKind::crank_nicolson_mid: return "crank_nicolson_mid";
    case SchemeKind::cn_discrete_variation: return "cn_discrete_variation";
    case SchemeKind::convex_splitting: return "convex_splitting";
    case SchemeKind::stabilized_imex: return "stabilized_imex";
    case SchemeKind::etd_rk1: return "etd_rk1";
    case SchemeKind::etd_rk2: return "etd_rk2";
    case SchemeKind::ieq: return "ieq";
    case SchemeKind::sav: return "sav";
  }
  return "unknown";
}

inline bool is_second_order(SchemeKind k) {
  return k == SchemeKind::crank_nicolson_mid ||
         k == SchemeKind::cn_discrete_variation || k == SchemeKind::etd_rk2;
}

struct SchemeSpec {
  SchemeKind kind = SchemeKind::etd_rk2;
  double newton_tol = 1e-10;  // RMS residual tolerance
  int newton_max_iter = 50;
  // StabilizedIMEX stabilization scale; replaces the default zeroth-order
  // coefficient alpha/eps^2 (AC family) resp. alpha/eps (CH) when set.
  std::optional<double> S;
  bool dealias = false;  // 2/3-rule filter on explicit cubic evaluations

  void validate(const ModelSpec& m) const {
    if (!(newton_tol > 0.0))
      throw ValidationError("newton_tol", "must be positive");
    if (newton_max_iter < 1)
      throw ValidationError("newton_max_iter", "must be at least 1");
    if (S && !(*S > 0.0)) throw ValidationError("S", "must be positive");
    const bool needs_coercive_alpha = kind == SchemeKind::stabilized_imex ||
                                      kind == SchemeKind::etd_rk1 ||
                                      kind == SchemeKind::etd_rk2;
    if (needs_coercive_alpha && !m.linear_only && m.alpha < 1.0 && !S)
      throw ValidationError(
          "alpha", "stabilized/exponential schemes need alpha >= 1 "
                   "(half the Lipschitz bound of f with safety margin)");
    const bool gradient_flow_only =
        kind == SchemeKind::cn_discrete_variation ||
        kind == SchemeKind::convex_splitting || kind == SchemeKind::ieq ||
        kind == SchemeKind::sav;
    if (gradient_flow_only && m.kind == ModelKind::convective_allen_cahn)
      throw WrongKind(std::string(to_string(kind)) +
                      " requires a pure gradient flow (no advection/forcing)");
  }
};

struct SimState {
  double t = 0.0;
  long long n = 0;
  ScalarField u;
  std::optional<ScalarField> q;  // IEQ auxiliary, q = sqrt(F(u)+C0) at init
  std::optional<double> r;       // SAV auxiliary, r = sqrt(E1(u)+C1) at init
};

struct StepReport {
  double energy_before = 0.0;  // J for the AC family, scaled energy for CH
  double energy_after = 0.0;
  std::optional<double> modified_energy;  // E^n (IEQ) or G^n (SAV), after step
  int newton_iters = 0;
  int krylov_iters = 0;
  double final_residual = 0.0;  // RMS of the nonlinear residual
  bool non_convex_regime = false;  // BackwardEuler with tau > eps^2
};

struct StepResult {
  SimState state;
  StepReport report;
};

// q = sqrt(F(u)+C0) pointwise for IEQ; r = sqrt(E1(u)+C1) for SAV.
inline SimState init_aux(const SchemeSpec& scheme, const ScalarField& u,
                         double /*eps*/) {
  SimState s;
  s.u = u;
  if (scheme.kind == SchemeKind::ieq) {
    ScalarField q = u;
    for (double& v : q.a) v = std::sqrt(well_F(v) + ieq_c0);
    s.q = std::move(q);
  } else if (scheme.kind == SchemeKind::sav) {
    s.r = std::sqrt(bulk_energy(u) + sav_c1);
  }
  return s;
}

namespace detail {

// phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2, switching to 6-term
// Taylor expansions for |z| < 1e-4 where the direct formulas cancel.
inline double phi1(double z) {
  if (std::abs(z) < 1e-4) {
    return 1.0 + z * (1.0 / 2.0 + z * (1.0 / 6.0 + z * (1.0 / 24.0 +
                z * (1.0 / 120.0 + z * (1.0 / 720.0)))));
  }
  return std::expm1(z) / z;
}

inline double phi2(double z) {
  if (std::abs(z) < 1e-4) {
    return 1.0 / 2.0 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 +
                z * (1.0 / 720.0 + z * (1.0 / 5040.0)))));
  }
  return (std::expm1(z) - z) / (z * z);
}

inline void check_finite(const ScalarField& u, long long step_index) {
  if (!all_finite(u))
    throw Diverged("non-finite value in evolved field at step " +
                       std::to_string(step_index),
                   static_cast<long>(step_index));
}

inline void project_zero_mean(ScalarField& f) {
  const double m = field_mean(f);
  for (double& v : f.a) v -= m;
}

inline double rms(const ScalarField& f) {
  return std::sqrt(inner_product_l2(f, f) / f.grid.area());
}

// Diagonal spectral solve: out = inverse-DFT( DFT(rhs) / denom ).
inline ScalarField solve_diagonal(const ScalarField& rhs,
                                  const std::vector<double>& denom) {
  SpectralCoeffs c = dft_forward(rhs);
  for (std::size_t i = 0; i < c.c.size(); ++i) c.c[i] /= denom[i];
  return dft_inverse(c);
}

inline ScalarField apply_diagonal(const ScalarField& f,
                                  const std::vector<double>& sym) {
  SpectralCoeffs c = dft_forward(f);
  apply_symbol(c, sym);
  return dft_inverse(c);
}

// Cached exponential-integrator coefficient tables: recomputing exp/phi per
// mode every step would dominate the FFT cost on large grids.
struct EtdTables {
  std::vector<double> ea;    // e^{tau a_k}
  std::vector<double> p1;    // tau * phi1(tau a_k)
  std::vector<double> p2;    // tau * phi2(tau a_k)
};

inline const EtdTables& etd_tables(const ModelSpec& m, const GridSpec& g,
                                   double tau) {
  using Key = std::tuple<int, int, double, double, int, int, double, double,
                         double, bool>;
  thread_local std::map<Key, EtdTables> cache;
  Key key{g.nx, g.ny, g.Lx, g.Ly, static_cast<int>(m.kind),
          static_cast<int>(m.space), m.epsilon, m.alpha, tau, m.linear_only};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  if (cache.size() > 16) cache.clear();
  std::vector<double> a = linear_symbol_grid(m, g);
  EtdTables t;
  t.ea.resize(a.size());
  t.p1.resize(a.size());
  t.p2.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double z = tau * a[i];
    t.ea[i] = std::exp(z);
    t.p1[i] = tau * phi1(z);
    t.p2[i] = tau * phi2(z);
  }
  return cache.emplace(key, std::move(t)).first->second;
}

struct NewtonOutcome {
  ScalarField u;
  int iters = 0;
  int krylov_total = 0;
  double final_rms = 0.0;
};

// Newton iteration with BiCGStab inner solves and diagonal spectral
// preconditioning.  `conserve_mean` keeps the iterate's mean pinned to the
// initial guess's mean (Cahn-Hilliard mass structure): corrections and
// residuals are projected onto the zero-mean complement.
template <class ResidualFn, class JacobianApply>
NewtonOutcome newton_solve(const ResidualFn& residual,
                           const JacobianApply& japply,
                           const std::vector<double>& precond_inv,
                           const ScalarField& u_init, double tol, int max_iter,
                           bool conserve_mean) {
  NewtonOutcome out;
  out.u = u_init;
  ScalarField res = residual(out.u);
  if (conserve_mean) project_zero_mean(res);
  double res_rms = rms(res);
  for (int it = 0; it < max_iter; ++it) {
    if (res_rms <= tol) {
      out.iters = it;
      out.final_rms = res_rms;
      return out;
    }
    // Solve J(u) delta = -res.
    ScalarField rhs = res;
    for (double& v : rhs.a) v = -v;
    ScalarField delta = rhs;
    std::fill(delta.a.begin(), delta.a.end(), 0.0);
    auto apply_j = [&](const ScalarField& x) {
      ScalarField y = japply(out.u, x);
      if (conserve_mean) project_zero_mean(y);
      return y;
    };
    auto apply_m = [&](const ScalarField& x) {
      ScalarField y = solve_diagonal(x, precond_inv);
      if (conserve_mean) project_zero_mean(y);
      return y;
    };
    KrylovResult kr = bicgstab(apply_j, apply_m, rhs, delta, 1e-8, 400);
    out.krylov_total += kr.iterations;
    if (!kr.converged && kr.relative_residual > 1e-2)
      throw NewtonDiverged("inner linear solve stalled (relative residual " +
                               std::to_string(kr.relative_residual) + ")",
                           res_rms, it);
    if (conserve_mean) project_zero_mean(delta);
    // Backtracking: halve the update while it fails to reduce the residual.
    double lambda = 1.0;
    ScalarField trial = out.u;
    ScalarField trial_res = res;
    double trial_rms = res_rms;
    for (int bt = 0; bt < 6; ++bt) {
      trial = out.u;
      for (std::size_t i = 0; i < trial.a.size(); ++i)
        trial.a[i] += lambda * delta.a[i];
      trial_res = residual(trial);
      if (conserve_mean) project_zero_mean(trial_res);
      trial_rms = rms(trial_res);
      if (trial_rms < res_rms || !std::isfinite(trial_rms)) break;
      lambda *= 0.5;
    }
    out.u = trial;
    res = trial_res;
    res_rms = trial_rms;
    if (!std::isfinite(res_rms))
      throw NewtonDiverged("residual became non-finite", res_rms, it + 1);
  }
  if (res_rms <= tol) {
    out.iters = max_iter;
    out.final_rms = res_rms;
    return out;
  }
  throw NewtonDiverged("newton_max_iter exceeded", res_rms, max_iter);
}

// Preconditioner table 1/(1 - theta * tau * a_k) for the Newton schemes.
inline std::vector<double> newton_precond(const ModelSpec& m,
                                          const GridSpec& g, double tau,
                                          double theta) {
  std::vector<double> a = linear_symbol_grid(m, g);
  for (double& v : a) v = 1.0 - theta * tau * v;
  return a;
}

inline double flow_energy(const ModelSpec& m, const ScalarField& u) {
  // CH dissipates the scaled energy Jhat; the AC family dissipates J.
  return energy(u, m.epsilon, /*scaled=*/m.kind == ModelKind::cahn_hilliard)
      .total;
}

// f'(u) pointwise.
inline ScalarField fprime_of(const ScalarField& u) {
  ScalarField out = u;
  for (double& v : out.a) v = well_fp(v);
  return out;
}

}  // namespace detail

// --- Explicit and exponential schemes ---------------------------------------

inline SimState step_forward_euler(const ModelSpec& m, const SchemeSpec& sch,
                                   const SimState& s, double tau) {
  ScalarField rhs = flow_rhs(m, s.u, sch.dealias);
  SimState out = s;
  for (std::size_t i = 0; i < out.u.a.size(); ++i)
    out.u.a[i] = s.u.a[i] + tau * rhs.a[i];
  out.t = s.t + tau;
  out.n = s.n + 1;
  detail::check_finite(out.u, out.n);
  return out;
}

inline SimState step_stabilized_imex(const ModelSpec& m, const SchemeSpec& sch,
                                     const SimState& s, double tau) {
  const GridSpec& g = s.u.grid;
  // Optional stabilization override: S replaces alpha/eps^2 (AC family)
  // resp. alpha/eps (CH) as the zeroth-order coefficient of A.
  std::optional<double> alpha_eff;
  if (sch.S) {
    alpha_eff = (m.kind == ModelKind::cahn_hilliard)
                    ? *sch.S * m.epsilon
                    : *sch.S * m.epsilon * m.epsilon;
  }
  std::vector<double> a = linear_symbol_grid(m, g, alpha_eff);
  ScalarField n0 = nonlinear_remainder(m, s.u, sch.dealias, alpha_eff);
  SpectralCoeffs uh = dft_forward(s.u);
  SpectralCoeffs nh = dft_forward(n0);
  for (std::size_t i = 0; i < uh.c.size(); ++i)
    uh.c[i] = (uh.c[i] + tau * nh.c[i]) / (1.0 - tau * a[i]);
  SimState out = s;
  out.u = dft_inverse(uh);
  out.t = s.t + tau;
  out.n = s.n + 1;
  detail::check_finite(out.u, out.n);
  return out;
}

inline SimState step_etd_rk1(const ModelSpec& m, const SchemeSpec& sch,
                             const SimState& s, double tau) {
  const detail::EtdTables& t = detail::etd_tables(m, s.u.grid, tau);
  ScalarField n0 = nonlinear_remainder(m, s.u, sch.dealias);
  SpectralCoeffs uh = dft_forward(s.u);
  SpectralCoeffs nh = dft_forward(n0);
  for (std::size_t i = 0; i < uh.c.size(); ++i)
    uh.c[i] = t.ea[i] * uh.c[i] + t.p1[i] * nh.c[i];
  SimState out = s;
  out.u = dft_inverse(uh);
  out.t = s.t + tau;
  out.n = s.n + 1;
  detail::check_finite(out.u, out.n);
  return out;
}

inline SimState step_etd_rk2(const ModelSpec& m, const SchemeSpec& sch,
                             const SimState& s, double tau) {
  const detail::EtdTables& t = detail::etd_tables(m, s.u.grid, tau);
  ScalarField n0 = nonlinear_remainder(m, s.u, sch.dealias);
  SpectralCoeffs uh = dft_forward(s.u);
  SpectralCoeffs nh0 = dft_forward(n0);
  // Predictor (ETD-RK1 stage).
  SpectralCoeffs ph = uh;
  for (std::size_t i = 0; i < ph.c.size(); ++i)
    ph.c[i] = t.ea[i] * uh.c[i] + t.p1[i] * nh0.c[i];
  ScalarField upred = dft_inverse(ph);
  // Corrector: + tau*phi2(tau a) (N(upred) - N(u0)).
  ScalarField n1 = nonlinear_remainder(m, upred, sch.dealias);
  SpectralCoeffs nh1 = dft_forward(n1);
  for (std::size_t i = 0; i < ph.c.size(); ++i)
    ph.c[i] += t.p2[i] * (nh1.c[i] - nh0.c[i]);
  SimState out = s;
  out.u = dft_inverse(ph);
  out.t = s.t + tau;
  out.n = s.n + 1;
  detail::check_finite(out.u, out.n);
  return out;
}

// --- Newton-based implicit schemes -------------------------------------------

namespace detail {

// Shared driver: residual/Jacobian pair, preconditioner scale theta, CH mean
// conservation; updates state and fills the solver fields of the report.
template <class ResidualFn, class JacobianApply>
SimState newton_scheme_step(const ModelSpec& m, const SchemeSpec& sch,
                            const SimState& s, double tau, double theta,
                            const ResidualFn& residual,
                            const JacobianApply& japply, StepReport* rep) {
  const GridSpec& g = s.u.grid;
  std::vector<double> prec = newton_precond(m, g, tau, theta);
  const bool conserve = m.kind == ModelKind::cahn_hilliard;
  NewtonOutcome nw = newton_solve(residual, japply, prec, s.u, sch.newton_tol,
                                  sch.newton_max_iter, conserve);
  SimState out = s;
  out.u = std::move(nw.u);
  out.t = s.t + tau;
  out.n = s.n + 1;
  if (rep) {
    rep->newton_iters = nw.iters;
    rep->krylov_iters = nw.krylov_total;
    rep->final_residual = nw.final_rms;
  }
  check_finite(out.u, out.n);
  return out;
}

}  // namespace detail

inline SimState step_backward_euler(const ModelSpec& m, const SchemeSpec& sch,
                                    const SimState& s, double tau,
                                    StepReport* rep = nullptr) {
  const ScalarField& u0 = s.u;
  // Fully implicit: plain collocation regardless of the dealias flag (the
  // filter is defined for explicit nonlinearity evaluations only).
  auto residual = [&](const ScalarField& u) {
    ScalarField r = variational_derivative(m, u);
    for (std::size_t i = 0; i < r.a.size(); ++i)
      r.a[i] = u.a[i] - u0.a[i] + tau * r.a[i];
    return r;
  };
  auto japply = [&](const ScalarField& u, const ScalarField& d) {
    // J delta = delta + tau * J''(u) delta.
    ScalarField fp = detail::fprime_of(u);
    const double eps = m.epsilon;
    if (m.kind == ModelKind::cahn_hilliard) {
      ScalarField inner = laplacian(d, m.space);
      for (std::size_t i = 0; i < inner.a.size(); ++i)
        inner.a[i] = eps * inner.a[i] - fp.a[i] * d.a[i] / eps;
      ScalarField out = laplacian(inner, m.space);
      for (std::size_t i = 0; i < out.a.size(); ++i)
        out.a[i] = d.a[i] + tau * out.a[i];
      return out;
    }
    ScalarField out = laplacian(d, m.space);
    const double ie2 = 1.0 / (eps * eps);
    for (std::size_t i = 0; i < out.a.size(); ++i)
      out.a[i] = -out.a[i] + fp.a[i] * d.a[i] * ie2;
    if (m.kind == ModelKind::convective_allen_cahn) {
      auto [dx, dy] = gradient(d, m.space);
      for (std::size_t i = 0; i < out.a.size(); ++i)
        out.a[i] += m.advection->vx.a[i] * dx.a[i] +
                    m.advection->vy.a[i] * dy.a[i];
    }
    for (std::size_t i = 0; i < out.a.size(); ++i)
      out.a[i] = d.a[i] + tau * out.a[i];
    return out;
  };
  if (rep)
    rep->non_convex_regime = tau > m.epsilon * m.epsilon;
  return detail::newton_scheme_step(m, sch, s, tau, 1.0, residual, japply, rep);
}

inline SimState step_crank_nicolson_mid(const ModelSpec& m,
                                        const SchemeSpec& sch,
                                        const SimState& s, double tau,
                                        StepReport* rep = nullptr) {
  const ScalarField& u0 = s.u;
  auto residual = [&](const ScalarField& u) {
    ScalarField mid = u;
    for (std::size_t i = 0; i < mid.a.size(); ++i)
      mid.a[i] = 0.5 * (u.a[i] + u0.a[i]);
    ScalarField r = variational_derivative(m, mid);
    for (std::size_t i = 0; i < r.a.size(); ++i)
      r.a[i] = u.a[i] - u0.a[i] + tau * r.a[i];
    return r;
  };
  auto japply = [&](const ScalarField& u, const ScalarField& d) {
    ScalarField mid = u;
    for (std::size_t i = 0; i < mid.a.size(); ++i)
      mid.a[i] = 0.5 * (u.a[i] + u0.a[i]);
    ScalarField fp = detail::fprime_of(mid);
    const double eps = m.epsilon;
    if (m.kind == ModelKind::cahn_hilliard) {
      ScalarField inner = laplacian(d, m.space);
      for (std::size_t i = 0; i < inner.a.size(); ++i)
        inner.a[i] = eps * inner.a[i] - fp.a[i] * d.a[i] / eps;
      ScalarField out = laplacian(inner, m.space);
      for (std::size_t i = 0; i < out.a.size(); ++i)
        out.a[i] = d.a[i] + 0.5 * tau * out.a[i];
      return out;
    }
    ScalarField out = laplacian(d, m.space);
    const double ie2 = 1.0 / (eps * eps);
    for (std::size_t i = 0; i < out.a.size(); ++i)
      out.a[i] = -out.a[i] + fp.a[i] * d.a[i] * ie2;
    if (m.kind == ModelKind::convective_allen_cahn) {
      auto [dx, dy] = gradient(d, m.space);
      for (std::size_t i = 0; i < out.a.size(); ++i)
        out.a[i] += m.advection->vx.a[i] * dx.a[i] +
                    m.advection->vy.a[i] * dy.a[i];
    }
    for (std::size_t i = 0; i < out.a.size(); ++i)
      out.a[i] = d.a[i] + 0.5 * tau * out.a[i];
    return out;
  };
  return detail::newton_scheme_step(m, sch, s, tau, 0.5, residual, japply, rep);
}

namespace detail {

// Potential difference quotient DQ(v, w) = (F(v)-F(w))/(v-w) in its exact
// polynomial form (1/4)(v+w)(v^2+w^2-2); at v = w it equals f(v) identically,
// so no small-difference branch is needed.
inline double potential_dq(double v, double w) {
  return 0.25 * (v + w) * (v * v + w * w - 2.0);
}

// d/dv DQ(v, w).
inline double potential_dq_dv(double v, double w) {
  return 0.25 * (3.0 * v * v + 2.0 * v * w + w * w - 2.0);
}

}  // namespace detail

inline SimState step_cn_discrete_variation(const ModelSpec& m,
                                           const SchemeSpec& sch,
                                           const SimState& s, double tau,
                                           StepReport* rep = nullptr) {
  const ScalarField& u0 = s.u;
  const double eps = m.epsilon;
  // phi(u0, u1) = -lap((u0+u1)/2) + DQ/eps^2 for AC, and its H^{-1} image
  // -lap(-eps lap((u0+u1)/2) + DQ/eps) for CH.
  auto residual = [&](const ScalarField& u) {
    ScalarField mid = u;
    ScalarField dq = u;
    for (std::size_t i = 0; i < mid.a.size(); ++i) {
      mid.a[i] = 0.5 * (u.a[i] + u0.a[i]);
      dq.a[i] = detail::potential_dq(u.a[i], u0.a[i]);
    }
    if (m.kind == ModelKind::cahn_hilliard) {
      ScalarField psi = laplacian(mid, m.space);
      for (std::size_t i = 0; i < psi.a.size(); ++i)
        psi.a[i] = -eps * psi.a[i] + dq.a[i] / eps;
      ScalarField r = laplacian(psi, m.space);
      for (std::size_t i = 0; i < r.a.size(); ++i)
        r.a[i] = u.a[i] - u0.a[i] - tau * r.a[i];
      return r;
    }
    ScalarField r = laplacian(mid, m.space);
    const double ie2 = 1.0 / (eps * eps);
    for (std::size_t i = 0; i < r.a.size(); ++i)
      r.a[i] = u.a[i] - u0.a[i] + tau * (-r.a[i] + dq.a[i] * ie2);
    return r;
  };
  auto japply = [&](const ScalarField& u, const ScalarField& d) {
    ScalarField ddq = u;
    for (std::size_t i = 0; i < ddq.a.size(); ++i)
      ddq.a[i] = detail::potential_dq_dv(u.a[i], u0.a[i]);
    if (m.kind == ModelKind::cahn_hilliard) {
      ScalarField inner = laplacian(d, m.space);
      for (std::size_t i = 0; i < inner.a.size(); ++i)
        inner.a[i] = -eps * 0.5 * inner.a[i] + ddq.a[i] * d.a[i] / eps;
      ScalarField out = laplacian(inner, m.space);
      for (std::size_t i = 0; i < out.a.size(); ++i)
        out.a[i] = d.a[i] - tau * out.a[i];
      return out;
    }
    ScalarField out = laplacian(d, m.space);
    const double ie2 = 1.0 / (eps * eps);
    for (std::size_t i = 0; i < out.a.size(); ++i)
      out.a[i] = d.a[i] + tau * (-0.5 * out.a[i] + ddq.a[i] * d.a[i] * ie2);
    return out;
  };
  return detail::newton_scheme_step(m, sch, s, tau, 0.5, residual, japply, rep);
}

inline SimState step_convex_splitting(const ModelSpec& m,
                                      const SchemeSpec& sch, const SimState& s,
                                      double tau, StepReport* rep = nullptr) {
  const ScalarField& u0 = s.u;
  const double eps = m.epsilon;
  // F = (1/4)(u^2-1)^2 split as convex (1/4)u^4 + 1/4 minus concave (1/2)u^2:
  // the cubic is implicit, -u explicit.
  auto residual = [&](const ScalarField& u) {
    if (m.kind == ModelKind::cahn_hilliard) {
      ScalarField inner = laplacian(u, m.space);
      for (std::size_t i = 0; i < inner.a.size(); ++i)
        inner.a[i] = -eps * inner.a[i] +
                     (u.a[i] * u.a[i] * u.a[i] - u0.a[i]) / eps;
      ScalarField r = laplacian(inner, m.space);
      for (std::size_t i = 0; i < r.a.size(); ++i)
        r.a[i] = u.a[i] - u0.a[i] - tau * r.a[i];
      return r;
    }
    ScalarField r = laplacian(u, m.space);
    const double ie2 = 1.0 / (eps * eps);
    for (std::size_t i = 0; i < r.a.size(); ++i)
      r.a[i] = u.a[i] - u0.a[i] +
               tau * (-r.a[i] + (u.a[i] * u.a[i] * u.a[i] - u0.a[i]) * ie2);
    return r;
  };
  auto japply = [&](const ScalarField& u, const ScalarField& d) {
    if (m.kind == ModelKind::cahn_hilliard) {
      ScalarField inner = laplacian(d, m.space);
      for (std::size_t i = 0; i < inner.a.size(); ++i)
        inner.a[i] = -eps * inner.a[i] +
                     3.0 * u.a[i] * u.a[i] * d.a[i] / eps;
      ScalarField out = laplacian(inner, m.space);
      for (std::size_t i = 0; i < out.a.size(); ++i)
        out.a[i] = d.a[i] - tau * out.a[i];
      return out;
    }
    ScalarField out = laplacian(d, m.space);
    const double ie2 = 1.0 / (eps * eps);
    for (std::size_t i = 0; i < out.a.size(); ++i)
      out.a[i] = d.a[i] +
                 tau * (-out.a[i] + 3.0 * u.a[i] * u.a[i] * d.a[i] * ie2);
    return out;
  };
  return detail::newton_scheme_step(m, sch, s, tau, 1.0, residual, japply, rep);
}

// --- Auxiliary-variable schemes ----------------------------------------------

inline SimState step_ieq(const ModelSpec& m, const SchemeSpec& sch,
                         const SimState& s, double tau,
                         StepReport* rep = nullptr) {
  if (!s.q) throw WrongKind("step_ieq: state lacks the q auxiliary (init_aux)");
  const GridSpec& g = s.u.grid;
  const double eps = m.epsilon;
  // Frozen G0 = f(u0)/sqrt(F(u0)+C0); eliminating q1 = q0 + (1/2) G0 (u1-u0)
  // leaves one SPD solve for w = u1 - u0:
  //   AC: [1/tau - lap + (1/(2 eps^2)) G0^2] w = lap u0 - G0 q0 / eps^2
  //   CH: P0 [ (1/tau)(-lap)^{-1} - eps lap + (1/(2 eps)) G0^2 ] w
  //        = P0 [ eps lap u0 - G0 q0 / eps ]       on the zero-mean subspace.
  ScalarField g0 = s.u;
  for (std::size_t i = 0; i < g0.a.size(); ++i) {
    const double u = s.u.a[i];
    g0.a[i] = well_f(u) / std::sqrt(well_F(u) + ieq_c0);
  }
  const bool ch = m.kind == ModelKind::cahn_hilliard;
  ScalarField lap_u0 = laplacian(s.u, m.space);
  ScalarField b = s.u;
  if (ch) {
    for (std::size_t i = 0; i < b.a.size(); ++i)
      b.a[i] = eps * lap_u0.a[i] - g0.a[i] * s.q->a[i] / eps;
  } else {
    const double ie2 = 1.0 / (eps * eps);
    for (std::size_t i = 0; i < b.a.size(); ++i)
      b.a[i] = lap_u0.a[i] - g0.a[i] * s.q->a[i] * ie2;
  }
  if (ch) detail::project_zero_mean(b);

  std::vector<double> lap_sym = laplacian_symbol(g, m.space);
  double g0sq_mean = 0.0;
  {
    detail::KahanSum acc;
    for (double v : g0.a) acc.add(v * v);
    g0sq_mean = acc.value() / static_cast<double>(g0.a.size());
  }
  std::vector<double> prec(lap_sym.size());
  auto apply_op = [&](const ScalarField& w) {
    ScalarField out = w;
    if (ch) {
      SpectralCoeffs wh = dft_forward(w);
      for (std::size_t i = 0; i < wh.c.size(); ++i) {
        const double sl = lap_sym[i];
        // (1/tau)(-lap)^{-1} - eps*lap, diagonal part; k = 0 handled by the
        // zero-mean projection (coefficient there is irrelevant).
        wh.c[i] = (sl == 0.0) ? 0.0 : (-1.0 / (tau * sl) - eps * sl) * wh.c[i];
      }
      out = dft_inverse(wh);
      const double c = 0.5 / eps;
      for (std::size_t i = 0; i < out.a.size(); ++i)
        out.a[i] += c * g0.a[i] * g0.a[i] * w.a[i];
      detail::project_zero_mean(out);
      return out;
    }
    out = laplacian(w, m.space);
    const double c = 0.5 / (eps * eps);
    for (std::size_t i = 0; i < out.a.size(); ++i)
      out.a[i] = w.a[i] / tau - out.a[i] + c * g0.a[i] * g0.a[i] * w.a[i];
    return out;
  };
  if (ch) {
    const double c = 0.5 * g0sq_mean / eps;
    for (std::size_t i = 0; i < prec.size(); ++i) {
      const double sl = lap_sym[i];
      prec[i] = (sl == 0.0) ? 1.0 : 1.0 / (-1.0 / (tau * sl) - eps * sl + c);
    }
  } else {
    const double c = 0.5 * g0sq_mean / (eps * eps);
    for (std::size_t i = 0; i < prec.size(); ++i)
      prec[i] = 1.0 / (1.0 / tau - lap_sym[i] + c);
  }
  auto apply_prec = [&](const ScalarField& x) {
    SpectralCoeffs c = dft_forward(x);
    for (std::size_t i = 0; i < c.c.size(); ++i) c.c[i] *= prec[i];
    ScalarField y = dft_inverse(c);
    if (ch) detail::project_zero_mean(y);
    return y;
  };
  ScalarField w = b;
  std::fill(w.a.begin(), w.a.end(), 0.0);
  KrylovResult kr = pcg(apply_op, apply_prec, b, w, 1e-10, 1000);
  if (!kr.converged)
    throw LinearSolveDiverged("ieq: pcg stalled at relative residual " +
                              std::to_string(kr.relative_residual));
  SimState out = s;
  out.u = s.u;
  for (std::size_t i = 0; i < out.u.a.size(); ++i) out.u.a[i] += w.a[i];
  ScalarField q1 = *s.q;
  for (std::size_t i = 0; i < q1.a.size(); ++i)
    q1.a[i] += 0.5 * g0.a[i] * w.a[i];
  out.q = std::move(q1);
  out.t = s.t + tau;
  out.n = s.n + 1;
  if (rep) rep->krylov_iters = kr.iterations;
  detail::check_finite(out.u, out.n);
  return out;
}

inline SimState step_sav(const ModelSpec& m, const SchemeSpec& sch,
                         const SimState& s, double tau,
                         StepReport* rep = nullptr) {
  (void)sch;
  if (!s.r) throw WrongKind("step_sav: state lacks the r auxiliary (init_aux)");
  const GridSpec& g = s.u.grid;
  const double eps = m.epsilon;
  const bool ch = m.kind == ModelKind::cahn_hilliard;
  // H0 = f(u0)/sqrt(E1(u0)+C1); eliminating r1 reduces the step to two
  // constant-coefficient diagonal solves:
  //   CH: K = I + tau eps lap^2,    u1 = p + r1 w,  w = (tau/eps) K^{-1} lap H0
  //   AC: K = I - (tau/eps) eps lap = I - tau lap (fast-time L2 step scaled
  //       by 1/eps), w = -(tau/eps^2) K^{-1} H0
  // then r1 = (r0 + (1/2)<H0, p - u0>) / (1 - (1/2)<H0, w>), denominator >= 1.
  const double e1 = bulk_energy(s.u);
  const double h_denom = std::sqrt(e1 + sav_c1);
  ScalarField h0 = s.u;
  for (double& v : h0.a) v = well_f(v) / h_denom;
  std::vector<double> lap_sym = laplacian_symbol(g, m.space);
  SpectralCoeffs uh = dft_forward(s.u);
  SpectralCoeffs hh = dft_forward(h0);
  for (std::size_t i = 0; i < uh.c.size(); ++i) {
    const double sl = lap_sym[i];
    if (ch) {
      const double denom = 1.0 + tau * eps * sl * sl;
      uh.c[i] /= denom;
      hh.c[i] *= (tau / eps) * sl / denom;
    } else {
      const double denom = 1.0 - tau * sl;
      uh.c[i] /= denom;
      hh.c[i] *= -(tau / (eps * eps)) / denom;
    }
  }
  ScalarField p = dft_inverse(uh);
  ScalarField w = dft_inverse(hh);
  ScalarField pmu = p;
  for (std::size_t i = 0; i < pmu.a.size(); ++i) pmu.a[i] -= s.u.a[i];
  const double hp = inner_product_l2(h0, pmu);
  const double hw = inner_product_l2(h0, w);
  const double denom = 1.0 - 0.5 * hw;
  const double r1 = (*s.r + 0.5 * hp) / denom;
  SimState out = s;
  out.u = p;
  for (std::size_t i = 0; i < out.u.a.size(); ++i) out.u.a[i] += r1 * w.a[i];
  out.r = r1;
  out.t = s.t + tau;
  out.n = s.n + 1;
  detail::check_finite(out.u, out.n);
  return out;
}

// --- Dispatcher ---------------------------------------------------------------

inline StepResult step(const ModelSpec& m, const SchemeSpec& sch,
                       const SimState& s, double tau) {
  if (!(tau > 0.0)) throw ValidationError("tau", "must be positive");
  sch.validate(m);
  StepResult res;
  res.report.energy_before = detail::flow_energy(m, s.u);
  switch (sch.kind) {
    case SchemeKind::forward_euler:
      res.state = step_forward_euler(m, sch, s, tau);
      break;
    case SchemeKind::backward_euler:
      res.state = step_backward_euler(m, sch, s, tau, &res.report);
      break;
    case SchemeKind::crank_nicolson_mid:
      res.state = step_crank_nicolson_mid(m, sch, s, tau, &res.report);
      break;
    case SchemeKind::cn_discrete_variation:
      res.state = step_cn_discrete_variation(m, sch, s, tau, &res.report);
      break;
    case SchemeKind::convex_splitting:
      res.state = step_convex_splitting(m, sch, s, tau, &res.report);
      break;
    case SchemeKind::stabilized_imex:
      res.state = step_stabilized_imex(m, sch, s, tau);
      break;
    case SchemeKind::etd_rk1:
      res.state = step_etd_rk1(m, sch, s, tau);
      break;
    case SchemeKind::etd_rk2:
      res.state = step_etd_rk2(m, sch, s, tau);
      break;
    case SchemeKind::ieq:
      res.state = step_ieq(m, sch, s, tau, &res.report);
      break;
    case SchemeKind::sav:
      res.state = step_sav(m, sch, s, tau, &res.report);
      break;
  }
  res.report.energy_after = detail::flow_energy(m, res.state.u);
  if (sch.kind == SchemeKind::ieq)
    res.report.modified_energy = ieq_energy(res.state.u, *res.state.q, m.epsilon);
  else if (sch.kind == SchemeKind::sav)
    res.report.modified_energy = sav_energy(res.state.u, *res.state.r, m.epsilon);
  return res;
}

}  // namespace pfkit
