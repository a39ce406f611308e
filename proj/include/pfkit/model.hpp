#pragma once

// Gradient-flow model definitions: Allen-Cahn, Cahn-Hilliard, and convective
// Allen-Cahn on a periodic box, each exposed to the integrators through three
// views that must stay mutually consistent:
//
//   variational_derivative(u)  = -du/dt            (the full right-hand side)
//   linear_symbol(k)           = symbol of A       (stiff, diagonal in Fourier)
//   nonlinear_remainder(u)     = N(u)              (so that A u + N(u) = -J'(u))
//
// Time-scale convention: Allen-Cahn runs in the fast time in which the zero
// level set moves by mean curvature in O(1) time,
//
//   u_t = laplacian(u) - f(u)/eps^2.
//
// Cahn-Hilliard uses the scaled chemical potential mu = -eps*laplacian(u) +
// f(u)/eps and flows u_t = laplacian(mu).  The convective variant adds
// -v.grad(u) + g to the Allen-Cahn right-hand side; the advection term is
// always part of N (it is not diagonal in Fourier space).

#include <optional>
#include <string>
#include <vector>

#include "pfkit/errors.hpp"
#include "pfkit/grid.hpp"
#include "pfkit/operators.hpp"
#include "pfkit/potential.hpp"

namespace pfkit {

enum class ModelKind { allen_cahn, cahn_hilliard, convective_allen_cahn };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::allen_cahn: return "allen_cahn";
    case ModelKind::cahn_hilliard: return "cahn_hilliard";
    case ModelKind::convective_allen_cahn: return "convective_allen_cahn";
  }
  return "unknown";
}

struct AdvectionField {
  ScalarField vx;
  ScalarField vy;
};

struct ModelSpec {
  ModelKind kind = ModelKind::allen_cahn;
  double epsilon = 0.05;
  // Zeroth-order stabilizer: A absorbs -alpha/eps^2 (AC) or alpha*laplacian/eps
  // (CH).  Stabilized and exponential schemes need alpha at least half the
  // Lipschitz constant of f on the invariant range; the default 2 leaves a
  // safety factor for iterates that transiently exceed [-1, 1].
  double alpha = 2.0;
  DiffMethod space = DiffMethod::spectral;
  // Diagnostic switch: integrate u_t = A u only (N forced to zero).  Used by
  // convergence studies to certify exponential integrators against the exact
  // propagator.
  bool linear_only = false;
  std::optional<AdvectionField> advection;  // convective kind only
  std::optional<ScalarField> forcing;       // convective kind only

  bool is_conserved() const { return kind == ModelKind::cahn_hilliard; }

  void validate(const GridSpec& g) const {
    if (!(epsilon > 0.0))
      throw ValidationError("epsilon", "must be positive");
    if (!(alpha >= 0.0))
      throw ValidationError("alpha", "must be nonnegative");
    const bool convective = kind == ModelKind::convective_allen_cahn;
    if (!convective && (advection.has_value() || forcing.has_value()))
      throw ValidationError("advection/forcing",
                            "only meaningful for the convective kind");
    if (advection) {
      require_conformable(advection->vx.grid, g);
      require_conformable(advection->vy.grid, g);
    }
    if (forcing) require_conformable(forcing->grid, g);
  }
};

// Symbol of the stabilized linear part A at a single physical wavevector,
// pseudo-spectral convention (exact -|k|^2 Laplacian symbol):
//   AC family: -|k|^2 - alpha/eps^2
//   CH       : -eps |k|^4 - alpha |k|^2 / eps
// Nonpositive for every k; strictly negative for k != 0 when alpha > 0.
inline double linear_symbol(const ModelSpec& m, double kx, double ky) {
  const double k2 = kx * kx + ky * ky;
  if (m.kind == ModelKind::cahn_hilliard)
    return -m.epsilon * k2 * k2 - m.alpha * k2 / m.epsilon;
  return -k2 - m.alpha / (m.epsilon * m.epsilon);
}

// Full grid of symbol values, honoring the model's spatial discretization
// (the fd2 Laplacian is also diagonal in the DFT basis, with the discrete
// symbol substituted for -|k|^2).  `alpha` may be overridden so schemes can
// apply their own stabilization scale without copying the ModelSpec.
inline std::vector<double> linear_symbol_grid(const ModelSpec& m,
                                              const GridSpec& g,
                                              std::optional<double> alpha_override = std::nullopt) {
  const double alpha = alpha_override.value_or(m.alpha);
  std::vector<double> s = laplacian_symbol(g, m.space);  // s = -|k|^2 analogue
  if (m.kind == ModelKind::cahn_hilliard) {
    const double c1 = m.epsilon, c2 = alpha / m.epsilon;
    for (double& v : s) v = -c1 * v * v + c2 * v;
  } else {
    const double c = alpha / (m.epsilon * m.epsilon);
    for (double& v : s) v -= c;
  }
  return s;
}

namespace detail {

// f(u) evaluated pointwise, optionally on the 2/3-rule filtered field (the
// pseudo-spectral de-aliasing convention: the filter is applied to the input
// of the cubic, never to the linear terms).
inline ScalarField f_of(const ScalarField& u, bool dealias) {
  if (!dealias) {
    ScalarField out = u;
    for (double& v : out.a) v = well_f(v);
    return out;
  }
  ScalarField filtered = dealias_23(u);
  for (double& v : filtered.a) v = well_f(v);
  return filtered;
}

inline ScalarField advective_term(const ModelSpec& m, const ScalarField& u) {
  if (!m.advection) throw MissingAdvection(
        "convective model has no velocity field attached");
  auto [ux, uy] = gradient(u, m.space);
  ScalarField out = u;
  for (std::size_t i = 0; i < out.a.size(); ++i)
    out.a[i] = m.advection->vx.a[i] * ux.a[i] + m.advection->vy.a[i] * uy.a[i];
  return out;
}

}  // namespace detail

// J'(u) realized as -(du/dt):
//   AC:  -laplacian(u) + f(u)/eps^2
//   CH:  laplacian(eps*laplacian(u) - f(u)/eps)
//   convective AC: AC part + v.grad(u) - g
// With `dealias` set, the cubic is evaluated on the 2/3-filtered field; the
// default matches the plain collocation operator.
inline ScalarField variational_derivative(const ModelSpec& m, const ScalarField& u,
                                          bool dealias = false) {
  const GridSpec& g = u.grid;
  if (m.linear_only) {
    // Surrogate flow u_t = A u: the "variational derivative" is -A u.
    SpectralCoeffs uh = dft_forward(u);
    apply_symbol(uh, linear_symbol_grid(m, g));
    ScalarField out = dft_inverse(uh);
    for (double& v : out.a) v = -v;
    return out;
  }
  const double eps = m.epsilon;
  ScalarField fu = detail::f_of(u, dealias);
  if (m.kind == ModelKind::cahn_hilliard) {
    // laplacian(eps*laplacian(u) - f(u)/eps), assembled in one spectral pass
    // (or two stencil sweeps for fd2).
    if (m.space == DiffMethod::spectral) {
      SpectralCoeffs uh = dft_forward(u);
      SpectralCoeffs fh = dft_forward(fu);
      std::vector<double> s = laplacian_symbol(g, DiffMethod::spectral);
      for (std::size_t i = 0; i < uh.c.size(); ++i)
        uh.c[i] = s[i] * (eps * s[i] * uh.c[i] - fh.c[i] / eps);
      return dft_inverse(uh);
    }
    ScalarField inner = laplacian(u, m.space);
    for (std::size_t i = 0; i < inner.a.size(); ++i)
      inner.a[i] = eps * inner.a[i] - fu.a[i] / eps;
    return laplacian(inner, m.space);
  }
  ScalarField out = laplacian(u, m.space);
  const double ie2 = 1.0 / (eps * eps);
  for (std::size_t i = 0; i < out.a.size(); ++i)
    out.a[i] = -out.a[i] + fu.a[i] * ie2;
  if (m.kind == ModelKind::convective_allen_cahn) {
    ScalarField adv = detail::advective_term(m, u);
    for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] += adv.a[i];
    if (m.forcing)
      for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] -= m.forcing->a[i];
  }
  return out;
}

// N(u) = -J'(u) - A u:
//   AC:  (alpha*u - f(u))/eps^2
//   CH:  laplacian((f(u) - alpha*u)/eps)
//   convective AC adds -v.grad(u) + g.
// The splitting identity A u + N(u) = -variational_derivative(u) holds to
// rounding for every kind (it is how the CH signs are fixed).
inline ScalarField nonlinear_remainder(const ModelSpec& m, const ScalarField& u,
                                       bool dealias = false,
                                       std::optional<double> alpha_override = std::nullopt) {
  const GridSpec& g = u.grid;
  if (m.linear_only) {
    ScalarField out = u;
    std::fill(out.a.begin(), out.a.end(), 0.0);
    return out;
  }
  const double eps = m.epsilon;
  const double alpha = alpha_override.value_or(m.alpha);
  ScalarField fu = detail::f_of(u, dealias);
  if (m.kind == ModelKind::cahn_hilliard) {
    ScalarField w = u;
    for (std::size_t i = 0; i < w.a.size(); ++i)
      w.a[i] = (fu.a[i] - alpha * u.a[i]) / eps;
    return laplacian(w, m.space);
  }
  ScalarField out = u;
  const double ie2 = 1.0 / (eps * eps);
  for (std::size_t i = 0; i < out.a.size(); ++i)
    out.a[i] = (alpha * u.a[i] - fu.a[i]) * ie2;
  if (m.kind == ModelKind::convective_allen_cahn) {
    ScalarField adv = detail::advective_term(m, u);
    for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] -= adv.a[i];
    if (m.forcing)
      for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] += m.forcing->a[i];
  }
  (void)g;
  return out;
}

struct MixedState {
  ScalarField u;
  ScalarField mu;
};

// mu = -eps*laplacian(u) + f(u)/eps.  Cahn-Hilliard only.
inline ScalarField chemical_potential(const ModelSpec& m, const ScalarField& u) {
  if (m.kind != ModelKind::cahn_hilliard)
    throw WrongKind("chemical_potential requires the cahn_hilliard kind");
  ScalarField out = laplacian(u, m.space);
  const double eps = m.epsilon;
  for (std::size_t i = 0; i < out.a.size(); ++i)
    out.a[i] = -eps * out.a[i] + well_f(u.a[i]) / eps;
  return out;
}

inline MixedState mixed_state(const ModelSpec& m, const ScalarField& u) {
  return MixedState{u, chemical_potential(m, u)};
}

// Flow right-hand side du/dt = -J'(u); convenience for explicit steppers.
inline ScalarField flow_rhs(const ModelSpec& m, const ScalarField& u,
                            bool dealias = false) {
  ScalarField out = variational_derivative(m, u, dealias);
  for (double& v : out.a) v = -v;
  return out;
}

}  // namespace pfkit
