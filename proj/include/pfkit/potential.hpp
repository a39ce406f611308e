// The quartic double-well potential and the energy functionals built on it:
// the free energy in unscaled (J) and scaled (Jhat = eps*J) form, the
// Willmore diagnostic energy, and the modified energies tracked by the IEQ
// and SAV schemes.
//
// Only the fixed quartic well F(u) = (u^2-1)^2/4 is implemented; f = F' and
// f' are exposed as pure functions (f' is bounded below by -1, which several
// solver and eigenvalue bounds rely on).
#pragma once

#include <cmath>

#include "pfkit/operators.hpp"

namespace pfkit {

inline double well_F(double u) {
  const double w = u * u - 1.0;
  return 0.25 * w * w;
}
inline double well_f(double u) { return u * (u * u - 1.0); }
inline double well_fp(double u) { return 3.0 * u * u - 1.0; }

// Shifts making the IEQ/SAV auxiliaries well-defined at the wells, where
// F = 0 would otherwise produce 0/0 in f/sqrt(F).
inline constexpr double ieq_c0 = 1.0;
inline constexpr double sav_c1 = 1.0;

struct PotentialValues {
  double F, f, fprime;
};

inline PotentialValues potential(double u) { return {well_F(u), well_f(u), well_fp(u)}; }

struct EnergyReport {
  double gradient_part = 0.0;
  double potential_part = 0.0;
  double total = 0.0;
  bool scaled = false;
};

// Free energy.  Unscaled: J = int( |grad u|^2/2 + F(u)/eps^2 );
// scaled:   Jhat = eps*J = int( eps|grad u|^2/2 + F(u)/eps ).
// Gradients are always evaluated spectrally so energy-monotonicity tests are
// free of discretization ambiguity.
inline EnergyReport energy(const ScalarField& u, double eps, bool scaled) {
  if (!(eps > 0.0)) throw ValidationError("epsilon", "must be positive");
  auto [ux, uy] = gradient(u, DiffMethod::spectral);
  detail::KahanSum grad2, potl;
  for (std::size_t i = 0; i < u.a.size(); ++i) {
    grad2.add(ux.a[i] * ux.a[i] + uy.a[i] * uy.a[i]);
    potl.add(well_F(u.a[i]));
  }
  const double da = u.grid.cell_area();
  EnergyReport r;
  r.scaled = scaled;
  if (scaled) {
    r.gradient_part = 0.5 * eps * grad2.value() * da;
    r.potential_part = potl.value() * da / eps;
  } else {
    r.gradient_part = 0.5 * grad2.value() * da;
    r.potential_part = potl.value() * da / (eps * eps);
  }
  r.total = r.gradient_part + r.potential_part;
  return r;
}

// Willmore diagnostic energy W(u) = (1/2eps) int (eps*Lap u - f(u)/eps)^2.
inline double willmore_energy(const ScalarField& u, double eps) {
  if (!(eps > 0.0)) throw ValidationError("epsilon", "must be positive");
  ScalarField lap = laplacian(u, DiffMethod::spectral);
  detail::KahanSum s;
  for (std::size_t i = 0; i < u.a.size(); ++i) {
    const double w = eps * lap.a[i] - well_f(u.a[i]) / eps;
    s.add(w * w);
  }
  return 0.5 / eps * s.value() * u.grid.cell_area();
}

// Modified energy dissipated by the IEQ scheme with auxiliary q:
//   E = (eps/2)||grad u||^2 + (1/eps)||q||^2.
// The 1/eps weight on q is the one the scheme's inner-product telescoping
// produces for the chemical potential -eps*Lap u + G(u)q/eps; it reduces to
// Jhat (up to the additive C0 shift) when q = sqrt(F(u)+C0).
inline double ieq_energy(const ScalarField& u, const ScalarField& q, double eps) {
  if (!(eps > 0.0)) throw ValidationError("epsilon", "must be positive");
  require_conformable(u.grid, q.grid);
  auto [ux, uy] = gradient(u, DiffMethod::spectral);
  detail::KahanSum grad2;
  for (std::size_t i = 0; i < u.a.size(); ++i) grad2.add(ux.a[i] * ux.a[i] + uy.a[i] * uy.a[i]);
  return 0.5 * eps * grad2.value() * u.grid.cell_area() +
         inner_product_l2(q, q) / eps;
}

// Modified energy dissipated by the SAV scheme with scalar auxiliary r:
//   G = (eps/2)||grad u||^2 + (1/eps) r^2.
inline double sav_energy(const ScalarField& u, double r, double eps) {
  if (!(eps > 0.0)) throw ValidationError("epsilon", "must be positive");
  auto [ux, uy] = gradient(u, DiffMethod::spectral);
  detail::KahanSum grad2;
  for (std::size_t i = 0; i < u.a.size(); ++i) grad2.add(ux.a[i] * ux.a[i] + uy.a[i] * uy.a[i]);
  return 0.5 * eps * grad2.value() * u.grid.cell_area() + r * r / eps;
}

// Bulk part of the scaled energy, E1(u) = int F(u): the quantity under the
// square root in the SAV auxiliary.
inline double bulk_energy(const ScalarField& u) {
  detail::KahanSum s;
  for (double v : u.a) s.add(well_F(v));
  return s.value() * u.grid.cell_area();
}

}  // namespace pfkit
