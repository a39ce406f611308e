// Discrete differential operators on periodic fields: spectral and
// second-order centered-difference (fd2) Laplacian and gradient, L2 and H^-1
// inner products, the 2/3-rule dealias filter, and the spectral Hessian.
//
// Both Laplacians are circulant, so each also has a real Fourier symbol;
// integrators use the symbol arrays directly while field-level callers use
// the operator functions below.
#pragma once

#include <utility>
#include <vector>

#include "pfkit/fft.hpp"
#include "pfkit/grid.hpp"

namespace pfkit {

enum class DiffMethod { spectral, fd2 };

// --- field arithmetic helpers -------------------------------------------------

inline void axpy(ScalarField& y, double a, const ScalarField& x) {
  require_conformable(y.grid, x.grid);
  for (std::size_t i = 0; i < y.a.size(); ++i) y.a[i] += a * x.a[i];
}

inline double inner_product_l2(const ScalarField& f, const ScalarField& g) {
  require_conformable(f.grid, g.grid);
  detail::KahanSum s;
  for (std::size_t i = 0; i < f.a.size(); ++i) s.add(f.a[i] * g.a[i]);
  return s.value() * f.grid.cell_area();
}

inline double l2_norm(const ScalarField& f) { return std::sqrt(inner_product_l2(f, f)); }

// --- Fourier symbols ------------------------------------------------------------

// Per-bin symbol of the Laplacian.  spectral: -|k|^2 (Nyquist included);
// fd2: -(2-2cos(k hx))/hx^2 - (2-2cos(k hy))/hy^2, the exact eigenvalues of
// the periodic 5-point stencil.
inline std::vector<double> laplacian_symbol(const GridSpec& g, DiffMethod method) {
  std::vector<double> s(static_cast<std::size_t>(g.size()));
  const double hx = g.hx(), hy = g.hy();
  for (int jy = 0; jy < g.ny; ++jy) {
    for (int jx = 0; jx < g.nx; ++jx) {
      double v;
      if (method == DiffMethod::spectral) {
        const double kx = wavenumber(jx, g.nx, g.Lx);
        const double ky = wavenumber(jy, g.ny, g.Ly);
        v = -(kx * kx + ky * ky);
      } else {
        const double tx = two_pi * jx / g.nx;
        const double ty = two_pi * jy / g.ny;
        v = -((2.0 - 2.0 * std::cos(tx)) / (hx * hx) + (2.0 - 2.0 * std::cos(ty)) / (hy * hy));
      }
      s[static_cast<std::size_t>(g.index(jx, jy))] = v;
    }
  }
  return s;
}

inline void apply_symbol(SpectralCoeffs& c, const std::vector<double>& symbol) {
  for (std::size_t i = 0; i < c.c.size(); ++i) c.c[i] *= symbol[i];
}

// forward -> multiply by real symbol -> inverse.
inline ScalarField apply_symbol_field(const ScalarField& f, const std::vector<double>& symbol) {
  SpectralCoeffs c = dft_forward(f);
  apply_symbol(c, symbol);
  return dft_inverse(c);
}

// --- Laplacian -------------------------------------------------------------------

inline ScalarField laplacian(const ScalarField& f, DiffMethod method = DiffMethod::spectral) {
  if (method == DiffMethod::spectral) {
    return apply_symbol_field(f, laplacian_symbol(f.grid, DiffMethod::spectral));
  }
  const GridSpec& g = f.grid;
  ScalarField out(g);
  const double ihx2 = 1.0 / (g.hx() * g.hx());
  const double ihy2 = 1.0 / (g.hy() * g.hy());
  for (int iy = 0; iy < g.ny; ++iy) {
    const int iyp = (iy + 1) % g.ny, iym = (iy + g.ny - 1) % g.ny;
    for (int ix = 0; ix < g.nx; ++ix) {
      const int ixp = (ix + 1) % g.nx, ixm = (ix + g.nx - 1) % g.nx;
      out(ix, iy) = (f(ixp, iy) + f(ixm, iy) - 2.0 * f(ix, iy)) * ihx2 +
                    (f(ix, iyp) + f(ix, iym) - 2.0 * f(ix, iy)) * ihy2;
    }
  }
  return out;
}

// --- gradient ----------------------------------------------------------------------

// Spectral first derivative multiplies by i*k with the unpaired Nyquist bin
// zeroed (keeps derivatives of real fields real).
inline std::pair<ScalarField, ScalarField> gradient(const ScalarField& f,
                                                    DiffMethod method = DiffMethod::spectral) {
  const GridSpec& g = f.grid;
  if (method == DiffMethod::spectral) {
    SpectralCoeffs c = dft_forward(f);
    SpectralCoeffs cx(g), cy(g);
    for (int jy = 0; jy < g.ny; ++jy) {
      const double ky = (jy == g.ny / 2) ? 0.0 : wavenumber(jy, g.ny, g.Ly);
      for (int jx = 0; jx < g.nx; ++jx) {
        const double kx = (jx == g.nx / 2) ? 0.0 : wavenumber(jx, g.nx, g.Lx);
        const auto i = static_cast<std::size_t>(g.index(jx, jy));
        const std::complex<double> v = c.c[i];
        cx.c[i] = std::complex<double>(-kx * v.imag(), kx * v.real());
        cy.c[i] = std::complex<double>(-ky * v.imag(), ky * v.real());
      }
    }
    return {dft_inverse(cx), dft_inverse(cy)};
  }
  ScalarField dx(g), dy(g);
  const double i2hx = 1.0 / (2.0 * g.hx());
  const double i2hy = 1.0 / (2.0 * g.hy());
  for (int iy = 0; iy < g.ny; ++iy) {
    const int iyp = (iy + 1) % g.ny, iym = (iy + g.ny - 1) % g.ny;
    for (int ix = 0; ix < g.nx; ++ix) {
      const int ixp = (ix + 1) % g.nx, ixm = (ix + g.nx - 1) % g.nx;
      dx(ix, iy) = (f(ixp, iy) - f(ixm, iy)) * i2hx;
      dy(ix, iy) = (f(ix, iyp) - f(ix, iym)) * i2hy;
    }
  }
  return {dx, dy};
}

// --- H^-1 inner product ----------------------------------------------------------

// (f,g)_{H^-1} = ((-Delta)^{-1} f, g)_{L2}, defined on mean-zero data and
// computed spectrally: sum over k != 0 of fhat_k conj(ghat_k)/|k|^2, scaled
// consistently with inner_product_l2 (Parseval factor hx*hy/(nx*ny)).
inline double inner_product_hm1(const ScalarField& f, const ScalarField& g) {
  require_conformable(f.grid, g.grid);
  const GridSpec& gr = f.grid;

  const double scale_f = std::max(1.0, linf_norm(f));
  const double scale_g = std::max(1.0, linf_norm(g));
  const double mean_f = field_mean(f);
  const double mean_g = field_mean(g);
  if (std::abs(mean_f) > 1e-10 * scale_f)
    throw NonZeroMean("inner_product_hm1: first argument has mean " + std::to_string(mean_f));
  if (std::abs(mean_g) > 1e-10 * scale_g)
    throw NonZeroMean("inner_product_hm1: second argument has mean " + std::to_string(mean_g));

  SpectralCoeffs cf = dft_forward(f);
  SpectralCoeffs cg = dft_forward(g);
  detail::KahanSum s;
  for (int jy = 0; jy < gr.ny; ++jy) {
    for (int jx = 0; jx < gr.nx; ++jx) {
      if (jx == 0 && jy == 0) continue;
      const double kx = wavenumber(jx, gr.nx, gr.Lx);
      const double ky = wavenumber(jy, gr.ny, gr.Ly);
      const auto i = static_cast<std::size_t>(gr.index(jx, jy));
      const std::complex<double> prod = cf.c[i] * std::conj(cg.c[i]);
      s.add(prod.real() / (kx * kx + ky * ky));
    }
  }
  return s.value() * gr.cell_area() / static_cast<double>(gr.size());
}

// --- dealiasing ---------------------------------------------------------------------

// 2/3-rule: zero bins with |freq| > n/3 on either axis (applied before
// evaluating cubic nonlinearities when requested; default is off).
inline void dealias_23(SpectralCoeffs& c) {
  const GridSpec& g = c.grid;
  for (int jy = 0; jy < g.ny; ++jy) {
    const bool cut_y = 3 * std::abs(freq_index(jy, g.ny)) > g.ny;
    for (int jx = 0; jx < g.nx; ++jx) {
      const bool cut_x = 3 * std::abs(freq_index(jx, g.nx)) > g.nx;
      if (cut_x || cut_y) c.c[static_cast<std::size_t>(g.index(jx, jy))] = 0.0;
    }
  }
}

inline ScalarField dealias_23(const ScalarField& f) {
  SpectralCoeffs c = dft_forward(f);
  dealias_23(c);
  return dft_inverse(c);
}

// --- spectral Hessian -----------------------------------------------------------------

// Second derivatives keep the Nyquist bin (real symbol -k^2); the mixed
// derivative composes two first derivatives and therefore uses the
// Nyquist-zeroed convention on both axes.
struct Hessian {
  ScalarField xx, xy, yy;
};

inline Hessian hessian_spectral(const ScalarField& f) {
  const GridSpec& g = f.grid;
  SpectralCoeffs c = dft_forward(f);
  SpectralCoeffs cxx(g), cxy(g), cyy(g);
  for (int jy = 0; jy < g.ny; ++jy) {
    const double ky = wavenumber(jy, g.ny, g.Ly);
    const double ky1 = (jy == g.ny / 2) ? 0.0 : ky;
    for (int jx = 0; jx < g.nx; ++jx) {
      const double kx = wavenumber(jx, g.nx, g.Lx);
      const double kx1 = (jx == g.nx / 2) ? 0.0 : kx;
      const auto i = static_cast<std::size_t>(g.index(jx, jy));
      cxx.c[i] = -kx * kx * c.c[i];
      cyy.c[i] = -ky * ky * c.c[i];
      cxy.c[i] = -kx1 * ky1 * c.c[i];
    }
  }
  return {dft_inverse(cxx), dft_inverse(cxy), dft_inverse(cyy)};
}

}  // namespace pfkit
