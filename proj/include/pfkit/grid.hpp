// Periodic uniform 2D grid and the field containers everything else consumes.
//
// Conventions (fixed across the library):
//   * domain is the torus [0,Lx) x [0,Ly); node (ix,iy) sits at (ix*hx, iy*hy);
//   * fields are row-major with x fastest: index = iy*nx + ix;
//   * spectral coefficient arrays use the same layout indexed by the FFT
//     frequency bins, with integer frequency jx <= nx/2 ? jx : jx - nx.
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "pfkit/errors.hpp"

namespace pfkit {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

struct GridSpec {
  int nx = 256;
  int ny = 256;
  double Lx = two_pi;
  double Ly = two_pi;

  double hx() const { return Lx / nx; }
  double hy() const { return Ly / ny; }
  double cell_area() const { return hx() * hy(); }
  double area() const { return Lx * Ly; }
  std::int64_t size() const { return static_cast<std::int64_t>(nx) * ny; }
  std::int64_t index(int ix, int iy) const { return static_cast<std::int64_t>(iy) * nx + ix; }
  double x(int ix) const { return ix * hx(); }
  double y(int iy) const { return iy * hy(); }

  bool operator==(const GridSpec& o) const {
    return nx == o.nx && ny == o.ny && Lx == o.Lx && Ly == o.Ly;
  }

  // Grid sizes must be even (the unpaired Nyquist bin is handled per axis);
  // powers of two are recommended for transform speed but not required.
  void validate() const {
    if (nx < 4 || nx % 2 != 0) throw ValidationError("nx", "must be even and >= 4");
    if (ny < 4 || ny % 2 != 0) throw ValidationError("ny", "must be even and >= 4");
    if (!(Lx > 0.0)) throw ValidationError("Lx", "must be positive");
    if (!(Ly > 0.0)) throw ValidationError("Ly", "must be positive");
  }
};

// Integer frequency of FFT bin j on an n-point axis: 0,1,...,n/2,-(n/2-1),...,-1.
inline int freq_index(int j, int n) { return j <= n / 2 ? j : j - n; }

// Physical wavenumber of bin j: 2*pi*freq/L.
inline double wavenumber(int j, int n, double L) { return two_pi * freq_index(j, n) / L; }

struct ScalarField {
  GridSpec grid;
  std::vector<double> a;

  ScalarField() = default;
  explicit ScalarField(const GridSpec& g, double fill = 0.0)
      : grid(g), a(static_cast<std::size_t>(g.size()), fill) {}

  double& operator()(int ix, int iy) { return a[static_cast<std::size_t>(grid.index(ix, iy))]; }
  double operator()(int ix, int iy) const { return a[static_cast<std::size_t>(grid.index(ix, iy))]; }
  std::int64_t size() const { return grid.size(); }
};

struct SpectralCoeffs {
  GridSpec grid;
  std::vector<std::complex<double>> c;

  SpectralCoeffs() = default;
  explicit SpectralCoeffs(const GridSpec& g)
      : grid(g), c(static_cast<std::size_t>(g.size()), std::complex<double>(0.0, 0.0)) {}
};

inline void require_conformable(const GridSpec& a, const GridSpec& b) {
  if (!(a == b)) throw ValidationError("grid", "fields are not conformable (different GridSpec)");
}

inline bool all_finite(const ScalarField& f) {
  for (double v : f.a)
    if (!std::isfinite(v)) return false;
  return true;
}

inline double linf_norm(const ScalarField& f) {
  double m = 0.0;
  for (double v : f.a) m = std::max(m, std::abs(v));
  return m;
}

namespace detail {

// Compensated (Kahan) summation.  Quadrature sums feed tolerances as tight as
// 1e-12 absolute on O(10^4)-term sums, where naive accumulation is marginal.
class KahanSum {
 public:
  void add(double x) {
    double y = x - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

}  // namespace detail

// Mean of samples (compensated).
inline double field_mean(const ScalarField& f) {
  detail::KahanSum s;
  for (double v : f.a) s.add(v);
  return s.value() / static_cast<double>(f.size());
}

}  // namespace pfkit
