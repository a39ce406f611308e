#pragma once

// Interface geometry on the periodic box: tanh profile initializers from
// signed-distance shapes, curvature densities, the calibrated Euler
// characteristic, marching-squares zero contours, periodic Hausdorff
// distance, and perimeter/volume estimates.
//
// Sign convention: u > 0 inside the enclosed region (signed distance d > 0
// inside), so a shrinking disk under Allen-Cahn keeps u = +1 in its interior.
// Curvature densities are oriented so that a convex region with u > 0 inside
// has positive total curvature (a disk integrates to +2*pi).

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "pfkit/errors.hpp"
#include "pfkit/fft.hpp"
#include "pfkit/grid.hpp"
#include "pfkit/operators.hpp"
#include "pfkit/potential.hpp"

namespace pfkit {

// Energy per unit interface length of the equilibrium tanh profile for the
// quartic well: sigma0 = integral over the layer of eps|du/dn|^2 = 2*sqrt(2)/3.
// Hard-coded property of the fixed well (regression-tested by quadrature).
inline constexpr double sigma0 = 0.9428090415820633658677924828;

// Minimum distance (in units of eps) that interfaces must keep from each
// other across the periodic cell for layer-overlap-free benchmarks.
inline constexpr double clearance_factor = 8.0;

namespace detail {

inline double wrap_delta(double d, double L) {
  // Reduce a coordinate difference to (-L/2, L/2].
  d = std::fmod(d, L);
  if (d > 0.5 * L) d -= L;
  if (d <= -0.5 * L) d += L;
  return d;
}

inline double periodic_dist2(double ax, double ay, double bx, double by,
                             double Lx, double Ly) {
  const double dx = wrap_delta(ax - bx, Lx);
  const double dy = wrap_delta(ay - by, Ly);
  return dx * dx + dy * dy;
}

}  // namespace detail

struct Circle {
  double cx = 0.0, cy = 0.0, R = 1.0;
};

// Signed-distance generator, d > 0 inside.  The stripe is the periodic band
// of width L/2 starting at `offset` along the chosen axis; it is the minimal
// shape with flat interfaces that is consistent with periodicity (a single
// isolated plane cannot separate a torus), so it carries two interfaces.
struct SignedDistanceSpec {
  enum class Shape { circle, stripe, circle_union, annulus };
  Shape shape = Shape::circle;
  std::vector<Circle> circles;  // circle: [0]; union: all; annulus: [0] outer
  double inner_radius = 0.0;    // annulus hole radius
  int stripe_axis = 0;          // 0: d varies along x; 1: along y
  double stripe_offset = 0.0;

  static SignedDistanceSpec make_circle(double cx, double cy, double R) {
    SignedDistanceSpec s;
    s.shape = Shape::circle;
    s.circles = {Circle{cx, cy, R}};
    return s;
  }
  static SignedDistanceSpec make_stripe(int axis, double offset) {
    SignedDistanceSpec s;
    s.shape = Shape::stripe;
    s.stripe_axis = axis;
    s.stripe_offset = offset;
    return s;
  }
  static SignedDistanceSpec make_union(std::vector<Circle> cs) {
    SignedDistanceSpec s;
    s.shape = Shape::circle_union;
    s.circles = std::move(cs);
    return s;
  }
  static SignedDistanceSpec make_annulus(double cx, double cy, double R_outer,
                                         double R_inner) {
    SignedDistanceSpec s;
    s.shape = Shape::annulus;
    s.circles = {Circle{cx, cy, R_outer}};
    s.inner_radius = R_inner;
    return s;
  }

  void validate() const {
    if (shape != Shape::stripe) {
      if (circles.empty())
        throw ValidationError("shape", "needs at least one circle");
      for (const Circle& c : circles)
        if (!(c.R > 0.0)) throw ValidationError("R", "must be positive");
    }
    if (shape == Shape::annulus) {
      if (!(inner_radius > 0.0) || !(inner_radius < circles[0].R))
        throw ValidationError("inner_radius", "must satisfy 0 < R_inner < R_outer");
    }
    if (shape == Shape::stripe && stripe_axis != 0 && stripe_axis != 1)
      throw ValidationError("stripe_axis", "must be 0 or 1");
  }

  double evaluate(double x, double y, double Lx, double Ly) const {
    switch (shape) {
      case Shape::circle: {
        const Circle& c = circles[0];
        return c.R - std::sqrt(detail::periodic_dist2(x, y, c.cx, c.cy, Lx, Ly));
      }
      case Shape::circle_union: {
        double d = -1e300;
        for (const Circle& c : circles) {
          const double dc =
              c.R - std::sqrt(detail::periodic_dist2(x, y, c.cx, c.cy, Lx, Ly));
          d = std::max(d, dc);
        }
        return d;
      }
      case Shape::annulus: {
        const Circle& c = circles[0];
        const double r =
            std::sqrt(detail::periodic_dist2(x, y, c.cx, c.cy, Lx, Ly));
        return std::min(c.R - r, r - inner_radius);
      }
      case Shape::stripe: {
        const double L = stripe_axis == 0 ? Lx : Ly;
        const double coord = stripe_axis == 0 ? x : y;
        double s = std::fmod(coord - stripe_offset, L);
        if (s < 0.0) s += L;
        // Band occupies s in (0, L/2): inside-distance to the nearer of the
        // two interfaces {0, L/2}, negative outside.
        if (s <= 0.5 * L) return std::min(s, 0.5 * L - s);
        return -std::min(s - 0.5 * L, L - s);
      }
    }
    return 0.0;
  }
};

struct ClearanceReport {
  double min_clearance = 0.0;
  bool ok = true;
};

// Smallest distance any interface keeps from the others (including its own
// periodic images); the 8*eps rule keeps tanh layers from overlapping.
inline ClearanceReport check_clearance(const GridSpec& g,
                                       const SignedDistanceSpec& sd,
                                       double eps) {
  const double L = std::min(g.Lx, g.Ly);
  double c = 1e300;
  switch (sd.shape) {
    case SignedDistanceSpec::Shape::circle: {
      const double R = sd.circles[0].R;
      c = std::min(R, 0.5 * L - R);
      break;
    }
    case SignedDistanceSpec::Shape::circle_union: {
      for (const Circle& ci : sd.circles)
        c = std::min({c, ci.R, 0.5 * L - ci.R});
      for (std::size_t i = 0; i < sd.circles.size(); ++i)
        for (std::size_t j = i + 1; j < sd.circles.size(); ++j) {
          const double d = std::sqrt(detail::periodic_dist2(
              sd.circles[i].cx, sd.circles[i].cy, sd.circles[j].cx,
              sd.circles[j].cy, g.Lx, g.Ly));
          c = std::min(c, 0.5 * (d - sd.circles[i].R - sd.circles[j].R));
        }
      break;
    }
    case SignedDistanceSpec::Shape::annulus: {
      const double Ro = sd.circles[0].R, Ri = sd.inner_radius;
      c = std::min({Ri, 0.5 * (Ro - Ri), 0.5 * L - Ro});
      break;
    }
    case SignedDistanceSpec::Shape::stripe: {
      const double La = sd.stripe_axis == 0 ? g.Lx : g.Ly;
      c = 0.25 * La;
      break;
    }
  }
  ClearanceReport rep;
  rep.min_clearance = c;
  rep.ok = c >= clearance_factor * eps;
  return rep;
}

// u = tanh(d(x)/(sqrt(2) eps)).  A clearance violation is warning-level: the
// field is still produced; callers that need the guarantee inspect `report`
// or call check_clearance directly.
inline ScalarField tanh_profile(const GridSpec& g, const SignedDistanceSpec& sd,
                                double eps, ClearanceReport* report = nullptr) {
  if (!(eps > 0.0)) throw ValidationError("eps", "must be positive");
  g.validate();
  sd.validate();
  if (report) *report = check_clearance(g, sd, eps);
  ScalarField u;
  u.grid = g;
  u.a.resize(g.size());
  const double w = 1.0 / (std::sqrt(2.0) * eps);
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix)
      u.a[g.index(ix, iy)] =
          std::tanh(sd.evaluate(g.x(ix), g.y(iy), g.Lx, g.Ly) * w);
  return u;
}

// H_eps = (1/2)(f(u)/eps^2 - laplacian(u)), oriented so the total curvature
// of a region with u > 0 inside is positive: integrating across the layer of
// a simple closed interface gives +kappa per unit length, hence
// integral(H_eps) ~ 2*pi for one convex component.
inline ScalarField mean_curvature_density(const ScalarField& u, double eps) {
  ScalarField out = laplacian(u, DiffMethod::spectral);
  const double ie2 = 1.0 / (eps * eps);
  for (std::size_t i = 0; i < out.a.size(); ++i)
    out.a[i] = 0.5 * (well_f(u.a[i]) * ie2 - out.a[i]);
  return out;
}

// K_eps = (1/(2 eps)) [ (eps lap(u) - f(u)/eps)^2
//                       - | eps hess(u) - (f(u)/eps) n (x) n |_F^2 ],
// n = grad(u)/|grad(u)|.  Where the gradient degenerates (off the layer) the
// whole bracket is zeroed: the normal is undefined there and the true
// density vanishes on equilibrium profiles anyway.
inline ScalarField gauss_curvature_density(const ScalarField& u, double eps) {
  ScalarField lap = laplacian(u, DiffMethod::spectral);
  auto [gx, gy] = gradient(u, DiffMethod::spectral);
  Hessian h = hessian_spectral(u);
  double gmax = 0.0;
  for (std::size_t i = 0; i < gx.a.size(); ++i)
    gmax = std::max(gmax, std::hypot(gx.a[i], gy.a[i]));
  const double threshold = 1e-8 * std::max(1.0, gmax);
  ScalarField out = u;
  for (std::size_t i = 0; i < out.a.size(); ++i) {
    const double gn = std::hypot(gx.a[i], gy.a[i]);
    if (gn < threshold) {
      out.a[i] = 0.0;
      continue;
    }
    const double nx = gx.a[i] / gn, ny = gy.a[i] / gn;
    const double fe = well_f(u.a[i]) / eps;
    const double first = eps * lap.a[i] - fe;
    const double mxx = eps * h.xx.a[i] - fe * nx * nx;
    const double mxy = eps * h.xy.a[i] - fe * nx * ny;
    const double myy = eps * h.yy.a[i] - fe * ny * ny;
    const double frob2 = mxx * mxx + 2.0 * mxy * mxy + myy * myy;
    out.a[i] = (first * first - frob2) / (2.0 * eps);
  }
  return out;
}

// Prefactor mapping the total-curvature integral below to the Euler
// characteristic of {u > 0}.  Calibrated once on a single disk (R = 1,
// eps = 0.05, 256^2 grid, value 4*pi + layer corrections) and frozen; the
// tanh-layer asymptotics predict 1/(4*pi) with no eps dependence.
inline constexpr double euler_calibration = 0.079577471545947673;

// chi ~ euler_calibration * integral( f(u)/eps^2 - laplacian(u) ); counts
// +1 per outer boundary loop and -1 per hole of {u > 0} (Gauss-Bonnet).
inline double euler_characteristic_2d(const ScalarField& u, double eps) {
  ScalarField lap = laplacian(u, DiffMethod::spectral);
  detail::KahanSum acc;
  const double ie2 = 1.0 / (eps * eps);
  for (std::size_t i = 0; i < u.a.size(); ++i)
    acc.add(well_f(u.a[i]) * ie2 - lap.a[i]);
  return euler_calibration * acc.value() * u.grid.cell_area();
}

// --- zero contour -------------------------------------------------------------

struct Contour {
  struct Polyline {
    std::vector<std::array<double, 2>> pts;
    bool closed = false;
  };
  double Lx = 0.0, Ly = 0.0;
  std::vector<Polyline> polylines;

  std::size_t total_points() const {
    std::size_t n = 0;
    for (const Polyline& p : polylines) n += p.pts.size();
    return n;
  }
  bool empty() const { return polylines.empty(); }
};

// Marching squares with linear interpolation along cell edges, periodic
// wrap, and the cell-average sign rule for saddle cells.  Crossing points are
// computed once per grid edge, so shared polyline joints match exactly and
// stitching is deterministic (row-major cell order).
inline Contour extract_zero_contour(const ScalarField& u) {
  const GridSpec& g = u.grid;
  Contour contour;
  contour.Lx = g.Lx;
  contour.Ly = g.Ly;

  // Edge key: (orientation, ix, iy); orientation 0 = horizontal edge from
  // (ix,iy) to (ix+1,iy), 1 = vertical edge from (ix,iy) to (ix,iy+1).
  auto edge_id = [&](int orient, int ix, int iy) {
    return (static_cast<long long>(orient) * g.ny + iy) * g.nx + ix;
  };
  std::map<long long, int> edge_point;     // edge -> point index
  std::vector<std::array<double, 2>> pts;  // crossing coordinates
  auto crossing_point = [&](int orient, int ix, int iy) {
    const long long id = edge_id(orient, ix, iy);
    auto it = edge_point.find(id);
    if (it != edge_point.end()) return it->second;
    const double a = u(ix, iy);
    double b, x = g.x(ix), y = g.y(iy);
    if (orient == 0) {
      b = u((ix + 1) % g.nx, iy);
      x += a / (a - b) * g.hx();
    } else {
      b = u(ix, (iy + 1) % g.ny);
      y += a / (a - b) * g.hy();
    }
    const int idx = static_cast<int>(pts.size());
    pts.push_back({x, y});
    edge_point.emplace(id, idx);
    return idx;
  };

  // Collect segments as index pairs.
  std::vector<std::array<int, 2>> segs;
  auto inside = [&](int ix, int iy) { return u(ix % g.nx, iy % g.ny) >= 0.0; };
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) {
      const int code = (inside(ix, iy) ? 1 : 0) | (inside(ix + 1, iy) ? 2 : 0) |
                       (inside(ix + 1, iy + 1) ? 4 : 0) |
                       (inside(ix, iy + 1) ? 8 : 0);
      if (code == 0 || code == 15) continue;
      // Bottom-edge crossing, computed only by patterns that cross it.
      auto S = [&] { return crossing_point(0, ix, iy); };
      auto seg = [&](int p, int q) { segs.push_back({p, q}); };
      switch (code) {
        case 1:
        case 14:
          seg(crossing_point(1, ix, iy), S());
          break;
        case 2:
        case 13:
          seg(S(), crossing_point(1, (ix + 1) % g.nx, iy));
          break;
        case 4:
        case 11:
          seg(crossing_point(1, (ix + 1) % g.nx, iy),
              crossing_point(0, ix, (iy + 1) % g.ny));
          break;
        case 8:
        case 7:
          seg(crossing_point(1, ix, iy), crossing_point(0, ix, (iy + 1) % g.ny));
          break;
        case 3:
        case 12:
          seg(crossing_point(1, ix, iy), crossing_point(1, (ix + 1) % g.nx, iy));
          break;
        case 6:
        case 9:
          seg(S(), crossing_point(0, ix, (iy + 1) % g.ny));
          break;
        case 5: {  // a,c inside
          const double avg = 0.25 * (u(ix, iy) + u((ix + 1) % g.nx, iy) +
                                     u((ix + 1) % g.nx, (iy + 1) % g.ny) +
                                     u(ix, (iy + 1) % g.ny));
          if (avg >= 0.0) {
            seg(S(), crossing_point(1, (ix + 1) % g.nx, iy));
            seg(crossing_point(1, ix, iy), crossing_point(0, ix, (iy + 1) % g.ny));
          } else {
            seg(crossing_point(1, ix, iy), S());
            seg(crossing_point(1, (ix + 1) % g.nx, iy),
                crossing_point(0, ix, (iy + 1) % g.ny));
          }
          break;
        }
        case 10: {  // b,d inside
          const double avg = 0.25 * (u(ix, iy) + u((ix + 1) % g.nx, iy) +
                                     u((ix + 1) % g.nx, (iy + 1) % g.ny) +
                                     u(ix, (iy + 1) % g.ny));
          if (avg >= 0.0) {
            seg(crossing_point(1, ix, iy), S());
            seg(crossing_point(1, (ix + 1) % g.nx, iy),
                crossing_point(0, ix, (iy + 1) % g.ny));
          } else {
            seg(S(), crossing_point(1, (ix + 1) % g.nx, iy));
            seg(crossing_point(1, ix, iy), crossing_point(0, ix, (iy + 1) % g.ny));
          }
          break;
        }
        default:
          break;
      }
    }
  }
  if (segs.empty()) throw EmptyContour("no sign change in field");

  // Stitch segments into polylines: walk the (at most 2-regular) adjacency.
  std::vector<std::vector<int>> adj(pts.size());
  for (std::size_t si = 0; si < segs.size(); ++si) {
    adj[segs[si][0]].push_back(static_cast<int>(si));
    adj[segs[si][1]].push_back(static_cast<int>(si));
  }
  std::vector<char> seg_used(segs.size(), 0);
  auto other_end = [&](int si, int p) {
    return segs[si][0] == p ? segs[si][1] : segs[si][0];
  };
  for (std::size_t start_seg = 0; start_seg < segs.size(); ++start_seg) {
    if (seg_used[start_seg]) continue;
    // Walk forward from this segment as far as possible.
    std::vector<int> chain{segs[start_seg][0], segs[start_seg][1]};
    seg_used[start_seg] = 1;
    bool closed = false;
    for (int dir = 0; dir < 2; ++dir) {
      while (true) {
        const int tip = dir == 0 ? chain.back() : chain.front();
        int next_seg = -1;
        for (int si : adj[tip])
          if (!seg_used[si]) {
            next_seg = si;
            break;
          }
        if (next_seg < 0) break;
        seg_used[next_seg] = 1;
        const int np = other_end(next_seg, tip);
        if (dir == 0)
          chain.push_back(np);
        else
          chain.insert(chain.begin(), np);
        if (chain.front() == chain.back()) {
          closed = true;
          if (dir == 0) chain.pop_back();
          else chain.erase(chain.begin());
          break;
        }
      }
      if (closed) break;
    }
    Contour::Polyline pl;
    pl.closed = closed;
    pl.pts.reserve(chain.size());
    for (int p : chain) pl.pts.push_back(pts[p]);
    contour.polylines.push_back(std::move(pl));
  }
  return contour;
}

// Symmetric Hausdorff distance between the sampled point sets of two
// contours, with the periodic (torus) metric.
inline double hausdorff_distance(const Contour& a, const Contour& b) {
  if (a.empty() || b.empty())
    throw EmptyInput("hausdorff_distance: empty contour");
  auto collect = [](const Contour& c) {
    std::vector<std::array<double, 2>> out;
    out.reserve(c.total_points());
    for (const auto& pl : c.polylines)
      out.insert(out.end(), pl.pts.begin(), pl.pts.end());
    return out;
  };
  const auto pa = collect(a);
  const auto pb = collect(b);
  const double Lx = a.Lx, Ly = a.Ly;
  auto directed = [&](const std::vector<std::array<double, 2>>& from,
                      const std::vector<std::array<double, 2>>& to) {
    double worst = 0.0;
    for (const auto& p : from) {
      double best = 1e300;
      for (const auto& q : to) {
        best = std::min(best,
                        detail::periodic_dist2(p[0], p[1], q[0], q[1], Lx, Ly));
        if (best == 0.0) break;
      }
      worst = std::max(worst, best);
    }
    return std::sqrt(worst);
  };
  return std::max(directed(pa, pb), directed(pb, pa));
}

// Perimeter of the u = 0 interface via the scaled energy: J_hat(u)/sigma0.
inline double perimeter_estimate(const ScalarField& u, double eps) {
  return energy(u, eps, /*scaled=*/true).total / sigma0;
}

// (1/|Omega|) integral((1+u)/2): fraction of the cell occupied by {u > 0}.
inline double volume_fraction(const ScalarField& u) {
  detail::KahanSum acc;
  for (double v : u.a) acc.add(0.5 * (1.0 + v));
  return acc.value() / static_cast<double>(u.a.size());
}

// Mean distance of contour points to `center` (periodic metric) plus the
// maximum deviation from that mean.
inline std::pair<double, double> circle_radius_estimate(
    const Contour& c, std::array<double, 2> center) {
  if (c.empty() || c.total_points() == 0)
    throw EmptyInput("circle_radius_estimate: empty contour");
  detail::KahanSum acc;
  std::vector<double> radii;
  radii.reserve(c.total_points());
  for (const auto& pl : c.polylines)
    for (const auto& p : pl.pts) {
      const double r = std::sqrt(
          detail::periodic_dist2(p[0], p[1], center[0], center[1], c.Lx, c.Ly));
      radii.push_back(r);
      acc.add(r);
    }
  const double mean = acc.value() / static_cast<double>(radii.size());
  double spread = 0.0;
  for (double r : radii) spread = std::max(spread, std::abs(r - mean));
  return {mean, spread};
}

}  // namespace pfkit
