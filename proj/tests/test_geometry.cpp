#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <pfkit/geometry.hpp>

using namespace pfkit;

TEST_CASE("sigma0 is the tanh layer energy constant 2*sqrt(2)/3") {
  CHECK(std::abs(sigma0 - 2.0 * std::sqrt(2.0) / 3.0) < 1e-15);
  // quadrature cross-check: integral of eps*(d/dn tanh(n/(sqrt2 eps)))^2 dn
  const double eps = 0.05;
  const double h = 1e-4;
  double acc = 0.0;
  for (double n = -1.0; n < 1.0; n += h) {
    const double t = std::tanh((n + 0.5 * h) / (std::sqrt(2.0) * eps));
    const double dpdn = (1.0 - t * t) / (std::sqrt(2.0) * eps);
    acc += eps * dpdn * dpdn * h;
  }
  CHECK(acc == Catch::Approx(sigma0).epsilon(1e-6));
}

TEST_CASE("tanh profile has the right signs and zero level set") {
  GridSpec g{256, 256};
  const double eps = 0.05;
  SignedDistanceSpec sd = SignedDistanceSpec::make_circle(pi, pi, 1.0);
  ClearanceReport rep;
  ScalarField u = tanh_profile(g, sd, eps, &rep);
  CHECK(rep.ok);
  CHECK(rep.min_clearance == Catch::Approx(1.0));  // min(R, L/2 - R) = R here
  // center is deep inside, corner deep outside
  CHECK(u(128, 128) == Catch::Approx(1.0).margin(1e-12));
  CHECK(u(0, 0) == Catch::Approx(-1.0).margin(1e-12));
  // signed distance evaluates to zero exactly on the circle
  CHECK(sd.evaluate(pi + 1.0, pi, g.Lx, g.Ly) == Catch::Approx(0.0).margin(1e-14));
  CHECK(sd.evaluate(pi, pi - 1.0, g.Lx, g.Ly) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("clearance rule flags layers that are too close") {
  GridSpec g{64, 64};
  SignedDistanceSpec sd = SignedDistanceSpec::make_circle(pi, pi, 1.0);
  CHECK(check_clearance(g, sd, 0.1).ok);        // 8*0.1 = 0.8 <= 1
  CHECK_FALSE(check_clearance(g, sd, 0.2).ok);  // 8*0.2 = 1.6 > 1
  // annulus: limited by the half gap between rings
  SignedDistanceSpec an = SignedDistanceSpec::make_annulus(pi, pi, 1.6, 0.8);
  CHECK(check_clearance(g, an, 0.04).min_clearance == Catch::Approx(0.4));
  // stripe: quarter of the box along its axis
  SignedDistanceSpec st = SignedDistanceSpec::make_stripe(0, 0.0);
  CHECK(check_clearance(g, st, 0.05).min_clearance == Catch::Approx(pi / 2));
}

TEST_CASE("signed distance validation") {
  SignedDistanceSpec sd;
  sd.shape = SignedDistanceSpec::Shape::circle;
  CHECK_THROWS_AS(sd.validate(), ValidationError);  // no circles
  sd = SignedDistanceSpec::make_circle(0, 0, -1.0);
  CHECK_THROWS_AS(sd.validate(), ValidationError);
  sd = SignedDistanceSpec::make_annulus(0, 0, 1.0, 1.5);
  CHECK_THROWS_AS(sd.validate(), ValidationError);  // inner >= outer
  sd = SignedDistanceSpec::make_stripe(2, 0.0);
  CHECK_THROWS_AS(sd.validate(), ValidationError);
}

TEST_CASE("marching squares recovers a circle to grid accuracy") {
  GridSpec g{256, 256};
  const double eps = 0.05;
  ScalarField u = tanh_profile(g, SignedDistanceSpec::make_circle(pi, pi, 1.0), eps);
  Contour c = extract_zero_contour(u);
  REQUIRE(c.polylines.size() == 1);
  CHECK(c.polylines[0].closed);
  CHECK(c.total_points() > 100);
  auto [mean, spread] = circle_radius_estimate(c, {pi, pi});
  CHECK(mean == Catch::Approx(1.0).margin(g.hx()));
  CHECK(spread < 2 * g.hx());
}

TEST_CASE("contour extraction is translation invariant across the periodic seam") {
  GridSpec g{128, 128};
  const double eps = 0.08;
  // circle pushed across x = 0: the contour wraps but the radius must not care
  ScalarField u = tanh_profile(g, SignedDistanceSpec::make_circle(0.3, pi, 1.0), eps);
  Contour c = extract_zero_contour(u);
  auto [mean, spread] = circle_radius_estimate(c, {0.3, pi});
  ScalarField v = tanh_profile(g, SignedDistanceSpec::make_circle(pi, pi, 1.0), eps);
  Contour cv = extract_zero_contour(v);
  auto [mean_v, spread_v] = circle_radius_estimate(cv, {pi, pi});
  CHECK(mean == Catch::Approx(mean_v).margin(1e-6));
  CHECK(spread < 2 * g.hx());
  CHECK(spread_v < 2 * g.hx());
}

TEST_CASE("contour extraction is deterministic") {
  GridSpec g{64, 64};
  ScalarField u = tanh_profile(g, SignedDistanceSpec::make_circle(pi, pi, 1.2), 0.1);
  Contour a = extract_zero_contour(u);
  Contour b = extract_zero_contour(u);
  REQUIRE(a.polylines.size() == b.polylines.size());
  for (std::size_t i = 0; i < a.polylines.size(); ++i) {
    REQUIRE(a.polylines[i].pts.size() == b.polylines[i].pts.size());
    for (std::size_t j = 0; j < a.polylines[i].pts.size(); ++j) {
      CHECK(a.polylines[i].pts[j][0] == b.polylines[i].pts[j][0]);
      CHECK(a.polylines[i].pts[j][1] == b.polylines[i].pts[j][1]);
    }
  }
}

TEST_CASE("contour of a sign-definite field is empty") {
  GridSpec g{32, 32};
  ScalarField u(g, 0.7);
  CHECK_THROWS_AS(extract_zero_contour(u), EmptyContour);
}

TEST_CASE("hausdorff distance is a periodic metric on contours") {
  auto circle_contour = [](double cx, double cy, double R, int n) {
    Contour c;
    c.Lx = two_pi;
    c.Ly = two_pi;
    Contour::Polyline pl;
    pl.closed = true;
    for (int i = 0; i < n; ++i) {
      const double th = two_pi * i / n;
      pl.pts.push_back({cx + R * std::cos(th), cy + R * std::sin(th)});
    }
    c.polylines.push_back(std::move(pl));
    return c;
  };
  Contour a = circle_contour(pi, pi, 1.0, 4096);
  CHECK(hausdorff_distance(a, a) == 0.0);
  // concentric circles differing by dR: distance = dR (sampling error ~1e-7)
  Contour b = circle_contour(pi, pi, 1.1, 4096);
  CHECK(hausdorff_distance(a, b) == Catch::Approx(0.1).margin(1e-4));
  CHECK(hausdorff_distance(b, a) == Catch::Approx(0.1).margin(1e-4));
  // translation by s: distance = s, also when the shift crosses the seam
  Contour s = circle_contour(pi + 0.05, pi, 1.0, 4096);
  CHECK(hausdorff_distance(a, s) == Catch::Approx(0.05).margin(1e-4));
  Contour w = circle_contour(two_pi - 0.5, pi, 1.0, 4096);
  Contour w2 = circle_contour(0.5, pi, 1.0, 4096);  // 1.0 apart through the seam
  CHECK(hausdorff_distance(w, w2) == Catch::Approx(1.0).margin(1e-3));
  Contour empty;
  CHECK_THROWS_AS(hausdorff_distance(a, empty), EmptyInput);
  CHECK_THROWS_AS(circle_radius_estimate(empty, {0, 0}), EmptyInput);
}

TEST_CASE("perimeter estimate: unit circle within 5% of 2*pi") {
  GridSpec g{256, 256};
  const double eps = 0.05;
  ScalarField u = tanh_profile(g, SignedDistanceSpec::make_circle(pi, pi, 1.0), eps);
  CHECK(perimeter_estimate(u, eps) == Catch::Approx(two_pi).epsilon(0.05));
}

TEST_CASE("perimeter estimate: stripe has two flat interfaces of length Ly") {
  GridSpec g{256, 256};
  const double eps = 0.05;
  ScalarField u = tanh_profile(g, SignedDistanceSpec::make_stripe(0, 0.0), eps);
  CHECK(perimeter_estimate(u, eps) == Catch::Approx(2 * two_pi).epsilon(0.02));
}

TEST_CASE("energy equipartition of equilibrium layers") {
  GridSpec g{256, 256};
  const double eps = 0.05;
  ScalarField u = tanh_profile(g, SignedDistanceSpec::make_stripe(0, 0.0), eps);
  EnergyReport r = energy(u, eps, true);
  CHECK(std::abs(r.gradient_part - r.potential_part) < 0.01 * r.total);
}

TEST_CASE("volume fraction") {
  GridSpec g{256, 256};
  const double eps = 0.05;
  // disk of radius 1 in a (2 pi)^2 box: pi / (4 pi^2) = 1/(4 pi)
  ScalarField disk = tanh_profile(g, SignedDistanceSpec::make_circle(pi, pi, 1.0), eps);
  CHECK(volume_fraction(disk) == Catch::Approx(1.0 / (4 * pi)).margin(1e-3));
  // stripe fills exactly half the box by antisymmetry
  ScalarField stripe = tanh_profile(g, SignedDistanceSpec::make_stripe(0, 0.0), eps);
  CHECK(volume_fraction(stripe) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("total mean curvature of a disk is close to 2*pi for several radii") {
  GridSpec g{256, 256};
  const double eps = 0.05;
  for (double R : {0.8, 1.0, 1.3}) {
    ScalarField u = tanh_profile(g, SignedDistanceSpec::make_circle(pi, pi, R), eps);
    ScalarField hd = mean_curvature_density(u, eps);
    detail::KahanSum acc;
    for (double v : hd.a) acc.add(v);
    const double total = acc.value() * g.cell_area();
    INFO("R = " << R);
    CHECK(total == Catch::Approx(two_pi).epsilon(0.10));
  }
}

TEST_CASE("gauss curvature density vanishes on constant fields") {
  GridSpec g{64, 64};
  for (double c : {0.0, 0.4, 1.0}) {
    ScalarField u(g, c);
    ScalarField k = gauss_curvature_density(u, 0.1);
    CHECK(linf_norm(k) == 0.0);
  }
}

TEST_CASE("euler characteristic counts components and holes") {
  GridSpec g{256, 256};
  const double eps = 0.05;
  ScalarField disk = tanh_profile(g, SignedDistanceSpec::make_circle(pi, pi, 1.0), eps);
  CHECK(euler_characteristic_2d(disk, eps) == Catch::Approx(1.0).margin(0.2));

  ScalarField two = tanh_profile(
      g, SignedDistanceSpec::make_union({Circle{pi - 1.6, pi, 0.8},
                                         Circle{pi + 1.6, pi, 0.8}}),
      eps);
  CHECK(euler_characteristic_2d(two, eps) == Catch::Approx(2.0).margin(0.2));

  ScalarField ring = tanh_profile(g, SignedDistanceSpec::make_annulus(pi, pi, 1.6, 0.8), eps);
  CHECK(euler_characteristic_2d(ring, eps) == Catch::Approx(0.0).margin(0.2));
}
