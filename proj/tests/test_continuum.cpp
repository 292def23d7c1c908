#include "gradsq/continuum.hpp"

#include <cmath>
#include <complex>
#include <vector>

#include "catch2/catch_amalgamated.hpp"

using namespace gradsq;

namespace {

constexpr double kPi = 3.14159265358979323846;

// frozen references computed with an independent adaptive integrator
constexpr double kBumpSelfInnerDisk = 0.029479340298292158;     // r=1/2 ball
constexpr double kProductBumpSelfInner = 0.00070847662246273683;  // r=1/5 cube

// frozen square Green values, cross-validated against the raw double
// eigenfunction series (1.4e-15) and the method of images (1e-7)
constexpr double kSquareGreenA = 0.055151747931680033;  // (0.3,0.4)-(0.7,0.6)
constexpr double kSquareGreenB = 0.028734290246571828;  // (0.25,0.25)-(0.5,0.75)

double laplacian_fd(double (*G)(const RPt&, const RPt&), const RPt& x,
                    const RPt& y, double h) {
  double c = G(x, y);
  double s = -4.0 * c;
  for (int a = 0; a < 2; ++a)
    for (int sgn : {-1, 1}) {
      RPt p = x;
      p[a] += sgn * h;
      s += G(p, y);
    }
  return s / (h * h);
}

double dd_fd(const RPt& x, const RPt& y, int a, int b, double h) {
  auto at = [&](int sa, int sb) {
    RPt p = x, q = y;
    p[a] += sa * h;
    q[b] += sb * h;
    return green_disk(p, q);
  };
  return (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h * h);
}

}  // namespace

TEST_CASE("disk green closed form, symmetry, boundary decay") {
  // radial anchor: G(0, y) = -ln|y| / 2pi
  CHECK(std::abs(green_disk(make_rpt({0.0, 0.0}), make_rpt({0.5, 0.0})) -
                 std::log(2.0) / (2.0 * kPi)) < 1e-15);

  const std::vector<std::pair<RPt, RPt>> pairs = {
      {make_rpt({0.1, -0.2}), make_rpt({0.4, 0.1})},
      {make_rpt({-0.5, 0.3}), make_rpt({0.2, 0.6})},
      {make_rpt({0.7, 0.1}), make_rpt({-0.1, -0.6})},
      {make_rpt({0.0, 0.8}), make_rpt({0.3, -0.3})}};
  for (const auto& [x, y] : pairs)
    CHECK(std::abs(green_disk(x, y) - green_disk(y, x)) < 1e-15);

  RPt x = make_rpt({0.3, 0.2});
  double prev = 1.0;
  for (double r : {0.9, 0.99, 0.999}) {
    RPt y = make_rpt({r * std::cos(1.0), r * std::sin(1.0)});
    double g = green_disk(x, y);
    CHECK(g > 0.0);
    CHECK(g < prev);
    prev = g;
  }
  CHECK(prev < 1e-2);

  CHECK_THROWS_AS(green_disk(make_rpt({0.2, 0.2}), make_rpt({0.2, 0.2})),
                  CoincidentPoints);
  CHECK_THROWS_AS(green_disk(make_rpt({1.0, 0.0}), make_rpt({0.2, 0.2})),
                  OutsideDomain);
  CHECK_THROWS_AS(green_disk(make_rpt({0.2, 0.2}), make_rpt({0.8, 0.7})),
                  OutsideDomain);
}

TEST_CASE("continuum greens are harmonic away from the diagonal") {
  CHECK(std::abs(laplacian_fd(&green_disk, make_rpt({0.1, -0.2}),
                              make_rpt({0.4, 0.1}), 1e-3)) < 1e-4);
  CHECK(std::abs(laplacian_fd(&green_square, make_rpt({0.3, 0.4}),
                              make_rpt({0.7, 0.6}), 1e-3)) < 1e-4);
}

TEST_CASE("disk mixed second partials match finite differences") {
  const std::vector<std::pair<RPt, RPt>> pairs = {
      {make_rpt({0.1, -0.2}), make_rpt({0.4, 0.1})},
      {make_rpt({-0.3, 0.25}), make_rpt({0.3, -0.2})},
      {make_rpt({0.5, 0.1}), make_rpt({-0.2, -0.4})}};
  for (const auto& [x, y] : pairs)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        double an = green_disk_dd(x, y, a, b);
        double fd = dd_fd(x, y, a, b, 1e-4);
        CHECK(std::abs(an - fd) < 1e-6 * std::max(1.0, std::abs(an)));
      }

  // index symmetry from G(x,y) = G(y,x)
  for (const auto& [x, y] : pairs)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        CHECK(std::abs(green_disk_dd(x, y, a, b) -
                       green_disk_dd(y, x, b, a)) < 1e-14);

  // quarter-turn equivariance: H(Rx, Ry) = R H(x,y) R^T
  RPt x = make_rpt({0.35, -0.15}), y = make_rpt({-0.2, 0.4});
  RPt rx = make_rpt({0.15, 0.35}), ry = make_rpt({-0.4, -0.2});
  double h00 = green_disk_dd(x, y, 0, 0), h01 = green_disk_dd(x, y, 0, 1);
  double h10 = green_disk_dd(x, y, 1, 0), h11 = green_disk_dd(x, y, 1, 1);
  CHECK(std::abs(green_disk_dd(rx, ry, 0, 0) - h11) < 1e-14);
  CHECK(std::abs(green_disk_dd(rx, ry, 0, 1) + h10) < 1e-14);
  CHECK(std::abs(green_disk_dd(rx, ry, 1, 0) + h01) < 1e-14);
  CHECK(std::abs(green_disk_dd(rx, ry, 1, 1) - h00) < 1e-14);

  CHECK_THROWS_AS(green_disk_dd(x, y, 2, 0), DimensionUnsupported);
}

TEST_CASE("mobius maps are disk automorphisms") {
  MobiusMap ident(std::complex<double>(0.0, 0.0));
  RPt z = make_rpt({0.3, -0.4});
  RPt w = ident.apply(z);
  CHECK(std::abs(w[0] - z[0]) < 1e-15);
  CHECK(std::abs(w[1] - z[1]) < 1e-15);
  CHECK(std::abs(ident.derivative(z) - std::complex<double>(1.0, 0.0)) < 1e-15);

  std::complex<double> a(0.3, 0.2);
  MobiusMap h(a);
  RPt at_a = h.apply(make_rpt({a.real(), a.imag()}));
  CHECK(std::abs(at_a[0]) < 1e-15);
  CHECK(std::abs(at_a[1]) < 1e-15);
  CHECK(std::abs(std::abs(h.derivative(make_rpt({0.0, 0.0}))) -
                 (1.0 - std::norm(a))) < 1e-15);

  // image stays in the disk and the inverse is the opposite parameter
  MobiusMap hinv(-a);
  for (double t : {0.1, 0.5, 0.9}) {
    RPt p = make_rpt({t * std::cos(2.0 * t), t * std::sin(2.0 * t)});
    RPt q = h.apply(p);
    CHECK(q[0] * q[0] + q[1] * q[1] < 1.0);
    CHECK(std::abs(h.derivative(p)) > 0.0);
    RPt back = hinv.apply(q);
    CHECK(std::abs(back[0] - p[0]) < 1e-14);
    CHECK(std::abs(back[1] - p[1]) < 1e-14);
  }

  CHECK_THROWS_AS(h.apply(make_rpt({1.0, 0.0})), OutsideDisk);
  CHECK_THROWS_AS(MobiusMap(std::complex<double>(1.0, 0.0)), ConfigError);
}

TEST_CASE("disk green is conformally invariant") {
  MobiusMap h(std::complex<double>(0.25, 0.15));
  const std::vector<std::pair<RPt, RPt>> pairs = {
      {make_rpt({0.1, -0.2}), make_rpt({0.4, 0.1})},
      {make_rpt({-0.5, 0.3}), make_rpt({0.2, 0.6})},
      {make_rpt({0.7, 0.1}), make_rpt({-0.1, -0.6})},
      {make_rpt({0.0, 0.0}), make_rpt({0.35, 0.45})},
      {make_rpt({-0.6, -0.2}), make_rpt({0.5, -0.3})}};
  for (const auto& [x, y] : pairs)
    CHECK(std::abs(green_disk(x, y) - green_disk(h.apply(x), h.apply(y))) <
          1e-10);
}

TEST_CASE("hessian chain rule is conformally covariant") {
  MobiusMap h(std::complex<double>(0.2, -0.3));
  const std::vector<std::pair<RPt, RPt>> pairs = {
      {make_rpt({0.1, -0.2}), make_rpt({0.4, 0.1})},
      {make_rpt({-0.4, 0.3}), make_rpt({0.3, 0.5})},
      {make_rpt({0.55, 0.0}), make_rpt({-0.25, -0.35})}};
  for (const auto& [x, y] : pairs) {
    RPt hx = h.apply(x), hy = h.apply(y);
    double jac = std::norm(h.derivative(x)) * std::norm(h.derivative(y));
    double lhs = 0.0, rhs = 0.0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        double m = green_disk_dd(hx, hy, a, b);
        lhs += m * m * jac;
        double n = green_disk_dd(x, y, a, b);
        rhs += n * n;
      }
    CHECK(std::abs(lhs - rhs) < 1e-8 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("square green series matches frozen references") {
  CHECK(std::abs(green_square(make_rpt({0.3, 0.4}), make_rpt({0.7, 0.6})) -
                 kSquareGreenA) < 1e-12);
  CHECK(std::abs(green_square(make_rpt({0.25, 0.25}), make_rpt({0.5, 0.75})) -
                 kSquareGreenB) < 1e-12);

  // symmetry in the arguments and under the diagonal reflection (the latter
  // flips which axis carries the series)
  const std::vector<std::pair<RPt, RPt>> pairs = {
      {make_rpt({0.3, 0.4}), make_rpt({0.7, 0.6})},
      {make_rpt({0.37, 0.81}), make_rpt({0.43, 0.79})},
      {make_rpt({0.1, 0.5}), make_rpt({0.52, 0.48})}};
  for (const auto& [x, y] : pairs) {
    CHECK(std::abs(green_square(x, y) - green_square(y, x)) < 1e-13);
    RPt xs = make_rpt({x[1], x[0]}), ys = make_rpt({y[1], y[0]});
    CHECK(std::abs(green_square(x, y) - green_square(xs, ys)) < 1e-12);
  }

  // vanishes toward the boundary
  CHECK(green_square(make_rpt({0.001, 0.35}), make_rpt({0.6, 0.7})) < 5e-3);

  CHECK_THROWS_AS(green_square(make_rpt({0.5, 0.5}), make_rpt({0.5, 0.5})),
                  CoincidentPoints);
  CHECK_THROWS_AS(green_square(make_rpt({0.0, 0.5}), make_rpt({0.5, 0.5})),
                  OutsideDomain);
  CHECK_THROWS_AS(green_square(make_rpt({0.5, 0.5}),
                               make_rpt({0.5 + 1e-9, 0.5})),
                  QuadratureNotConverged);

  CHECK(std::abs(continuum_green(ContinuumDomain::unit_square,
                                 make_rpt({0.3, 0.4}), make_rpt({0.7, 0.6})) -
                 kSquareGreenA) < 1e-12);
  CHECK(std::abs(continuum_green(ContinuumDomain::unit_disk,
                                 make_rpt({0.0, 0.0}), make_rpt({0.5, 0.0})) -
                 std::log(2.0) / (2.0 * kPi)) < 1e-15);
}

TEST_CASE("test functions vanish off support and serialize") {
  TestFunction f = TestFunction::make_bump(2, make_rpt({0.5, 0.5}), 0.25);
  CHECK(f(make_rpt({0.5, 0.5})) == std::exp(-1.0));
  CHECK(f(make_rpt({0.75, 0.5})) == 0.0);   // on the support sphere
  CHECK(f(make_rpt({0.9, 0.9})) == 0.0);
  CHECK(f(make_rpt({0.6, 0.55})) > 0.0);
  CHECK(f.support_radius() == 0.25);

  TestFunction p = TestFunction::make_product_bump(2, make_rpt({0.5, 0.5}), 0.2);
  CHECK(p(make_rpt({0.65, 0.65})) > 0.0);   // inside cube, outside ball
  CHECK(p(make_rpt({0.71, 0.5})) == 0.0);
  CHECK(p.support_radius() == 0.2 * std::sqrt(2.0));

  TestFunction q =
      TestFunction::make_poly_bump(2, make_rpt({0.5, 0.5}), 0.3, 0, 0.5);
  CHECK(q(make_rpt({0.6, 0.5})) > 0.0);
  CHECK(q(make_rpt({0.4, 0.5})) < 0.0);
  CHECK(q(make_rpt({0.5, 0.5})) == 0.0);    // polynomial zero at the shift

  for (const TestFunction& t : {f, p, q}) {
    TestFunction back = TestFunction::from_json(t.to_json());
    CHECK(back.kind == t.kind);
    CHECK(back.radius == t.radius);
    RPt probe = make_rpt({0.58, 0.47});
    CHECK(back(probe) == t(probe));
  }

  DomainSpec square = DomainSpec::make_unit_square(2);
  DomainSpec disk = DomainSpec::make_unit_disk(2);
  CHECK(f.support_inside(square));
  CHECK_FALSE(TestFunction::make_bump(2, make_rpt({0.5, 0.5}), 0.6)
                  .support_inside(square));
  CHECK(TestFunction::make_bump(2, make_rpt({0.0, 0.0}), 0.5)
            .support_inside(disk));
  CHECK_FALSE(TestFunction::make_bump(2, make_rpt({0.5, 0.0}), 0.6)
                  .support_inside(disk));

  CHECK_THROWS_AS(TestFunction::make_bump(2, make_rpt({0.5, 0.5}), 0.0),
                  ConfigError);
  CHECK_THROWS_AS(TestFunction::make_bump(1, make_rpt({0.5}), 0.1),
                  DimensionUnsupported);
  CHECK_THROWS_AS(
      TestFunction::make_poly_bump(2, make_rpt({0.5, 0.5}), 0.1, 2, 0.0),
      ConfigError);
}

TEST_CASE("l2 inner products against frozen quadrature references") {
  DomainSpec disk = DomainSpec::make_unit_disk(2);
  DomainSpec square = DomainSpec::make_unit_square(2);

  TestFunction b = TestFunction::make_bump(2, make_rpt({0.0, 0.0}), 0.5);
  CHECK(std::abs(l2_inner(b, b, disk) - kBumpSelfInnerDisk) < 2e-8);

  TestFunction p = TestFunction::make_product_bump(2, make_rpt({0.5, 0.5}), 0.2);
  CHECK(std::abs(l2_inner(p, p, square) - kProductBumpSelfInner) < 2e-8);

  // commutative, and exactly zero for disjoint supports
  TestFunction b2 = TestFunction::make_bump(2, make_rpt({0.15, -0.1}), 0.4);
  CHECK(l2_inner(b, b2, disk) == l2_inner(b2, b, disk));
  TestFunction far = TestFunction::make_bump(2, make_rpt({-0.55, 0.0}), 0.2);
  TestFunction near = TestFunction::make_bump(2, make_rpt({0.55, 0.0}), 0.2);
  CHECK(l2_inner(far, near, disk) == 0.0);

  // odd factor against an even partner integrates to zero
  TestFunction odd =
      TestFunction::make_poly_bump(2, make_rpt({0.5, 0.5}), 0.3, 0, 0.5);
  TestFunction even = TestFunction::make_bump(2, make_rpt({0.5, 0.5}), 0.3);
  CHECK(std::abs(l2_inner(odd, even, square)) < 1e-12);

  CHECK_THROWS_AS(
      l2_inner(TestFunction::make_bump(2, make_rpt({0.9, 0.5}), 0.3), b2, disk),
      OutsideDomain);
  CHECK_THROWS_AS(
      l2_inner(TestFunction::make_bump(3, make_rpt({0.0, 0.0, 0.0}), 0.2), b,
               disk),
      DimensionUnsupported);
}
