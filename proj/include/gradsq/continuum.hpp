#ifndef GRADSQ_CONTINUUM_HPP
#define GRADSQ_CONTINUUM_HPP

// Continuum reference objects: Dirichlet Green's functions of the unit disk
// (closed form, with mixed second partials) and the unit square (reduced
// eigenfunction series), Mobius disk automorphisms, and a fixed family of
// smooth compactly supported test functions with adaptive quadrature.

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "gradsq/common.hpp"
#include "gradsq/lattice.hpp"

namespace gradsq {

namespace detail {

inline std::complex<double> to_complex(const RPt& x) { return {x[0], x[1]}; }

inline void check_disk_pair(const RPt& x, const RPt& y) {
  if (x[0] * x[0] + x[1] * x[1] >= 1.0 || y[0] * y[0] + y[1] * y[1] >= 1.0)
    throw OutsideDomain("points must lie in the open unit disk");
  if (x[0] == y[0] && x[1] == y[1])
    throw CoincidentPoints("green function diverges on the diagonal");
}

}  // namespace detail

// ---- unit disk ---------------------------------------------------------------

// Dirichlet Green's function with -Delta G = delta:
//   G(x,y) = (1/2pi) ln(|1 - x conj(y)| / |x - y|)
inline double green_disk(const RPt& x, const RPt& y) {
  detail::check_disk_pair(x, y);
  std::complex<double> z = detail::to_complex(x), w = detail::to_complex(y);
  return std::log(std::abs(1.0 - z * std::conj(w)) / std::abs(z - w)) /
         (2.0 * detail::kPi);
}

// mixed second partials d/dx_a d/dy_b of green_disk; both log terms reduce
// to one complex square each:
//   ln|1 - z conj(w)|: psi = -1/(1-z conj(w))^2, H = [[Re,Im],[-Im,Re]](psi)
//   ln|z - w|:         chi = 1/(z-w)^2,          H = [[Re,-Im],[-Im,-Re]](chi)
inline double green_disk_dd(const RPt& x, const RPt& y, int a, int b) {
  detail::check_disk_pair(x, y);
  if (a < 0 || a >= 2 || b < 0 || b >= 2)
    throw DimensionUnsupported("disk derivatives take directions 0 or 1");
  std::complex<double> z = detail::to_complex(x), w = detail::to_complex(y);
  std::complex<double> q1 = 1.0 - z * std::conj(w);
  std::complex<double> psi = -1.0 / (q1 * q1);
  std::complex<double> q2 = z - w;
  std::complex<double> chi = 1.0 / (q2 * q2);
  double h1, h2;
  if (a == 0)
    h1 = b == 0 ? psi.real() : psi.imag();
  else
    h1 = b == 0 ? -psi.imag() : psi.real();
  if (a == 0)
    h2 = b == 0 ? chi.real() : -chi.imag();
  else
    h2 = b == 0 ? -chi.imag() : -chi.real();
  return (h1 - h2) / (2.0 * detail::kPi);
}

// ---- unit square -------------------------------------------------------------

// Reduced series over the axis with the larger separation; the complementary
// 1D problem has the sinh product kernel, summed in overflow-safe form.
inline double green_square(const RPt& x, const RPt& y) {
  for (int a = 0; a < 2; ++a)
    if (x[a] <= 0.0 || x[a] >= 1.0 || y[a] <= 0.0 || y[a] >= 1.0)
      throw OutsideDomain("points must lie in the open unit square");
  if (x[0] == y[0] && x[1] == y[1])
    throw CoincidentPoints("green function diverges on the diagonal");
  int k = std::abs(x[0] - y[0]) >= std::abs(x[1] - y[1]) ? 0 : 1;
  int o = 1 - k;
  double ax = x[o], ay = y[o];
  double s = std::min(x[k], y[k]), t = std::max(x[k], y[k]);
  KahanSum total;
  for (int m = 1; m <= 200000; ++m) {
    double mp = m * detail::kPi;
    double kern = 0.5 * std::exp(-mp * (t - s)) * (1.0 - std::exp(-2.0 * mp * s)) *
                  (1.0 - std::exp(-2.0 * mp * (1.0 - t))) /
                  (1.0 - std::exp(-2.0 * mp));
    total.add((2.0 / mp) * std::sin(mp * ax) * std::sin(mp * ay) * kern);
    if (m > 8 && std::exp(-mp * (t - s)) / mp < 1e-17) return total.value();
  }
  throw QuadratureNotConverged("square series needs separated points");
}

enum class ContinuumDomain { unit_disk, unit_square };

inline double continuum_green(ContinuumDomain dom, const RPt& x, const RPt& y) {
  return dom == ContinuumDomain::unit_disk ? green_disk(x, y)
                                           : green_square(x, y);
}

// ---- Mobius disk automorphisms -------------------------------------------------

// h(z) = (z - a)/(1 - conj(a) z), a bijection of the open unit disk
struct MobiusMap {
  std::complex<double> a;

  explicit MobiusMap(std::complex<double> param) : a(param) {
    if (std::abs(a) >= 1.0)
      throw ConfigError("mobius parameter must satisfy |a| < 1");
  }

  RPt apply(const RPt& x) const {
    std::complex<double> z = detail::to_complex(x);
    if (std::abs(z) >= 1.0) throw OutsideDisk("mobius maps the open disk");
    std::complex<double> h = (z - a) / (1.0 - std::conj(a) * z);
    return make_rpt({h.real(), h.imag()});
  }

  // h'(z) = (1 - |a|^2) / (1 - conj(a) z)^2
  std::complex<double> derivative(const RPt& x) const {
    std::complex<double> z = detail::to_complex(x);
    if (std::abs(z) >= 1.0) throw OutsideDisk("mobius maps the open disk");
    std::complex<double> q = 1.0 - std::conj(a) * z;
    return (1.0 - std::norm(a)) / (q * q);
  }
};

// ---- test functions ------------------------------------------------------------

// Fixed smooth family: radial bump exp(-1/(1-r^2)) on a ball, a per-axis
// product variant on a cube, and a first-degree polynomial times the bump.
struct TestFunction {
  enum class Kind { bump, product_bump, poly_bump };

  Kind kind = Kind::bump;
  int d = 2;
  RPt center{};
  double radius = 0.0;
  int axis = 0;      // poly_bump factor (x[axis] - shift)
  double shift = 0.0;

  static TestFunction make_bump(int d, const RPt& center, double radius) {
    return make_(Kind::bump, d, center, radius, 0, 0.0);
  }
  static TestFunction make_product_bump(int d, const RPt& center, double radius) {
    return make_(Kind::product_bump, d, center, radius, 0, 0.0);
  }
  static TestFunction make_poly_bump(int d, const RPt& center, double radius,
                                     int axis, double shift) {
    if (axis < 0 || axis >= d)
      throw ConfigError("poly_bump axis must name a coordinate");
    return make_(Kind::poly_bump, d, center, radius, axis, shift);
  }

  double operator()(const RPt& x) const {
    if (kind == Kind::product_bump) {
      double p = 1.0;
      for (int a = 0; a < d; ++a) {
        double t = (x[a] - center[a]) / radius;
        double t2 = t * t;
        if (t2 >= 1.0) return 0.0;
        p *= std::exp(-1.0 / (1.0 - t2));
      }
      return p;
    }
    double r2 = 0.0;
    for (int a = 0; a < d; ++a) {
      double t = (x[a] - center[a]) / radius;
      r2 += t * t;
    }
    if (r2 >= 1.0) return 0.0;
    double v = std::exp(-1.0 / (1.0 - r2));
    if (kind == Kind::poly_bump) v *= x[axis] - shift;
    return v;
  }

  // circumradius of the support (ball for bump kinds, cube for the product)
  double support_radius() const {
    return kind == Kind::product_bump ? radius * std::sqrt(double(d)) : radius;
  }

  // support lies strictly inside the domain, at distance > margin from it
  bool support_inside(const DomainSpec& spec, double margin = 0.0) const {
    if (spec.d != d) return false;
    const double pad = radius + margin;
    switch (spec.shape) {
      case Shape::unit_disk: {
        double c2 = 0.0;
        for (int a = 0; a < d; ++a) c2 += center[a] * center[a];
        return std::sqrt(c2) + support_radius() + margin < 1.0;
      }
      case Shape::unit_square:
        for (int a = 0; a < d; ++a)
          if (center[a] - pad <= 0.0 || center[a] + pad >= 1.0) return false;
        return true;
      case Shape::rectangle:
        for (int a = 0; a < d; ++a)
          if (center[a] - pad <= 0.0 || center[a] + pad >= spec.widths[a])
            return false;
        return true;
      case Shape::mask: {
        // best effort: center and padded cube corners must be inside
        if (!spec.contains(center)) return false;
        for (int corner = 0; corner < (1 << d); ++corner) {
          RPt p = center;
          for (int a = 0; a < d; ++a) p[a] += (corner >> a & 1) ? pad : -pad;
          if (!spec.contains(p)) return false;
        }
        return true;
      }
    }
    return false;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["kind"] = kind == Kind::bump            ? "bump"
                : kind == Kind::product_bump ? "product_bump"
                                             : "poly_bump";
    j["d"] = d;
    std::vector<double> c(center.begin(), center.begin() + d);
    j["center"] = c;
    j["radius"] = radius;
    if (kind == Kind::poly_bump) {
      j["axis"] = axis;
      j["shift"] = shift;
    }
    return j;
  }

  static TestFunction from_json(const nlohmann::json& j) {
    std::string k = j.at("kind").get<std::string>();
    int d = j.at("d").get<int>();
    auto c = j.at("center").get<std::vector<double>>();
    if (static_cast<int>(c.size()) != d)
      throw ConfigError("test function center size must match d");
    RPt center{};
    for (int a = 0; a < d; ++a) center[a] = c[a];
    double radius = j.at("radius").get<double>();
    if (k == "bump") return make_bump(d, center, radius);
    if (k == "product_bump") return make_product_bump(d, center, radius);
    if (k == "poly_bump")
      return make_poly_bump(d, center, radius, j.at("axis").get<int>(),
                            j.at("shift").get<double>());
    throw ConfigError("unknown test function kind " + k);
  }

 private:
  static TestFunction make_(Kind k, int d, const RPt& center, double radius,
                            int axis, double shift) {
    if (d < 2 || d > kMaxDim)
      throw DimensionUnsupported("test functions cover 2 <= d <= 8");
    if (!(radius > 0.0)) throw ConfigError("test function radius must be > 0");
    TestFunction f;
    f.kind = k;
    f.d = d;
    f.center = center;
    f.radius = radius;
    f.axis = axis;
    f.shift = shift;
    return f;
  }
};

// ---- quadrature -----------------------------------------------------------------

// integral of f * g over U by midpoint tensor refinement; both supports must
// lie inside U, so the integral reduces to the support overlap box
inline double l2_inner(const TestFunction& f, const TestFunction& g,
                       const DomainSpec& spec) {
  if (f.d != g.d || f.d != spec.d)
    throw DimensionUnsupported("l2_inner needs matching dimensions");
  if (!f.support_inside(spec) || !g.support_inside(spec))
    throw OutsideDomain("test function support must lie inside the domain");
  const int d = f.d;
  RPt lo{}, hi{};
  for (int a = 0; a < d; ++a) {
    lo[a] = std::max(f.center[a] - f.radius, g.center[a] - g.radius);
    hi[a] = std::min(f.center[a] + f.radius, g.center[a] + g.radius);
    if (lo[a] >= hi[a]) return 0.0;
  }
  auto pass = [&](int n) {
    std::vector<int> idx(d, 0);
    KahanSum acc;
    double cell = 1.0;
    for (int a = 0; a < d; ++a) cell *= (hi[a] - lo[a]) / n;
    for (;;) {
      RPt x{};
      for (int a = 0; a < d; ++a)
        x[a] = lo[a] + (idx[a] + 0.5) * (hi[a] - lo[a]) / n;
      acc.add(f(x) * g(x));
      int a = d - 1;
      for (; a >= 0; --a) {
        if (++idx[a] < n) break;
        idx[a] = 0;
      }
      if (a < 0) break;
    }
    return acc.value() * cell;
  };
  int n = 8;
  double prev = pass(n);
  while (2 * n <= 4096) {
    n *= 2;
    double cur = pass(n);
    if (std::abs(cur - prev) < 5e-9) return cur;
    prev = cur;
  }
  throw QuadratureNotConverged("midpoint refinement for l2_inner hit its cap");
}

}  // namespace gradsq

#endif  // GRADSQ_CONTINUUM_HPP
