#include <cmath>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "gradsq/greens.hpp"
#include "gradsq/infinite.hpp"

using namespace gradsq;

namespace {

// interior vertices of the unit square at margin 1/4: every coordinate of
// eps*v lies in [1/4, 3/4]
std::vector<Pt> interior_vertices(const LatticeDomain& dom, double margin) {
  std::vector<Pt> out;
  for (const auto& v : dom.vertices) {
    bool ok = true;
    for (int a = 0; a < dom.d(); ++a) {
      double x = dom.eps * v[a];
      if (x < margin - 1e-12 || x > 1.0 - margin + 1e-12) ok = false;
    }
    if (ok) out.push_back(v);
  }
  return out;
}

}  // namespace

TEST_CASE("interior double differences approach the infinite kernel") {
  InfiniteKernel ker = build_infinite_kernel(2, 17, 1e-7);

  std::vector<double> max_err;
  std::vector<double> c_bound;
  for (double eps : {1.0 / 8, 1.0 / 16, 1.0 / 32}) {
    LatticeDomain dom = discretize(DomainSpec::make_unit_square(2), eps);
    GreenTable g(dom);
    std::vector<Pt> interior = interior_vertices(dom, 0.25);
    REQUIRE(interior.size() >= 9);

    double worst = 0.0;
    double cd = 0.0;
    for (const auto& v : interior)
      for (const auto& w : interior) {
        Pt u{};
        double r2 = 0.0;
        for (int a = 0; a < 2; ++a) {
          u[a] = w[a] - v[a];
          r2 += double(u[a]) * u[a];
        }
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) {
            double dd_dom = double_diff(g, v, w, i, j);
            double dd_inf = ker.dd(u, i, j);
            worst = std::max(worst, std::abs(dd_dom - dd_inf));
            // fitted uniform bound: |DD| <= c_D |v-w|^{-d}, diagonal <= c_D
            double scale = r2 > 0 ? std::pow(r2, 1.0) : 1.0;  // |u|^d, d=2
            cd = std::max(cd, std::abs(dd_dom) * scale);
          }
      }
    max_err.push_back(worst);
    c_bound.push_back(cd);
  }

  // replacement error follows eps^d: halving eps divides it by about 4
  REQUIRE(max_err.size() == 3);
  CHECK(max_err[0] < 0.3);
  CHECK(max_err[2] < 1e-2);
  for (int k = 0; k + 1 < 3; ++k) {
    double ratio = max_err[k] / max_err[k + 1];
    CHECK(ratio > 2.5);
    CHECK(ratio < 10.0);
  }

  // one uniform constant covers all three resolutions
  for (double c : c_bound) {
    CHECK(c > 0.0);
    CHECK(c < 12.0);
  }
}
