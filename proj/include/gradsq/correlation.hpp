#ifndef GRADSQ_CORRELATION_HPP
#define GRADSQ_CORRELATION_HPP

// Exact k-point moments and joint cumulants of the Wick-squared gradient
// field. The core is a partition / fixed-point-free-cycle / direction sum
// over a kernel of mixed Green differences; two independent Gaussian pairing
// oracles cross-check it, and disk-kernel variants give the continuum limit.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gradsq/combinatorics.hpp"
#include "gradsq/continuum.hpp"
#include "gradsq/greens.hpp"

namespace gradsq {

inline constexpr int kKpointBudget = 7;
inline constexpr int kFeynmanBudget = 6;
inline constexpr int kSubsetBudget = 5;

struct CorrelationTerm {
  std::vector<std::vector<int>> blocks;
  double value = 0.0;
};

// value always equals the sum of decomposition entries
struct CorrelationResult {
  double value = 0.0;
  std::vector<CorrelationTerm> decomposition;
  std::string method;
  std::string domain;
  double eps = 0.0;  // 0 marks a continuum-limit value

  nlohmann::json to_json() const {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : decomposition)
      terms.push_back({{"blocks", t.blocks}, {"value", t.value}});
    return {{"value", value},
            {"method", method},
            {"domain", domain},
            {"eps", eps},
            {"decomposition", terms}};
  }
};

namespace detail {

// ker[p * k + q] holds the d x d mixed-difference matrix between points p, q
using PairKernels = std::vector<std::vector<double>>;

template <class GreenLike>
PairKernels lattice_kernels(const GreenLike& g, const std::vector<Pt>& pts,
                            int d) {
  const int k = static_cast<int>(pts.size());
  PairKernels ker(std::size_t(k) * k);
  for (int p = 0; p < k; ++p)
    for (int q = 0; q < k; ++q) {
      std::vector<double> m(std::size_t(d) * d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          m[std::size_t(i) * d + j] = double_diff(g, pts[p], pts[q], i, j);
      ker[std::size_t(p) * k + q] = std::move(m);
    }
  return ker;
}

// disk kernels; the diagonal is never touched because cycles have no fixed
// points and continuum points are pairwise distinct
inline PairKernels disk_kernels(const std::vector<RPt>& pts) {
  const int k = static_cast<int>(pts.size());
  const int d = 2;
  PairKernels ker(std::size_t(k) * k);
  for (int p = 0; p < k; ++p)
    for (int q = 0; q < k; ++q) {
      if (p == q) continue;
      std::vector<double> m(std::size_t(d) * d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          m[std::size_t(i) * d + j] = green_disk_dd(pts[p], pts[q], i, j);
      ker[std::size_t(p) * k + q] = std::move(m);
    }
  return ker;
}

// sum over fixed-point-free full cycles sigma of the block and over all
// direction maps eta of prod_j K(j, sigma(j), eta(j), eta(sigma(j)))
inline double block_cycle_sum(const std::vector<int>& block, int k, int d,
                              const PairKernels& ker) {
  const int m = static_cast<int>(block.size());
  if (m < 2) return 0.0;
  KahanSum acc;
  FullCycleStream cycles(block);
  CyclicPerm cyc;
  std::vector<int> succ(m);
  while (cycles.next(cyc)) {
    // successor in block-position space
    for (int t = 0; t < m; ++t) {
      int e = cyc.order[t];
      int s = cyc.order[(t + 1) % m];
      int pe = 0, ps = 0;
      for (int u = 0; u < m; ++u) {
        if (block[u] == e) pe = u;
        if (block[u] == s) ps = u;
      }
      succ[pe] = ps;
    }
    DirectionStream dirs(m, d);
    DirectionAssignment da;
    while (dirs.next(da)) {
      double prod = 1.0;
      for (int t = 0; t < m; ++t) {
        int a = block[t], b = block[succ[t]];
        prod *= ker[std::size_t(a) * k + b]
                   [std::size_t(da.values[t]) * d + da.values[succ[t]]];
      }
      acc.add(prod);
    }
  }
  return acc.value();
}

inline CorrelationResult moment_from_kernels(int k, int d,
                                             const PairKernels& ker,
                                             std::string method) {
  CorrelationResult res;
  res.method = std::move(method);
  KahanSum total;
  PartitionStream parts(k, 2);
  Partition part;
  while (parts.next(part)) {
    double term = 1.0;
    for (const auto& block : part.blocks)
      term *= std::pow(2.0, int(block.size()) - 1) *
              block_cycle_sum(block, k, d, ker);
    res.decomposition.push_back({part.blocks, term});
    total.add(term);
  }
  res.value = total.value();
  return res;
}

inline CorrelationResult cumulant_from_kernels(int l, int d,
                                               const PairKernels& ker,
                                               std::string method) {
  std::vector<int> all(l);
  for (int t = 0; t < l; ++t) all[t] = t;
  CorrelationResult res;
  res.method = std::move(method);
  res.value = std::pow(2.0, l - 1) * block_cycle_sum(all, l, d, ker);
  res.decomposition.push_back({{all}, res.value});
  return res;
}

inline void check_points_nonempty(std::size_t k) {
  if (k == 0) throw ConfigError("correlation requests need at least one point");
}

inline void check_distinct(const std::vector<RPt>& pts, int d) {
  for (std::size_t p = 0; p < pts.size(); ++p)
    for (std::size_t q = p + 1; q < pts.size(); ++q) {
      bool same = true;
      for (int a = 0; a < d; ++a)
        if (pts[p][a] != pts[q][a]) same = false;
      if (same)
        throw CoincidentPoints("continuum points must be pairwise distinct");
    }
}

}  // namespace detail

// ---- exact lattice evaluators --------------------------------------------------

// E[prod_j Phi(x_j)]: sum over singleton-free partitions, per block a factor
// 2^{|B|-1} times the cycle/direction sum
template <class GreenLike>
CorrelationResult kpoint_exact(const GreenLike& g, const std::vector<Pt>& pts,
                               int budget = kKpointBudget) {
  detail::check_points_nonempty(pts.size());
  const int k = static_cast<int>(pts.size());
  if (k > budget)
    throw ComplexityBudgetExceeded("kpoint budget is " +
                                   std::to_string(budget) + " points");
  const int d = g.domain().d();
  auto ker = detail::lattice_kernels(g, pts, d);
  auto res = detail::moment_from_kernels(k, d, ker, "kpoint_exact");
  res.domain = shape_name(g.domain().spec.shape);
  res.eps = g.domain().eps;
  return res;
}

// joint cumulant kappa(Phi(x_1), ..., Phi(x_l)): the single-block formula
template <class GreenLike>
CorrelationResult joint_cumulant_exact(const GreenLike& g,
                                       const std::vector<Pt>& pts,
                                       int budget = kKpointBudget) {
  detail::check_points_nonempty(pts.size());
  const int l = static_cast<int>(pts.size());
  if (l > budget)
    throw ComplexityBudgetExceeded("cumulant budget is " +
                                   std::to_string(budget) + " points");
  const int d = g.domain().d();
  auto ker = detail::lattice_kernels(g, pts, d);
  auto res = detail::cumulant_from_kernels(l, d, ker, "joint_cumulant_exact");
  res.domain = shape_name(g.domain().spec.shape);
  res.eps = g.domain().eps;
  return res;
}

// ---- pairing oracles -------------------------------------------------------------

// Gaussian pairing expansion of E[prod_j :(grad_{i_j} Gamma)(x_j)^2:]:
// 2k slots (two per point), perfect matchings with intra-point pairs
// forbidden, summed over direction tuples
template <class GreenLike>
double kpoint_oracle_feynman(const GreenLike& g, const std::vector<Pt>& pts,
                             int budget = kFeynmanBudget) {
  detail::check_points_nonempty(pts.size());
  const int k = static_cast<int>(pts.size());
  if (k > budget)
    throw ComplexityBudgetExceeded("feynman oracle budget is " +
                                   std::to_string(budget) + " points");
  const int d = g.domain().d();
  auto ker = detail::lattice_kernels(g, pts, d);
  KahanSum total;
  DirectionStream dirs(k, d);
  DirectionAssignment da;
  while (dirs.next(da)) {
    MatchingStream match(2 * k,
                         [](int a, int b) { return a / 2 == b / 2; });
    Matching mt;
    while (match.next(mt)) {
      double prod = 1.0;
      for (auto [a, b] : mt.pairs) {
        int p = a / 2, q = b / 2;
        prod *= ker[std::size_t(p) * k + q]
                   [std::size_t(da.values[p]) * d + da.values[q]];
      }
      total.add(prod);
    }
  }
  return total.value();
}

// inclusion-exclusion over subsets with unrestricted pairings:
// E[prod (X_j^2 - s_j^2)] = sum_S prod_{j not in S}(-s_j^2) E[prod_S X_j^2]
template <class GreenLike>
double kpoint_oracle_subset(const GreenLike& g, const std::vector<Pt>& pts,
                            int budget = kSubsetBudget) {
  detail::check_points_nonempty(pts.size());
  const int k = static_cast<int>(pts.size());
  if (k > budget)
    throw ComplexityBudgetExceeded("subset oracle budget is " +
                                   std::to_string(budget) + " points");
  const int d = g.domain().d();
  auto ker = detail::lattice_kernels(g, pts, d);
  KahanSum total;
  DirectionStream dirs(k, d);
  DirectionAssignment da;
  std::vector<int> sel;
  while (dirs.next(da)) {
    for (std::uint32_t mask = 0; mask < (1u << k); ++mask) {
      double coeff = 1.0;
      sel.clear();
      for (int j = 0; j < k; ++j) {
        if (mask >> j & 1u) {
          sel.push_back(j);
        } else {
          coeff *= -ker[std::size_t(j) * k + j]
                       [std::size_t(da.values[j]) * d + da.values[j]];
        }
      }
      KahanSum raw;  // E[prod_{j in S} X_j^2] by Isserlis
      MatchingStream match(2 * static_cast<int>(sel.size()), {});
      Matching mt;
      while (match.next(mt)) {
        double prod = 1.0;
        for (auto [a, b] : mt.pairs) {
          int p = sel[a / 2], q = sel[b / 2];
          prod *= ker[std::size_t(p) * k + q]
                     [std::size_t(da.values[p]) * d + da.values[q]];
        }
        raw.add(prod);
      }
      total.add(coeff * raw.value());
    }
  }
  return total.value();
}

// ---- continuum limits --------------------------------------------------------------

// same partition sum with the disk Hessian kernel; the points must be
// pairwise distinct interior points of the unit disk
inline CorrelationResult kpoint_limit_continuum(const std::vector<RPt>& pts,
                                                int budget = kKpointBudget) {
  detail::check_points_nonempty(pts.size());
  const int k = static_cast<int>(pts.size());
  if (k > budget)
    throw ComplexityBudgetExceeded("kpoint budget is " +
                                   std::to_string(budget) + " points");
  detail::check_distinct(pts, 2);
  auto ker = detail::disk_kernels(pts);
  auto res = detail::moment_from_kernels(k, 2, ker, "kpoint_limit_continuum");
  res.domain = "unit_disk";
  return res;
}

inline CorrelationResult cumulant_limit_continuum(const std::vector<RPt>& pts,
                                                  int budget = kKpointBudget) {
  detail::check_points_nonempty(pts.size());
  const int l = static_cast<int>(pts.size());
  if (l > budget)
    throw ComplexityBudgetExceeded("cumulant budget is " +
                                   std::to_string(budget) + " points");
  detail::check_distinct(pts, 2);
  auto ker = detail::disk_kernels(pts);
  auto res = detail::cumulant_from_kernels(l, 2, ker, "cumulant_limit_continuum");
  res.domain = "unit_disk";
  return res;
}

// ---- height-one cumulant correspondence -----------------------------------------

// kappa_l of the height-one field from the limiting gradient-squared
// cumulant: -2 (C/2)^l kappa with C = 2/pi - 4/pi^2
inline double sandpile_cumulant_map(double kappa_phi_limit, int l) {
  if (l < 2) throw ConfigError("height-one cumulant map needs l >= 2");
  const double c = 2.0 / detail::kPi - 4.0 / (detail::kPi * detail::kPi);
  return -2.0 * std::pow(0.5 * c, l) * kappa_phi_limit;
}

// ---- request plumbing -------------------------------------------------------------

struct CorrelationRequest {
  enum class Mode { moment, cumulant };
  enum class Side { discrete, continuum_limit };

  Mode mode = Mode::moment;
  Side side = Side::discrete;
  int d = 2;
  double eps = 0.0;  // floor mapping scale for discrete requests
  DomainSpec domain = DomainSpec::make_unit_square(2);
  std::vector<RPt> points;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["mode"] = mode == Mode::moment ? "moment" : "cumulant";
    j["side"] = side == Side::discrete ? "discrete" : "continuum_limit";
    j["d"] = d;
    if (side == Side::discrete) {
      j["eps"] = eps;
      j["domain"] = domain.to_json();
    }
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : points) {
      std::vector<double> c(p.begin(), p.begin() + d);
      arr.push_back(c);
    }
    j["points"] = arr;
    return j;
  }

  static CorrelationRequest from_json(const nlohmann::json& j) {
    CorrelationRequest r;
    std::string m = j.at("mode").get<std::string>();
    if (m == "moment")
      r.mode = Mode::moment;
    else if (m == "cumulant")
      r.mode = Mode::cumulant;
    else
      throw ConfigError("mode must be moment or cumulant");
    std::string s = j.at("side").get<std::string>();
    if (s == "discrete")
      r.side = Side::discrete;
    else if (s == "continuum_limit")
      r.side = Side::continuum_limit;
    else
      throw ConfigError("side must be discrete or continuum_limit");
    r.d = j.at("d").get<int>();
    if (r.d < 2 || r.d > kMaxDim)
      throw ConfigError("correlation request dimension out of range");
    if (r.side == Side::discrete) {
      r.eps = j.at("eps").get<double>();
      if (!(r.eps > 0)) throw ConfigError("discrete requests need eps > 0");
      if (j.contains("domain"))
        r.domain = DomainSpec::from_json(j.at("domain"));
      else
        r.domain = DomainSpec::make_unit_square(r.d);
      if (r.domain.d != r.d)
        throw ConfigError("domain dimension must match d");
    }
    for (const auto& pj : j.at("points")) {
      auto c = pj.get<std::vector<double>>();
      if (static_cast<int>(c.size()) != r.d)
        throw ConfigError("point arity must match d");
      RPt p{};
      for (int a = 0; a < r.d; ++a) p[a] = c[a];
      r.points.push_back(p);
    }
    detail::check_points_nonempty(r.points.size());
    return r;
  }
};

// discrete requests floor continuum coordinates onto the eps-lattice
inline CorrelationResult evaluate(const CorrelationRequest& r) {
  if (r.side == CorrelationRequest::Side::continuum_limit)
    return r.mode == CorrelationRequest::Mode::moment
               ? kpoint_limit_continuum(r.points)
               : cumulant_limit_continuum(r.points);
  auto dom = discretize(r.domain, r.eps);
  GreenTable g(dom);
  std::vector<Pt> pts;
  for (const auto& p : r.points) pts.push_back(floor_point(p, r.eps, r.d));
  return r.mode == CorrelationRequest::Mode::moment
             ? kpoint_exact(g, pts)
             : joint_cumulant_exact(g, pts);
}

}  // namespace gradsq

#endif  // GRADSQ_CORRELATION_HPP
