#ifndef GRADSQ_SAMPLER_HPP
#define GRADSQ_SAMPLER_HPP

// Zero-boundary DGFF sampling through a cached Cholesky factor driven by
// counter-based normals, the Wick-centered gradient-squared field, pairings
// with test functions in the integral and sum senses, and k-statistic
// cumulant estimates with delete-one jackknife standard errors.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "gradsq/continuum.hpp"
#include "gradsq/greens.hpp"

namespace gradsq {

namespace detail {

// splitmix64 finalizer; the keyed counters below rely on its avalanche
inline std::uint64_t mix_bits(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t replicate) {
  return mix_bits(seed + (replicate + 1) * kGolden);
}

// slot n of the keyed stream, uniform on the open interval (0,1)
inline double counter_uniform(std::uint64_t key, std::uint64_t n) {
  std::uint64_t bits = mix_bits(key + (n + 1) * kGolden);
  return (double(bits >> 11) + 0.5) * 0x1.0p-53;
}

// standard normal; draw i consumes slots 2i and 2i+1
inline double counter_normal(std::uint64_t key, std::uint64_t i) {
  double u1 = counter_uniform(key, 2 * i);
  double u2 = counter_uniform(key, 2 * i + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

}  // namespace detail

struct FieldSample {
  LatticeDomain domain;
  std::vector<double> gamma;  // zero outside the domain by convention
  std::vector<double> phi;    // empty until phi_field fills it
};

// per-vertex sum_i of the diagonal gradient double difference; subtracting
// it recenters the squared gradients exactly
template <class GreenLike>
std::vector<double> wick_diagonal(const GreenLike& g) {
  const LatticeDomain& dom = g.domain();
  std::vector<double> diag(dom.size(), 0.0);
  for (int v = 0; v < dom.size(); ++v)
    for (int i = 0; i < dom.d(); ++i)
      diag[v] += double_diff(g, dom.vertices[v], dom.vertices[v], i, i);
  return diag;
}

// caches the Cholesky factor, forward-neighbor table, and Wick diagonal so
// replicate loops touch no hash maps
class DgffSampler {
 public:
  explicit DgffSampler(const GreenTable& g) : dom_(g.domain()) {
    Eigen::LLT<Eigen::MatrixXd> llt(g.matrix());
    if (llt.info() != Eigen::Success)
      throw FactorizationFailed("green matrix admits no Cholesky factor");
    chol_ = llt.matrixL();
    const int n = dom_.size(), d = dom_.d();
    nbr_.assign(std::size_t(n) * d, -1);
    for (int v = 0; v < n; ++v)
      for (int i = 0; i < d; ++i)
        nbr_[std::size_t(v) * d + i] =
            dom_.index_of(pt_shift(dom_.vertices[v], i, +1));
    diag_ = wick_diagonal(g);
  }

  const LatticeDomain& domain() const { return dom_; }

  // gamma = L z with z the (seed, replicate) counter stream in vertex order
  std::vector<double> gamma(std::uint64_t seed, std::uint64_t replicate) const {
    const int n = dom_.size();
    Eigen::VectorXd z(n);
    const std::uint64_t key = detail::stream_key(seed, replicate);
    for (int i = 0; i < n; ++i) z[i] = detail::counter_normal(key, i);
    Eigen::VectorXd out = chol_ * z;
    return {out.data(), out.data() + n};
  }

  // phi[v] = sum_i ((gamma(v+e_i) - gamma(v))^2 - dd_ii(v,v)), gamma 0 outside
  std::vector<double> phi(const std::vector<double>& gam) const {
    const int n = dom_.size(), d = dom_.d();
    std::vector<double> out(n);
    for (int v = 0; v < n; ++v) {
      double s = -diag_[v];
      for (int i = 0; i < d; ++i) {
        int w = nbr_[std::size_t(v) * d + i];
        double grad = (w >= 0 ? gam[w] : 0.0) - gam[v];
        s += grad * grad;
      }
      out[v] = s;
    }
    return out;
  }

  FieldSample sample(std::uint64_t seed, std::uint64_t replicate = 0) const {
    FieldSample s{dom_, gamma(seed, replicate), {}};
    s.phi = phi(s.gamma);
    return s;
  }

 private:
  LatticeDomain dom_;
  Eigen::MatrixXd chol_;
  std::vector<int> nbr_;
  std::vector<double> diag_;
};

inline FieldSample sample_dgff(const GreenTable& g, std::uint64_t seed) {
  DgffSampler s(g);
  return FieldSample{g.domain(), s.gamma(seed, 0), {}};
}

inline void phi_field(FieldSample& s, const GreenTable& g) {
  const LatticeDomain& dom = g.domain();
  if (s.gamma.size() != std::size_t(dom.size()))
    throw ConfigError("sample and green table cover different domains");
  auto diag = wick_diagonal(g);
  const int d = dom.d();
  s.phi.assign(dom.size(), 0.0);
  for (int v = 0; v < dom.size(); ++v) {
    double acc = -diag[v];
    for (int i = 0; i < d; ++i) {
      int w = dom.index_of(pt_shift(dom.vertices[v], i, +1));
      double grad = (w >= 0 ? s.gamma[w] : 0.0) - s.gamma[v];
      acc += grad * grad;
    }
    s.phi[v] = acc;
  }
}

// ---- test-function pairing -------------------------------------------------------

enum class PairMode { integral, sum };

// weights w such that the pairing is sum_v w[v] phi[v]; integral mode uses a
// 4^d-point Gauss rule per lattice cell eps*(v + [0,1]^d)
inline std::vector<double> pairing_weights(const LatticeDomain& dom,
                                           const TestFunction& f,
                                           PairMode mode) {
  const int d = dom.d();
  const double eps = dom.eps;
  if (!f.support_inside(dom.spec, eps * std::sqrt(double(d))))
    throw SupportTooClose(
        "test function support needs a margin above eps*sqrt(d)");
  std::vector<double> w(dom.size(), 0.0);
  if (mode == PairMode::sum) {
    for (int v = 0; v < dom.size(); ++v) {
      RPt x{};
      for (int a = 0; a < d; ++a) x[a] = eps * dom.vertices[v][a];
      w[v] = f(x);
    }
    return w;
  }
  static constexpr double kNode[4] = {0.069431844202973714, 0.33000947820757187,
                                      0.66999052179242813, 0.93056815579702629};
  static constexpr double kWeight[4] = {0.17392742256872692,
                                        0.32607257743127307,
                                        0.32607257743127307,
                                        0.17392742256872692};
  const double reach = f.support_radius() + eps * std::sqrt(double(d));
  double cell = 1.0;
  for (int a = 0; a < d; ++a) cell *= eps;
  std::array<int, kMaxDim> idx{};
  for (int v = 0; v < dom.size(); ++v) {
    bool near = true;  // skip cells that cannot meet the support
    for (int a = 0; a < d; ++a)
      if (std::abs(eps * dom.vertices[v][a] - f.center[a]) > reach) near = false;
    if (!near) continue;
    idx.fill(0);
    KahanSum acc;
    for (;;) {
      double fac = 1.0;
      RPt x{};
      for (int a = 0; a < d; ++a) {
        fac *= kWeight[idx[a]];
        x[a] = eps * (dom.vertices[v][a] + kNode[idx[a]]);
      }
      acc.add(fac * f(x));
      int t = d - 1;
      while (t >= 0 && ++idx[t] == 4) idx[t--] = 0;
      if (t < 0) break;
    }
    w[v] = cell * acc.value();
  }
  return w;
}

inline double pair_with_test_function(const FieldSample& s,
                                      const TestFunction& f, PairMode mode) {
  if (s.phi.size() != std::size_t(s.domain.size()))
    throw ConfigError("pairing needs the phi field filled");
  auto w = pairing_weights(s.domain, f, mode);
  KahanSum acc;
  for (int v = 0; v < s.domain.size(); ++v) acc.add(w[v] * s.phi[v]);
  return acc.value();
}

// ---- cumulant estimation ----------------------------------------------------------

namespace detail {

// unbiased k-statistics from raw power sums s[r] = sum x^r over n samples
inline double kstat_power_sums(const std::array<double, 5>& s, double n,
                               int order) {
  const double s1 = s[1], s2 = s[2], s3 = s[3], s4 = s[4];
  switch (order) {
    case 1:
      return s1 / n;
    case 2:
      return (n * s2 - s1 * s1) / (n * (n - 1));
    case 3:
      return (2 * s1 * s1 * s1 - 3 * n * s1 * s2 + n * n * s3) /
             (n * (n - 1) * (n - 2));
    case 4:
      return (-6 * s1 * s1 * s1 * s1 + 12 * n * s1 * s1 * s2 -
              3 * n * (n - 1) * s2 * s2 - 4 * n * (n + 1) * s1 * s3 +
              n * n * (n + 1) * s4) /
             (n * (n - 1) * (n - 2) * (n - 3));
  }
  throw ConfigError("k-statistics cover orders 1 through 4");
}

}  // namespace detail

struct KstatEstimate {
  double value = 0.0;
  double std_error = 0.0;  // delete-one jackknife
};

inline KstatEstimate kstat_estimate(const std::vector<double>& xs, int order) {
  const long n = static_cast<long>(xs.size());
  if (order < 1 || order > 4)
    throw ConfigError("k-statistics cover orders 1 through 4");
  if (n < 5) throw InsufficientReplicates("k-statistics need n >= 5");
  KahanSum msum;
  for (double x : xs) msum.add(x);
  const double mean = msum.value() / double(n);
  // orders >= 2 are shift invariant; centering keeps the power sums small
  std::array<KahanSum, 5> acc;
  std::vector<double> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double y = xs[i] - mean, p = 1.0;
    ys[i] = y;
    for (int r = 1; r <= 4; ++r) {
      p *= y;
      acc[r].add(p);
    }
  }
  std::array<double, 5> s{};
  for (int r = 1; r <= 4; ++r) s[r] = acc[r].value();
  KstatEstimate est;
  est.value = detail::kstat_power_sums(s, double(n), order) +
              (order == 1 ? mean : 0.0);
  std::vector<double> jack(xs.size());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    std::array<double, 5> si = s;
    double p = 1.0;
    for (int r = 1; r <= 4; ++r) {
      p *= ys[i];
      si[r] -= p;
    }
    jack[i] = detail::kstat_power_sums(si, double(n - 1), order);
  }
  KahanSum jsum;
  for (double j : jack) jsum.add(j);
  const double jmean = jsum.value() / double(n);
  KahanSum jvar;
  for (double j : jack) jvar.add((j - jmean) * (j - jmean));
  est.std_error = std::sqrt(jvar.value() * double(n - 1) / double(n));
  return est;
}

struct McEstimate {
  std::string statistic;
  double value = 0.0;
  double std_error = 0.0;
  int replicates = 0;
  std::uint64_t seed = 0;
};

struct McConfig {
  DomainSpec domain = DomainSpec::make_unit_square(2);
  double eps = 0.125;
  std::vector<TestFunction> fs;
  int replicates = 0;
  std::uint64_t seed = 1;
  int max_order = 4;
  PairMode mode = PairMode::sum;
  std::string dump_csv;  // per-replicate pairings written when nonempty
};

// k-statistic estimates of the cumulants of <Phi, f> for each test function
inline std::vector<McEstimate> mc_cumulants(const McConfig& cfg) {
  if (cfg.replicates < 100)
    throw InsufficientReplicates("cumulant estimation needs >= 100 replicates");
  if (cfg.fs.empty()) throw ConfigError("no test functions configured");
  if (cfg.max_order < 1 || cfg.max_order > 4)
    throw ConfigError("k-statistics cover orders 1 through 4");
  auto dom = discretize(cfg.domain, cfg.eps);
  GreenTable g(dom);
  DgffSampler sampler(g);
  std::vector<std::vector<double>> weights;
  for (const auto& f : cfg.fs)
    weights.push_back(pairing_weights(dom, f, cfg.mode));
  const std::size_t nf = cfg.fs.size();
  std::vector<std::vector<double>> vals(nf);
  for (auto& v : vals) v.reserve(cfg.replicates);
  for (int r = 0; r < cfg.replicates; ++r) {
    auto gam = sampler.gamma(cfg.seed, std::uint64_t(r));
    auto phi = sampler.phi(gam);
    for (std::size_t q = 0; q < nf; ++q) {
      KahanSum acc;
      for (int v = 0; v < dom.size(); ++v) acc.add(weights[q][v] * phi[v]);
      vals[q].push_back(acc.value());
    }
  }
  if (!cfg.dump_csv.empty()) {
    std::ofstream out(cfg.dump_csv);
    if (!out) throw ConfigError("cannot open dump path " + cfg.dump_csv);
    out << "replicate,f_id,value\n";
    char buf[64];
    for (std::size_t q = 0; q < nf; ++q)
      for (int r = 0; r < cfg.replicates; ++r) {
        std::snprintf(buf, sizeof buf, "%d,%zu,%.17g\n", r, q, vals[q][r]);
        out << buf;
      }
  }
  std::vector<McEstimate> out;
  for (std::size_t q = 0; q < nf; ++q)
    for (int order = 1; order <= cfg.max_order; ++order) {
      auto est = kstat_estimate(vals[q], order);
      McEstimate e;
      e.statistic = "k" + std::to_string(order) + ":f" + std::to_string(q);
      e.value = est.value;
      e.std_error = est.std_error;
      e.replicates = cfg.replicates;
      e.seed = cfg.seed;
      out.push_back(std::move(e));
    }
  return out;
}

}  // namespace gradsq

#endif  // GRADSQ_SAMPLER_HPP
