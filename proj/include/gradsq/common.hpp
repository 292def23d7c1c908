#ifndef GRADSQ_COMMON_HPP
#define GRADSQ_COMMON_HPP

// Shared basics: lattice point type, typed errors, compensated summation,
// a counter-based normal generator, small fitting helpers.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gradsq {

inline constexpr int kMaxDim = 8;

namespace detail {
inline constexpr double kPi = 3.14159265358979323846;
}

// Integer lattice point. Components beyond the active dimension stay zero,
// so equality and hashing work without carrying d.
using Pt = std::array<int, kMaxDim>;
// Continuum point, same convention.
using RPt = std::array<double, kMaxDim>;

inline Pt make_pt(std::initializer_list<int> xs) {
  Pt p{};
  int i = 0;
  for (int x : xs) p[i++] = x;
  return p;
}

inline RPt make_rpt(std::initializer_list<double> xs) {
  RPt p{};
  int i = 0;
  for (double x : xs) p[i++] = x;
  return p;
}

inline Pt pt_shift(Pt p, int axis, int delta) {
  p[axis] += delta;
  return p;
}

struct PtHash {
  std::size_t operator()(const Pt& p) const {
    std::uint64_t h = 14695981039346656037ull;
    for (int i = 0; i < kMaxDim; ++i) {
      h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(p[i]));
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

// ---- typed errors ----------------------------------------------------------

#define GRADSQ_ERROR(Name)                                   \
  struct Name : std::runtime_error {                         \
    explicit Name(const std::string& what_arg)               \
        : std::runtime_error(std::string(#Name ": ") + what_arg) {} \
  }

GRADSQ_ERROR(EmptyDomain);
GRADSQ_ERROR(DimensionUnsupported);
GRADSQ_ERROR(PointOutsideDomain);
GRADSQ_ERROR(InvalidDomain);
GRADSQ_ERROR(SingularSystem);
GRADSQ_ERROR(FactorizationFailed);
GRADSQ_ERROR(QuadratureNotConverged);
GRADSQ_ERROR(TailBoundUnavailable);
GRADSQ_ERROR(OddSize);
GRADSQ_ERROR(ComplexityBudgetExceeded);
GRADSQ_ERROR(CoincidentPoints);
GRADSQ_ERROR(OutsideDisk);
GRADSQ_ERROR(OutsideDomain);
GRADSQ_ERROR(SupportTooClose);
GRADSQ_ERROR(InsufficientReplicates);
GRADSQ_ERROR(CutoffTailTooLarge);
GRADSQ_ERROR(ExtrapolationUnstable);
GRADSQ_ERROR(ConfigError);

#undef GRADSQ_ERROR

// ---- compensated summation -------------------------------------------------

// Neumaier variant: robust when terms exceed the running sum.
class KahanSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// ---- counter-based RNG -----------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Pure function of (seed, stream, counter); no state, so replicates and
// vertices can be evaluated in any order or thread count with identical bits.
inline std::uint64_t counter_bits(std::uint64_t seed, std::uint64_t stream,
                                  std::uint64_t counter) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ (stream + 0x9E3779B97F4A7C15ull));
  h = splitmix64(h ^ (counter + 0xD1B54A32D192ED03ull));
  return h;
}

// uniform in (0,1): top 53 bits, offset keeps it away from 0
inline double counter_uniform(std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t counter) {
  return (counter_bits(seed, stream, counter) >> 11) * 0x1p-53 + 0x1p-54;
}

// standard normal via Box-Muller on counters (2k, 2k+1)
inline double counter_normal(std::uint64_t seed, std::uint64_t stream,
                             std::uint64_t k) {
  double u1 = counter_uniform(seed, stream, 2 * k);
  double u2 = counter_uniform(seed, stream, 2 * k + 1);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

// ---- small numerics --------------------------------------------------------

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  // max |y - (intercept + slope x)| over the input
  double max_residual = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x,
                        const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw SingularSystem("fit_line needs >= 2 points");
  double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  double det = n * sxx - sx * sx;
  if (det == 0.0) throw SingularSystem("fit_line: degenerate abscissae");
  LineFit f;
  f.slope = (n * sxy - sx * sy) / det;
  f.intercept = (sy * sxx - sx * sxy) / det;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double r = std::abs(y[i] - (f.intercept + f.slope * x[i]));
    if (r > f.max_residual) f.max_residual = r;
  }
  return f;
}

// one-parameter proportional fit y ~ c x, least squares
inline double fit_proportional(const std::vector<double>& x,
                               const std::vector<double>& y) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += x[i] * y[i];
    den += x[i] * x[i];
  }
  if (den == 0.0) throw SingularSystem("fit_proportional: zero design");
  return num / den;
}

// ---- parallel loop ---------------------------------------------------------

// Runs fn(begin, end) on contiguous chunks. With threads <= 1 the call is a
// plain loop on the calling thread; chunk boundaries depend only on n and
// the thread count.
inline void parallel_for(std::int64_t n, int threads,
                         const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (threads <= 1 || n < 2) {
    fn(0, n);
    return;
  }
  int t = std::min<std::int64_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(t);
  std::int64_t chunk = (n + t - 1) / t;
  for (int i = 0; i < t; ++i) {
    std::int64_t lo = i * chunk;
    std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(fn, lo, hi);
  }
  for (auto& th : pool) th.join();
}

// ---- formatting / hashing --------------------------------------------------

// shortest-roundtrip style fixed formatting used in CSV and JSON output
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline constexpr const char* kCodeVersion = "gradsq-1.0.0";

}  // namespace gradsq

#endif  // GRADSQ_COMMON_HPP
