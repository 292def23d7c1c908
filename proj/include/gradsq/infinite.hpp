#ifndef GRADSQ_INFINITE_HPP
#define GRADSQ_INFINITE_HPP

// Infinite-volume grad-grad kernel of the normalized lattice Green's
// function, evaluated two independent ways:
//   fourier: the first momentum coordinate is integrated in closed form
//     (geometric kernel rho^|n| / sqrt(A^2-1)), the remaining d-1 coordinates
//     by a midpoint grid; rows of offsets come out of one inverse DFT.
//   bigbox: zero-boundary Green columns on [-N,N]^d via the sine transform
//     diagonalization, extrapolated in the box size.
// The kernel is indexed by the offset u = w - v; mirrored offsets use the
// exact symmetry dd(u,i,j) = dd(-u,j,i).
// FFT plan creation is not thread-safe; call these from one thread.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <vector>

#include "gradsq/common.hpp"

namespace gradsq {

namespace detail {

// numerator expansion of (e^{i th_j} - 1)(e^{-i th_i} - 1): sign and lattice
// shift per term; the shift adds to the offset inside the transforms
struct NumTerm {
  double sign;
  int shift_i;  // coefficient of -e_i
  int shift_j;  // coefficient of +e_j
};
inline constexpr NumTerm kNumTerms[4] = {
    {+1.0, 1, 1}, {-1.0, 0, 1}, {-1.0, 1, 0}, {+1.0, 0, 0}};

inline int term_shift(const NumTerm& t, int axis, int i, int j) {
  int s = 0;
  if (axis == j) s += t.shift_j;
  if (axis == i) s -= t.shift_i;
  return s;
}

// midpoint grid node m of M over [-pi, pi)
inline double midpoint_theta(int m, int M) {
  return -kPi + (m + 0.5) * (2.0 * kPi / M);
}

struct FftwComplexBuffer {
  explicit FftwComplexBuffer(std::size_t n)
      : p(static_cast<std::complex<double>*>(fftw_malloc(n * sizeof(std::complex<double>)))),
        size(n) {}
  ~FftwComplexBuffer() { fftw_free(p); }
  FftwComplexBuffer(const FftwComplexBuffer&) = delete;
  FftwComplexBuffer& operator=(const FftwComplexBuffer&) = delete;
  std::complex<double>* p;
  std::size_t size;
};

}  // namespace detail

// ---- scalar fourier evaluation ---------------------------------------------

struct FourierOptions {
  double tol = 1e-9;   // successive-refinement target on the midpoint grid
  int min_m = 64;
  int max_m = 1 << 17;
  bool richardson = true;  // second-order extrapolation across M and 2M
};

// single midpoint-grid pass at resolution M (exact in the first coordinate)
inline double infinite_dd_fourier_raw(const Pt& u, int i, int j, int d, int M) {
  if (d < 2) throw DimensionUnsupported("infinite kernel needs d >= 2");
  const int rank = d - 1;  // grid axes are coordinates 1..d-1
  std::vector<int> idx(rank, 0);
  KahanSum acc;
  for (;;) {
    double A = static_cast<double>(d);
    for (int a = 0; a < rank; ++a) A -= std::cos(detail::midpoint_theta(idx[a], M));
    double s = std::sqrt(A * A - 1.0);
    double rho = A - s;
    double val = 0.0;
    for (const auto& t : detail::kNumTerms) {
      int n0 = u[0] + detail::term_shift(t, 0, i, j);
      double phase = 0.0;
      for (int a = 0; a < rank; ++a)
        phase += detail::midpoint_theta(idx[a], M) *
                 (u[a + 1] + detail::term_shift(t, a + 1, i, j));
      val += t.sign * std::pow(rho, std::abs(n0)) * std::cos(phase);
    }
    acc.add(val * d / s);
    int a = rank - 1;
    for (; a >= 0; --a) {
      if (++idx[a] < M) break;
      idx[a] = 0;
    }
    if (a < 0) break;
  }
  double cells = std::pow(static_cast<double>(M), rank);
  return acc.value() / cells;
}

inline double infinite_dd_fourier(const Pt& u, int i, int j, int d,
                                  FourierOptions opt = {}) {
  int M = opt.min_m;
  double prev = infinite_dd_fourier_raw(u, i, j, d, M);
  while (2 * M <= opt.max_m) {
    M *= 2;
    double cur = infinite_dd_fourier_raw(u, i, j, d, M);
    if (std::abs(cur - prev) < opt.tol)
      return opt.richardson ? (4.0 * cur - prev) / 3.0 : cur;
    prev = cur;
  }
  throw QuadratureNotConverged("fourier grid refinement hit max_m");
}

// ---- bigbox evaluation ------------------------------------------------------

struct BigboxOptions {
  int box_n = 0;           // half-width N; 0 picks 4 * |u|_inf + 16
  bool richardson = true;  // extrapolate boxes N, 2N, 4N at exponents d, d+1
};

namespace detail {

// Green column of I - A/(2d) on the box [-N,N]^d with zero boundary,
// computed by one rank-d DST-I on the analytic sine coefficients of delta_y.
class BoxGreenColumn {
 public:
  BoxGreenColumn(int d, int N, const Pt& y) : d_(d), L_(2 * N + 1), N_(N) {
    std::size_t total = 1;
    for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(L_);
    vals_.resize(total);
    std::vector<std::vector<double>> sines(d, std::vector<double>(L_));
    for (int a = 0; a < d; ++a)
      for (int m = 0; m < L_; ++m)
        sines[a][m] =
            std::sin(kPi * (m + 1) * (y[a] + N + 1) / double(L_ + 1));
    std::vector<int> idx(d, 0);
    for (std::size_t f = 0; f < total; ++f) {
      double lam = 1.0, num = 1.0;
      double csum = 0.0;
      for (int a = 0; a < d; ++a) {
        csum += std::cos(kPi * (idx[a] + 1) / double(L_ + 1));
        num *= sines[a][idx[a]];
      }
      lam = 1.0 - csum / d;
      vals_[f] = num / lam;
      for (int a = d - 1; a >= 0; --a) {
        if (++idx[a] < L_) break;
        idx[a] = 0;
      }
    }
    std::vector<int> ns(d, L_);
    std::vector<fftw_r2r_kind> kinds(d, FFTW_RODFT00);
    fftw_plan plan = fftw_plan_r2r(d, ns.data(), vals_.data(), vals_.data(),
                                   kinds.data(), FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    // delta_y = (2/(L+1))^d sum_m psi_m(y) psi_m, and the sine transform
    // contributes another 2^d, so the column scales by (L+1)^{-d}
    double norm = 1.0 / std::pow(double(L_ + 1), d);
    for (auto& v : vals_) v *= norm;
  }

  // zero outside the box
  double at(const Pt& x) const {
    std::size_t f = 0;
    for (int a = 0; a < d_; ++a) {
      int c = x[a] + N_;
      if (c < 0 || c >= L_) return 0.0;
      f = f * static_cast<std::size_t>(L_) + static_cast<std::size_t>(c);
    }
    return vals_[f];
  }

 private:
  int d_, L_, N_;
  std::vector<double> vals_;
};

inline double bigbox_single(const Pt& u, int i, int j, int d, int N) {
  Pt uj = pt_shift(u, j, 1);
  BoxGreenColumn col_u(d, N, u);
  BoxGreenColumn col_uj(d, N, uj);
  Pt zero{};
  Pt ei = pt_shift(zero, i, 1);
  return (col_uj.at(ei) - col_uj.at(zero)) - (col_u.at(ei) - col_u.at(zero));
}

// two-stage extrapolation over box sizes N, 2N, 4N killing the N^-d and
// N^-(d+1) truncation terms
inline double box_extrapolate(double v1, double v2, double v3, int d) {
  double wp = std::pow(2.0, d);
  double a = (wp * v2 - v1) / (wp - 1.0);
  double b = (wp * v3 - v2) / (wp - 1.0);
  double wq = std::pow(2.0, d + 1);
  return (wq * b - a) / (wq - 1.0);
}

// DD on the window |u|_inf <= R from d+1 shared Green columns (at the
// origin and its forward neighbors) of a single box; layout matches
// InfiniteKernel::slot
inline std::vector<double> bigbox_dd_window(int d, int R, int N) {
  const int side = 2 * R + 1;
  std::size_t cells = 1;
  for (int a = 0; a < d; ++a) cells *= static_cast<std::size_t>(side);
  std::vector<double> out(cells * d * d);
  Pt zero{};
  std::vector<BoxGreenColumn> cols;
  cols.reserve(d + 1);
  cols.emplace_back(d, N, zero);
  for (int i = 0; i < d; ++i) cols.emplace_back(d, N, pt_shift(zero, i, 1));
  std::vector<int> idx(d, -R);
  std::size_t f = 0;
  for (;;) {
    Pt u{};
    for (int a = 0; a < d; ++a) u[a] = idx[a];
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        Pt uj = pt_shift(u, j, 1);
        out[(f * d + i) * d + j] = (cols[1 + i].at(uj) - cols[0].at(uj)) -
                                   (cols[1 + i].at(u) - cols[0].at(u));
      }
    ++f;
    int a = d - 1;
    for (; a >= 0; --a) {
      if (++idx[a] <= R) break;
      idx[a] = -R;
    }
    if (a < 0) break;
  }
  return out;
}

}  // namespace detail

inline double infinite_dd_bigbox(const Pt& u, int i, int j, int d,
                                 BigboxOptions opt = {}) {
  if (d < 2) throw DimensionUnsupported("infinite kernel needs d >= 2");
  int linf = 0;
  for (int a = 0; a < d; ++a) linf = std::max(linf, std::abs(u[a]));
  int N = opt.box_n > 0 ? opt.box_n : 4 * linf + 16;
  if (linf > N / 4)
    throw OutsideDomain("bigbox needs |u|_inf <= N/4");
  double a1 = detail::bigbox_single(u, i, j, d, N);
  if (!opt.richardson) return a1;
  double a2 = detail::bigbox_single(u, i, j, d, 2 * N);
  double a3 = detail::bigbox_single(u, i, j, d, 4 * N);
  return detail::box_extrapolate(a1, a2, a3, d);
}

enum class InfMethod { fourier, bigbox };

inline double infinite_double_diff(const Pt& u, int i, int j, int d,
                                   InfMethod method = InfMethod::fourier) {
  return method == InfMethod::fourier ? infinite_dd_fourier(u, i, j, d)
                                      : infinite_dd_bigbox(u, i, j, d);
}

// ---- row transforms (d = 2, 3) ----------------------------------------------

namespace detail {

// d=2: for fixed u0 and direction pair, all offsets u1 in [-M/2, M/2) from
// one inverse DFT of the reduced integrand
inline void fourier_rows_d2(int u0, int M,
                            const std::vector<std::pair<int, int>>& pairs,
                            std::vector<std::vector<double>>& rows) {
  const int d = 2;
  rows.assign(pairs.size(), std::vector<double>(M));
  std::vector<double> rho(M), s(M), rpow(M);
  for (int m = 0; m < M; ++m) {
    double A = d - std::cos(midpoint_theta(m, M));
    s[m] = std::sqrt(A * A - 1.0);
    rho[m] = A - s[m];
    rpow[m] = std::pow(rho[m], std::abs(u0));
  }
  FftwComplexBuffer buf(M);
  fftw_plan plan = fftw_plan_dft_1d(
      M, reinterpret_cast<fftw_complex*>(buf.p),
      reinterpret_cast<fftw_complex*>(buf.p), FFTW_BACKWARD, FFTW_ESTIMATE);
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    auto [i, j] = pairs[pi];
    for (int m = 0; m < M; ++m) {
      std::complex<double> z(0.0, 0.0);
      for (const auto& t : kNumTerms) {
        int n0 = u0 + term_shift(t, 0, i, j);
        double p;
        if (n0 == u0)
          p = rpow[m];
        else if (std::abs(n0) == std::abs(u0) + 1)
          p = rpow[m] * rho[m];
        else if (std::abs(n0) == std::abs(u0) - 1)
          p = rpow[m] / rho[m];
        else
          p = std::pow(rho[m], std::abs(n0));
        double ph = midpoint_theta(m, M) * term_shift(t, 1, i, j);
        z += t.sign * p * std::complex<double>(std::cos(ph), std::sin(ph));
      }
      buf.p[m] = z * (double(d) / s[m]);
    }
    fftw_execute(plan);
    // value at offset u1: phase for the grid origin shift, then 1/M
    auto& out = rows[pi];
    for (int n = 0; n < M; ++n) {
      int u1 = n < M / 2 ? n : n - M;
      double ph = u1 * (kPi / M - kPi);
      out[n] = (std::cos(ph) * buf.p[n].real() - std::sin(ph) * buf.p[n].imag()) / M;
    }
  }
  fftw_destroy_plan(plan);
}

// d=3: fixed u0, all (u1,u2) in [-M/2, M/2)^2 from one 2D inverse DFT
inline void fourier_rows_d3(int u0, int M,
                            const std::vector<std::pair<int, int>>& pairs,
                            std::vector<std::vector<double>>& rows) {
  const int d = 3;
  rows.assign(pairs.size(), std::vector<double>(std::size_t(M) * M));
  std::vector<double> c(M);
  for (int m = 0; m < M; ++m) c[m] = std::cos(midpoint_theta(m, M));
  FftwComplexBuffer buf(std::size_t(M) * M);
  fftw_plan plan = fftw_plan_dft_2d(
      M, M, reinterpret_cast<fftw_complex*>(buf.p),
      reinterpret_cast<fftw_complex*>(buf.p), FFTW_BACKWARD, FFTW_ESTIMATE);
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    auto [i, j] = pairs[pi];
    for (int m1 = 0; m1 < M; ++m1)
      for (int m2 = 0; m2 < M; ++m2) {
        double A = d - c[m1] - c[m2];
        double s = std::sqrt(A * A - 1.0);
        double rho = A - s;
        double rpow = std::pow(rho, std::abs(u0));
        std::complex<double> z(0.0, 0.0);
        for (const auto& t : kNumTerms) {
          int n0 = u0 + term_shift(t, 0, i, j);
          double p;
          if (n0 == u0)
            p = rpow;
          else if (std::abs(n0) == std::abs(u0) + 1)
            p = rpow * rho;
          else if (std::abs(n0) == std::abs(u0) - 1)
            p = rpow / rho;
          else
            p = std::pow(rho, std::abs(n0));
          double ph = midpoint_theta(m1, M) * term_shift(t, 1, i, j) +
                      midpoint_theta(m2, M) * term_shift(t, 2, i, j);
          z += t.sign * p * std::complex<double>(std::cos(ph), std::sin(ph));
        }
        buf.p[std::size_t(m1) * M + m2] = z * (double(d) / s);
      }
    fftw_execute(plan);
    auto& out = rows[pi];
    for (int n1 = 0; n1 < M; ++n1) {
      int u1 = n1 < M / 2 ? n1 : n1 - M;
      for (int n2 = 0; n2 < M; ++n2) {
        int u2 = n2 < M / 2 ? n2 : n2 - M;
        double ph = (u1 + u2) * (kPi / M - kPi);
        auto v = buf.p[std::size_t(n1) * M + n2];
        out[std::size_t(n1) * M + n2] =
            (std::cos(ph) * v.real() - std::sin(ph) * v.imag()) /
            (double(M) * M);
      }
    }
  }
  fftw_destroy_plan(plan);
}

inline std::vector<std::pair<int, int>> all_pairs(int d) {
  std::vector<std::pair<int, int>> p;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) p.emplace_back(i, j);
  return p;
}

}  // namespace detail

// ---- cached kernel table -----------------------------------------------------

// Dense table of dd values for |u|_inf <= R. Mirrored entries are filled at
// build time using dd(u,i,j) = dd(-u,j,i).
class InfiniteKernel {
 public:
  InfiniteKernel(int d, int R) : d_(d), R_(R) {
    if (d != 2 && d != 3)
      throw DimensionUnsupported("kernel tables cover d in {2,3}");
    side_ = 2 * R + 1;
    std::size_t cells = 1;
    for (int a = 0; a < d; ++a) cells *= static_cast<std::size_t>(side_);
    vals_.assign(cells * d * d, 0.0);
  }

  int d() const { return d_; }
  int radius() const { return R_; }

  double dd(const Pt& u, int i, int j) const {
    Pt q = u;
    // canonical representative: flip if the first nonzero coordinate is < 0
    for (int a = 0; a < d_; ++a) {
      if (q[a] > 0) break;
      if (q[a] < 0) {
        for (int b = 0; b < d_; ++b) q[b] = -q[b];
        std::swap(i, j);
        break;
      }
    }
    std::size_t f = 0;
    for (int a = 0; a < d_; ++a) {
      if (std::abs(q[a]) > R_)
        throw OutsideDomain("offset beyond kernel table radius");
      f = f * side_ + static_cast<std::size_t>(q[a] + R_);
    }
    return vals_[(f * d_ + i) * d_ + j];
  }

  // sum over directions of twice the squared kernel
  double kappa0(const Pt& u) const {
    double s = 0.0;
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j) {
        double v = dd(u, i, j);
        s += v * v;
      }
    return 2.0 * s;
  }

  double& slot(const Pt& u, int i, int j) {
    std::size_t f = 0;
    for (int a = 0; a < d_; ++a)
      f = f * side_ + static_cast<std::size_t>(u[a] + R_);
    return vals_[(f * d_ + i) * d_ + j];
  }

 private:
  int d_, R_, side_ = 0;
  std::vector<double> vals_;
};

struct KernelBuildInfo {
  int grid_m = 0;          // accepted midpoint resolution
  double quad_error = 0.0; // max entry change in the last refinement
};

// Fourier-method table build; refines the grid until the largest entry
// change is below tol, then keeps the second-order extrapolation.
inline InfiniteKernel build_infinite_kernel(int d, int R, double tol = 1e-8,
                                            KernelBuildInfo* info = nullptr,
                                            int max_m = 1 << 15) {
  InfiniteKernel ker(d, R);
  auto pairs = detail::all_pairs(d);
  int M = 256;
  while (M < 4 * R) M *= 2;
  std::vector<std::vector<double>> rows_a, rows_b;
  for (;;) {
    double worst = 0.0;
    for (int u0 = 0; u0 <= R; ++u0) {
      if (d == 2) {
        detail::fourier_rows_d2(u0, M, pairs, rows_a);
        detail::fourier_rows_d2(u0, 2 * M, pairs, rows_b);
      } else {
        detail::fourier_rows_d3(u0, M, pairs, rows_a);
        detail::fourier_rows_d3(u0, 2 * M, pairs, rows_b);
      }
      for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
        auto [i, j] = pairs[pi];
        auto at = [&](const std::vector<double>& r, int m, int u1,
                      int u2) -> double {
          if (d == 2) return r[static_cast<std::size_t>((u1 % m + m) % m)];
          return r[std::size_t((u1 % m + m) % m) * m + ((u2 % m + m) % m)];
        };
        for (int u1 = -R; u1 <= R; ++u1) {
          int u2lo = d == 2 ? 0 : -R;
          int u2hi = d == 2 ? 0 : R;
          for (int u2 = u2lo; u2 <= u2hi; ++u2) {
            double a = at(rows_a[pi], M, u1, u2);
            double b = at(rows_b[pi], 2 * M, u1, u2);
            worst = std::max(worst, std::abs(b - a));
            Pt u = make_pt({u0, u1, u2});
            ker.slot(u, i, j) = (4.0 * b - a) / 3.0;
            if (u0 > 0) {
              Pt neg{};
              for (int a2 = 0; a2 < d; ++a2) neg[a2] = -u[a2];
              ker.slot(neg, j, i) = ker.slot(u, i, j);
            }
          }
        }
      }
    }
    if (worst < tol) {
      if (info) {
        info->grid_m = 2 * M;
        info->quad_error = worst;
      }
      return ker;
    }
    M *= 2;
    if (2 * M > max_m)
      throw QuadratureNotConverged("kernel table refinement hit max_m");
  }
}

// big-box cross-check table (both methods must agree on overlaps); the
// whole window shares d+1 Green columns per box size
inline InfiniteKernel build_infinite_kernel_bigbox(int d, int R, int box_n = 0) {
  InfiniteKernel ker(d, R);
  int N = box_n > 0 ? box_n : 4 * R + 16;
  auto t1 = detail::bigbox_dd_window(d, R, N);
  auto t2 = detail::bigbox_dd_window(d, R, 2 * N);
  auto t3 = detail::bigbox_dd_window(d, R, 4 * N);
  std::vector<int> idx(d, -R);
  std::size_t f = 0;
  for (;;) {
    Pt u{};
    for (int a = 0; a < d; ++a) u[a] = idx[a];
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        std::size_t s = (f * d + i) * d + j;
        ker.slot(u, i, j) = detail::box_extrapolate(t1[s], t2[s], t3[s], d);
      }
    ++f;
    int a = d - 1;
    for (; a >= 0; --a) {
      if (++idx[a] <= R) break;
      idx[a] = -R;
    }
    if (a < 0) break;
  }
  return ker;
}

inline void export_infinite_kernel_csv(const InfiniteKernel& ker,
                                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path);
  const int d = ker.d();
  out << "v1,v2" << (d == 3 ? ",v3" : "") << ",i,j,value\n";
  const int R = ker.radius();
  std::vector<int> idx(d, -R);
  for (;;) {
    Pt u{};
    for (int a = 0; a < d; ++a) u[a] = idx[a];
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        for (int a = 0; a < d; ++a) out << u[a] << ',';
        out << (i + 1) << ',' << (j + 1) << ',' << fmt17(ker.dd(u, i, j))
            << '\n';
      }
    int a = d - 1;
    for (; a >= 0; --a) {
      if (++idx[a] <= R) break;
      idx[a] = -R;
    }
    if (a < 0) break;
  }
}

// ---- susceptibility ----------------------------------------------------------

struct RadialBin {
  double r_mid = 0.0;   // representative radius (bin index + 1/2)
  double mean = 0.0;    // mean kappa0 over offsets in the bin
  long count = 0;
};

struct ChiResult {
  int d = 0;
  double value = 0.0;        // Richardson-extrapolated truncated sum
  double value_plain = 0.0;  // finest plain-grid truncated sum
  double value_half_r = 0.0; // truncated at R/2, for consistency checks
  int R = 0;
  int grid_m = 0;            // finest grid used
  double quad_error = 0.0;   // |chi_2M - chi_M| / 3
  double tail_bound = 0.0;   // c_bound * surface integral beyond R
  double fit_c = 0.0;        // kappa0 ~ fit_c * r^fit_slope over the window
  double fit_slope = 0.0;
  std::vector<RadialBin> bins;
};

namespace detail {

struct ChiAccum {
  KahanSum total, half;
  std::vector<double> bin_sum;
  std::vector<long> bin_cnt;
};

// d=2 streaming pass at grid M; offsets |u| <= R
inline void chi_pass_d2(int R, int M, ChiAccum& acc) {
  auto pairs = all_pairs(2);
  std::vector<std::vector<double>> rows;
  acc.bin_sum.assign(R + 1, 0.0);
  acc.bin_cnt.assign(R + 1, 0);
  for (int u0 = 0; u0 <= R; ++u0) {
    fourier_rows_d2(u0, M, pairs, rows);
    double w = u0 > 0 ? 2.0 : 1.0;  // mirror row u0 < 0 has equal kappa0
    for (int n = 0; n < M; ++n) {
      int u1 = n < M / 2 ? n : n - M;
      double r2 = double(u0) * u0 + double(u1) * u1;
      if (r2 > double(R) * R) continue;
      double k0 = 0.0;
      for (std::size_t pi = 0; pi < rows.size(); ++pi) {
        double v = rows[pi][n];
        k0 += v * v;
      }
      k0 *= 2.0;
      acc.total.add(w * k0);
      if (r2 <= 0.25 * double(R) * R) acc.half.add(w * k0);
      int bin = static_cast<int>(std::floor(std::sqrt(r2)));
      acc.bin_sum[bin] += w * k0;
      acc.bin_cnt[bin] += static_cast<long>(w);
    }
  }
}

// d=3 streaming pass: one 2D transform per (u0, pair)
inline void chi_pass_d3(int R, int M, ChiAccum& acc) {
  auto pairs = all_pairs(3);
  std::vector<std::vector<double>> rows;
  acc.bin_sum.assign(R + 1, 0.0);
  acc.bin_cnt.assign(R + 1, 0);
  for (int u0 = 0; u0 <= R; ++u0) {
    fourier_rows_d3(u0, M, pairs, rows);
    double w = u0 > 0 ? 2.0 : 1.0;
    for (int n1 = 0; n1 < M; ++n1) {
      int u1 = n1 < M / 2 ? n1 : n1 - M;
      for (int n2 = 0; n2 < M; ++n2) {
        int u2 = n2 < M / 2 ? n2 : n2 - M;
        double r2 = double(u0) * u0 + double(u1) * u1 + double(u2) * u2;
        if (r2 > double(R) * R) continue;
        double k0 = 0.0;
        for (std::size_t pi = 0; pi < rows.size(); ++pi) {
          double v = rows[pi][std::size_t(n1) * M + n2];
          k0 += v * v;
        }
        k0 *= 2.0;
        acc.total.add(w * k0);
        if (r2 <= 0.25 * double(R) * R) acc.half.add(w * k0);
        int bin = static_cast<int>(std::floor(std::sqrt(r2)));
        acc.bin_sum[bin] += w * k0;
        acc.bin_cnt[bin] += static_cast<long>(w);
      }
    }
  }
}

}  // namespace detail

struct ChiParams {
  int R = 0;       // 0 picks a radius from the tolerance and a prior constant
  int grid_m = 0;  // 0 picks the smallest power of two covering 2R
};

// Truncated absolutely-convergent sum of kappa0 over |u| <= R plus a fitted
// tail bound; tol is the absolute error target split between quadrature and
// tail. Supported in d in {2,3}.
inline ChiResult chi(int d, double tol, ChiParams p = {}) {
  if (d != 2 && d != 3) throw DimensionUnsupported("chi covers d in {2,3}");
  if (!(tol > 0)) throw ConfigError("chi tolerance must be positive");
  const double c_prior = d == 2 ? 2.0 : 300.0;  // empirical kappa0 r^{2d} scale
  const double sd = d == 2 ? detail::kPi : 4.0 * detail::kPi / 3.0;
  int R = p.R;
  if (R == 0) {
    // surface integral of c r^{-2d} beyond R equals c * s_d / R^d
    R = static_cast<int>(std::ceil(std::pow(3.0 * c_prior * sd / tol, 1.0 / d)));
    R = std::max(R, 16);
  }
  int M = p.grid_m;
  if (M == 0) {
    M = 256;
    while (M / 2 < 2 * R + 2) M *= 2;
  }
  if (M % 2 != 0 || M / 2 < 2 * R + 2)
    throw ConfigError("chi grid must be even and cover the radius at both resolutions");

  const int max_m = d == 2 ? (1 << 16) : 1024;
  for (;; M *= 2) {
    detail::ChiAccum a1, a2;
    if (d == 2) {
      detail::chi_pass_d2(R, M / 2, a1);
      detail::chi_pass_d2(R, M, a2);
    } else {
      detail::chi_pass_d3(R, M / 2, a1);
      detail::chi_pass_d3(R, M, a2);
    }

    ChiResult res;
    res.d = d;
    res.R = R;
    res.grid_m = M;
    res.value_plain = a2.total.value();
    res.quad_error = std::abs(a2.total.value() - a1.total.value()) / 3.0;
    res.value = (4.0 * a2.total.value() - a1.total.value()) / 3.0;
    res.value_half_r = (4.0 * a2.half.value() - a1.half.value()) / 3.0;

    // tail: fit kappa0 ~ c r^s on radial-bin means, bound with the windowed
    // sup of kappa0 r^{2d}
    int lo = 4, hi = std::min(R / 2, 150);
    std::vector<double> lx, ly;
    double c_bound = 0.0;
    res.bins.reserve(R + 1);
    for (int k = 0; k < static_cast<int>(a2.bin_sum.size()); ++k) {
      if (a2.bin_cnt[k] == 0) continue;
      RadialBin b;
      b.r_mid = k + 0.5;
      b.count = a2.bin_cnt[k];
      b.mean = a2.bin_sum[k] / a2.bin_cnt[k];
      res.bins.push_back(b);
      if (k >= lo && k <= hi && b.mean > 0) {
        lx.push_back(std::log(b.r_mid));
        ly.push_back(std::log(b.mean));
        c_bound = std::max(c_bound, b.mean * std::pow(b.r_mid, 2.0 * d));
      }
    }
    if (lx.size() < 4)
      throw TailBoundUnavailable("not enough radial bins for the decay fit");
    auto fit = fit_line(lx, ly);
    res.fit_slope = fit.slope;
    res.fit_c = std::exp(fit.intercept);
    if (fit.slope > -2.0 * d + 0.2)
      throw TailBoundUnavailable("radial decay fit is shallower than r^-2d");
    res.tail_bound = 1.5 * c_bound * sd / std::pow(double(R), d);
    if (res.tail_bound + res.quad_error <= tol) return res;
    if (res.tail_bound > tol || 2 * M > max_m)
      throw QuadratureNotConverged(
          "chi error budget exceeds tolerance; raise R or the grid");
  }
}

}  // namespace gradsq

#endif  // GRADSQ_INFINITE_HPP
