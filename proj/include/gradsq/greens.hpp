#ifndef GRADSQ_GREENS_HPP
#define GRADSQ_GREENS_HPP

// Zero-boundary Green's function of the normalized lattice Laplacian on a
// LatticeDomain, with the double-difference and transfer-current kernels
// built from it. G solves (I - A/(2d)) G = I where A is the adjacency matrix
// of the nearest-neighbor graph restricted to the vertex set; values are
// extended by zero outside.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <fstream>
#include <memory>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "gradsq/common.hpp"
#include "gradsq/lattice.hpp"

namespace gradsq {

namespace detail {

inline Eigen::SparseMatrix<double> laplacian_matrix(const LatticeDomain& dom) {
  const int n = dom.size();
  const int d = dom.d();
  const double w = 1.0 / (2.0 * d);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n) * (2 * d + 1));
  for (int i = 0; i < n; ++i) {
    trip.emplace_back(i, i, 1.0);
    for (int a = 0; a < d; ++a)
      for (int sgn : {-1, 1}) {
        int j = dom.index_of(pt_shift(dom.vertices[i], a, sgn));
        if (j >= 0) trip.emplace_back(i, j, -w);
      }
  }
  Eigen::SparseMatrix<double> K(n, n);
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

}  // namespace detail

// Dense Green table. Memory n^2 doubles; intended for |V| up to ~2 * 10^4.
class GreenTable {
 public:
  explicit GreenTable(const LatticeDomain& dom) : dom_(dom) {
    const int n = dom.size();
    Eigen::MatrixXd K = Eigen::MatrixXd(detail::laplacian_matrix(dom));
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success)
      throw FactorizationFailed("lattice Laplacian is not positive definite");
    G_ = llt.solve(Eigen::MatrixXd::Identity(n, n));
    // solve() of a symmetric system can drift off symmetric by rounding
    G_ = ((G_ + G_.transpose()) * 0.5).eval();
  }

  const LatticeDomain& domain() const { return dom_; }
  const Eigen::MatrixXd& matrix() const { return G_; }

  // zero-extension outside the vertex set
  double green(const Pt& v, const Pt& w) const {
    int i = dom_.index_of(v);
    if (i < 0) return 0.0;
    int j = dom_.index_of(w);
    if (j < 0) return 0.0;
    return G_(i, j);
  }

  // Cholesky factor of G itself (not of the Laplacian); used by the sampler
  const Eigen::MatrixXd& cholesky_factor() const {
    if (!chol_) {
      Eigen::LLT<Eigen::MatrixXd> llt(G_);
      if (llt.info() != Eigen::Success)
        throw FactorizationFailed("Green matrix is not positive definite");
      chol_ = std::make_shared<Eigen::MatrixXd>(llt.matrixL());
    }
    return *chol_;
  }

 private:
  LatticeDomain dom_;
  Eigen::MatrixXd G_;
  mutable std::shared_ptr<Eigen::MatrixXd> chol_;
};

// Column-on-demand Green accessor backed by a sparse factorization. Suits
// large domains where only a few source points are ever queried.
// The column cache makes this class not safe for concurrent use.
class GreenColumns {
 public:
  explicit GreenColumns(const LatticeDomain& dom) : dom_(dom) {
    auto K = detail::laplacian_matrix(dom);
    llt_.compute(K);
    if (llt_.info() != Eigen::Success)
      throw FactorizationFailed("sparse Laplacian factorization failed");
  }

  const LatticeDomain& domain() const { return dom_; }

  double green(const Pt& v, const Pt& w) const {
    int i = dom_.index_of(v);
    if (i < 0) return 0.0;
    int j = dom_.index_of(w);
    if (j < 0) return 0.0;
    return column(j)(i);
  }

  const Eigen::VectorXd& column(int j) const {
    auto it = cache_.find(j);
    if (it != cache_.end()) return it->second;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dom_.size());
    rhs(j) = 1.0;
    Eigen::VectorXd col = llt_.solve(rhs);
    return cache_.emplace(j, std::move(col)).first->second;
  }

 private:
  LatticeDomain dom_;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_;
  mutable std::unordered_map<int, Eigen::VectorXd> cache_;
};

inline GreenTable solve_green(const LatticeDomain& dom) {
  return GreenTable(dom);
}

// (tail, direction); the edge tip is tail + e_direction
struct Edge {
  Pt tail{};
  int dir = 0;
};

// grad-grad kernel: difference of G along e_i at the first argument and
// along e_j at the second, with zero-extension at shifted points
template <class GreenLike>
double double_diff(const GreenLike& g, const Pt& v, const Pt& w, int i, int j) {
  const LatticeDomain& dom = g.domain();
  if (!dom.contains(v) || !dom.contains(w))
    throw PointOutsideDomain("double_diff arguments must be domain vertices");
  if (i < 0 || i >= dom.d() || j < 0 || j >= dom.d())
    throw DimensionUnsupported("direction index out of range");
  Pt vi = pt_shift(v, i, 1);
  Pt wj = pt_shift(w, j, 1);
  return g.green(vi, wj) - g.green(v, wj) - g.green(vi, w) + g.green(v, w);
}

// covariance of the two edge gradients of the zero-boundary field
template <class GreenLike>
double transfer_current(const GreenLike& g, const Edge& e, const Edge& f) {
  return double_diff(g, e.tail, f.tail, e.dir, f.dir);
}

// Binary export: little-endian float64 row-major matrix preceded by a JSON
// header line ({"d","eps","shape","n"}) and a newline.
inline void export_green_table(const GreenTable& g, const std::string& path) {
  nlohmann::json header = {{"d", g.domain().d()},
                           {"eps", g.domain().eps},
                           {"shape", shape_name(g.domain().spec.shape)},
                           {"n", g.domain().size()}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path);
  std::string h = header.dump();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.put('\n');
  const auto& m = g.matrix();
  for (int i = 0; i < m.rows(); ++i)
    out.write(reinterpret_cast<const char*>(m.row(i).eval().data()),
              static_cast<std::streamsize>(sizeof(double) * m.cols()));
}

}  // namespace gradsq

#endif  // GRADSQ_GREENS_HPP
