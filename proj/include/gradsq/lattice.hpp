#ifndef GRADSQ_LATTICE_HPP
#define GRADSQ_LATTICE_HPP

// Continuum domain specs, their lattice discretizations U_eps = U/eps ∩ Z^d,
// and the floor map from continuum points to lattice points.

#include <cmath>
#include <cstdint>
#include <queue>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "gradsq/common.hpp"

namespace gradsq {

enum class Shape { unit_square, unit_disk, rectangle, mask };

inline const char* shape_name(Shape s) {
  switch (s) {
    case Shape::unit_square: return "unit_square";
    case Shape::unit_disk: return "unit_disk";
    case Shape::rectangle: return "rectangle";
    case Shape::mask: return "mask";
  }
  return "?";
}

// Boolean rasterization: cell g (row-major over dims) covers the half-open
// box origin + cell_size * [g, g+1). The union of marked cells is the domain.
struct MaskGrid {
  std::vector<int> dims;
  std::vector<std::uint8_t> cells;
  RPt origin{};
  double cell_size = 1.0;

  std::size_t flat(const std::vector<int>& g) const {
    std::size_t f = 0;
    for (std::size_t a = 0; a < dims.size(); ++a)
      f = f * static_cast<std::size_t>(dims[a]) + static_cast<std::size_t>(g[a]);
    return f;
  }
};

struct DomainSpec {
  Shape shape = Shape::unit_square;
  int d = 2;
  std::vector<double> widths;  // rectangle only
  MaskGrid mask;               // mask only

  static DomainSpec make_unit_square(int d) {
    DomainSpec s;
    s.shape = Shape::unit_square;
    s.d = d;
    s.validate();
    return s;
  }
  static DomainSpec make_unit_disk(int d) {
    DomainSpec s;
    s.shape = Shape::unit_disk;
    s.d = d;
    s.validate();
    return s;
  }
  static DomainSpec make_rectangle(std::vector<double> widths) {
    DomainSpec s;
    s.shape = Shape::rectangle;
    s.d = static_cast<int>(widths.size());
    s.widths = std::move(widths);
    s.validate();
    return s;
  }
  static DomainSpec make_mask(int d, MaskGrid m) {
    DomainSpec s;
    s.shape = Shape::mask;
    s.d = d;
    s.mask = std::move(m);
    s.validate();
    return s;
  }

  void validate() const {
    if (d < 2) throw DimensionUnsupported("domain dimension must be >= 2");
    if (d > kMaxDim) throw DimensionUnsupported("dimension cap is 8");
    switch (shape) {
      case Shape::unit_square:
        break;
      case Shape::unit_disk:
        if (d != 2 && d != 3)
          throw DimensionUnsupported("unit_disk needs d in {2,3}");
        break;
      case Shape::rectangle:
        if (static_cast<int>(widths.size()) != d)
          throw InvalidDomain("rectangle needs one width per axis");
        for (double w : widths)
          if (!(w > 0)) throw InvalidDomain("rectangle widths must be positive");
        break;
      case Shape::mask:
        validate_mask_();
        break;
    }
  }

  // open-set membership of a continuum point
  bool contains(const RPt& x) const {
    switch (shape) {
      case Shape::unit_square: {
        for (int a = 0; a < d; ++a)
          if (!(x[a] > 0.0 && x[a] < 1.0)) return false;
        return true;
      }
      case Shape::unit_disk: {
        double r2 = 0;
        for (int a = 0; a < d; ++a) r2 += x[a] * x[a];
        return r2 < 1.0;
      }
      case Shape::rectangle: {
        for (int a = 0; a < d; ++a)
          if (!(x[a] > 0.0 && x[a] < widths[a])) return false;
        return true;
      }
      case Shape::mask: {
        std::vector<int> g(d);
        for (int a = 0; a < d; ++a) {
          double t = (x[a] - mask.origin[a]) / mask.cell_size;
          double f = std::floor(t);
          if (f < 0 || f >= mask.dims[a]) return false;
          g[a] = static_cast<int>(f);
        }
        return mask.cells[mask.flat(g)] != 0;
      }
    }
    return false;
  }

  double volume() const {
    switch (shape) {
      case Shape::unit_square:
        return 1.0;
      case Shape::unit_disk:
        return d == 2 ? 3.14159265358979323846
                      : 4.0 * 3.14159265358979323846 / 3.0;
      case Shape::rectangle: {
        double v = 1.0;
        for (double w : widths) v *= w;
        return v;
      }
      case Shape::mask: {
        double n = 0;
        for (auto c : mask.cells) n += (c != 0);
        return n * std::pow(mask.cell_size, d);
      }
    }
    return 0.0;
  }

  nlohmann::json to_json() const {
    nlohmann::json params = nlohmann::json::object();
    if (shape == Shape::rectangle) params["widths"] = widths;
    if (shape == Shape::mask) {
      params["dims"] = mask.dims;
      params["cells"] = std::vector<int>(mask.cells.begin(), mask.cells.end());
      params["origin"] =
          std::vector<double>(mask.origin.begin(), mask.origin.begin() + d);
      params["cell"] = mask.cell_size;
    }
    return {{"shape", shape_name(shape)}, {"d", d}, {"params", params}};
  }

  static DomainSpec from_json(const nlohmann::json& j) {
    DomainSpec s;
    std::string name = j.at("shape").get<std::string>();
    s.d = j.at("d").get<int>();
    const auto& params = j.contains("params") ? j.at("params")
                                              : nlohmann::json::object();
    if (name == "unit_square") {
      s.shape = Shape::unit_square;
    } else if (name == "unit_disk") {
      s.shape = Shape::unit_disk;
    } else if (name == "rectangle") {
      s.shape = Shape::rectangle;
      s.widths = params.at("widths").get<std::vector<double>>();
    } else if (name == "mask") {
      s.shape = Shape::mask;
      s.mask.dims = params.at("dims").get<std::vector<int>>();
      auto cells = params.at("cells").get<std::vector<int>>();
      s.mask.cells.assign(cells.begin(), cells.end());
      if (params.contains("origin")) {
        auto o = params.at("origin").get<std::vector<double>>();
        for (std::size_t a = 0; a < o.size() && a < kMaxDim; ++a)
          s.mask.origin[a] = o[a];
      }
      if (params.contains("cell"))
        s.mask.cell_size = params.at("cell").get<double>();
    } else {
      throw ConfigError("unknown shape: " + name);
    }
    s.validate();
    return s;
  }

 private:
  void validate_mask_() const {
    if (static_cast<int>(mask.dims.size()) != d)
      throw InvalidDomain("mask dims must match dimension");
    std::size_t total = 1;
    for (int e : mask.dims) {
      if (e <= 0) throw InvalidDomain("mask extents must be positive");
      total *= static_cast<std::size_t>(e);
    }
    if (mask.cells.size() != total)
      throw InvalidDomain("mask cell count must equal product of dims");
    if (!(mask.cell_size > 0)) throw InvalidDomain("mask cell size must be positive");
    std::size_t marked = 0, seed = total;
    for (std::size_t i = 0; i < total; ++i)
      if (mask.cells[i]) {
        ++marked;
        seed = i;
      }
    if (marked == 0) throw InvalidDomain("mask has no marked cells");
    // BFS over marked cells, nearest-neighbor adjacency
    std::vector<std::uint8_t> seen(total, 0);
    std::queue<std::size_t> q;
    q.push(seed);
    seen[seed] = 1;
    std::size_t reached = 1;
    std::vector<std::size_t> stride(d);
    stride[d - 1] = 1;
    for (int a = d - 2; a >= 0; --a)
      stride[a] = stride[a + 1] * static_cast<std::size_t>(mask.dims[a + 1]);
    while (!q.empty()) {
      std::size_t f = q.front();
      q.pop();
      std::size_t rem = f;
      std::vector<int> g(d);
      for (int a = 0; a < d; ++a) {
        g[a] = static_cast<int>(rem / stride[a]);
        rem %= stride[a];
      }
      for (int a = 0; a < d; ++a)
        for (int sgn : {-1, 1}) {
          int ga = g[a] + sgn;
          if (ga < 0 || ga >= mask.dims[a]) continue;
          std::size_t nf = f + static_cast<std::size_t>(sgn) * stride[a];
          if (mask.cells[nf] && !seen[nf]) {
            seen[nf] = 1;
            ++reached;
            q.push(nf);
          }
        }
    }
    if (reached != marked)
      throw InvalidDomain("mask must be connected under nearest-neighbor adjacency");
  }
};

// floor of x/eps, snapping values a hair below an integer back up so that
// exact lattice multiples map to themselves despite rounding in the division
inline Pt floor_point(const RPt& x, double eps, int d) {
  Pt z{};
  for (int a = 0; a < d; ++a) {
    double t = x[a] / eps;
    double f = std::floor(t);
    if (1.0 - (t - f) <= 1e-12 * std::max(1.0, std::abs(t))) f += 1.0;
    z[a] = static_cast<int>(f);
  }
  return z;
}

struct LatticeDomain {
  DomainSpec spec;
  double eps = 1.0;
  std::vector<Pt> vertices;
  std::unordered_map<Pt, int, PtHash> index;
  bool connected = true;

  int d() const { return spec.d; }
  int size() const { return static_cast<int>(vertices.size()); }
  int index_of(const Pt& z) const {
    auto it = index.find(z);
    return it == index.end() ? -1 : it->second;
  }
  bool contains(const Pt& z) const { return index.count(z) != 0; }
};

inline LatticeDomain discretize(const DomainSpec& spec, double eps) {
  spec.validate();
  if (!(eps > 0)) throw InvalidDomain("eps must be positive");
  const int d = spec.d;

  // bounding box of U in lattice units
  std::vector<long> lo(d), hi(d);
  auto set_box = [&](int a, double l, double h) {
    lo[a] = static_cast<long>(std::floor(l / eps)) - 1;
    hi[a] = static_cast<long>(std::ceil(h / eps)) + 1;
  };
  switch (spec.shape) {
    case Shape::unit_square:
      for (int a = 0; a < d; ++a) set_box(a, 0.0, 1.0);
      break;
    case Shape::unit_disk:
      for (int a = 0; a < d; ++a) set_box(a, -1.0, 1.0);
      break;
    case Shape::rectangle:
      for (int a = 0; a < d; ++a) set_box(a, 0.0, spec.widths[a]);
      break;
    case Shape::mask:
      for (int a = 0; a < d; ++a)
        set_box(a, spec.mask.origin[a],
                spec.mask.origin[a] + spec.mask.cell_size * spec.mask.dims[a]);
      break;
  }

  LatticeDomain dom;
  dom.spec = spec;
  dom.eps = eps;
  std::vector<long> z(lo);
  for (;;) {
    RPt x{};
    Pt p{};
    for (int a = 0; a < d; ++a) {
      x[a] = eps * static_cast<double>(z[a]);
      p[a] = static_cast<int>(z[a]);
    }
    if (spec.contains(x)) dom.vertices.push_back(p);
    // lexicographic odometer, last axis fastest
    int a = d - 1;
    for (; a >= 0; --a) {
      if (++z[a] <= hi[a]) break;
      z[a] = lo[a];
    }
    if (a < 0) break;
  }
  if (dom.vertices.empty()) throw EmptyDomain("no lattice point lies in U");
  dom.index.reserve(dom.vertices.size() * 2);
  for (int i = 0; i < dom.size(); ++i) dom.index.emplace(dom.vertices[i], i);

  // nearest-neighbor connectivity; disconnection is flagged, not fatal
  std::vector<std::uint8_t> seen(dom.vertices.size(), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  std::size_t reached = 1;
  while (!q.empty()) {
    int i = q.front();
    q.pop();
    for (int a = 0; a < d; ++a)
      for (int sgn : {-1, 1}) {
        int j = dom.index_of(pt_shift(dom.vertices[i], a, sgn));
        if (j >= 0 && !seen[j]) {
          seen[j] = 1;
          ++reached;
          q.push(j);
        }
      }
  }
  dom.connected = (reached == dom.vertices.size());
  return dom;
}

}  // namespace gradsq

#endif  // GRADSQ_LATTICE_HPP
