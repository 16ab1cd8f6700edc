#pragma once

#include "hypercircle/common.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace hypercircle {

/// Geometry of one simplex: vertex coordinates, affine map, barycentric gradients.
template <int Dim>
struct CellGeometry {
  using Point = Eigen::Matrix<double, Dim, 1>;
  using Barycentric = Eigen::Matrix<double, Dim + 1, 1>;

  std::array<Point, Dim + 1> x;
  Eigen::Matrix<double, Dim, Dim> jacobian;
  double measure = 0.0;
  std::array<Point, Dim + 1> grad_bary;
  Point centroid;
  double diameter = 0.0;

  explicit CellGeometry(const std::array<Point, Dim + 1>& coords) : x(coords) {
    for (int j = 0; j < Dim; ++j) jacobian.col(j) = x[j + 1] - x[0];
    const double det = jacobian.determinant();
    measure = std::abs(det) / (Dim == 1 ? 1.0 : 2.0);
    if (det != 0.0) {
      const Eigen::Matrix<double, Dim, Dim> inv = jacobian.inverse();
      grad_bary[0] = Point::Zero();
      for (int j = 0; j < Dim; ++j) {
        grad_bary[j + 1] = inv.row(j).transpose();
        grad_bary[0] -= grad_bary[j + 1];
      }
    }
    centroid = Point::Zero();
    for (const auto& p : x) centroid += p / (Dim + 1);
    for (int i = 0; i <= Dim; ++i)
      for (int j = i + 1; j <= Dim; ++j) diameter = std::max(diameter, (x[i] - x[j]).norm());
  }

  Point map(const Barycentric& b) const {
    Point p = Point::Zero();
    for (int i = 0; i <= Dim; ++i) p += b[i] * x[i];
    return p;
  }

  Barycentric barycentric(const Point& p) const {
    Barycentric b;
    const Point local = jacobian.inverse() * (p - x[0]);
    b[0] = 1.0 - local.sum();
    for (int j = 0; j < Dim; ++j) b[j + 1] = local[j];
    return b;
  }

  /// Radius convention for shape regularity: h/2 in 1D, inradius for triangles.
  double inscribed_radius() const {
    if constexpr (Dim == 1) {
      return 0.5 * diameter;
    } else {
      const double perimeter = (x[0] - x[1]).norm() + (x[1] - x[2]).norm() + (x[2] - x[0]).norm();
      return 2.0 * measure / perimeter;
    }
  }
};

/// Conforming simplicial mesh: intervals (Dim = 1) or triangles (Dim = 2).
///
/// Faces are the codimension-one subsimplices (points in 1D, edges in 2D),
/// stored with ascending global vertex ids. Local face i of a cell is the one
/// opposite its local vertex i. Boundary flags are derived from face adjacency.
/// Immutable after construction.
template <int Dim>
class Mesh {
  static_assert(Dim == 1 || Dim == 2, "Mesh: only intervals and triangles are supported");

public:
  static constexpr int dim = Dim;
  using Point = Eigen::Matrix<double, Dim, 1>;
  using Cell = std::array<Index, Dim + 1>;
  using Face = std::array<Index, Dim>;

  Mesh(std::vector<Point> vertices, std::vector<Cell> cells)
      : vertices_(std::move(vertices)), cells_(std::move(cells)) {
    if (cells_.empty()) throw std::invalid_argument("Mesh: no cells");
    build_topology();
    validate();
  }

  Index n_vertices() const { return static_cast<Index>(vertices_.size()); }
  Index n_cells() const { return static_cast<Index>(cells_.size()); }
  Index n_faces() const { return static_cast<Index>(faces_.size()); }

  const Point& vertex(Index v) const { return vertices_[v]; }
  const std::vector<Point>& vertices() const { return vertices_; }
  const Cell& cell(Index c) const { return cells_[c]; }
  const std::vector<Cell>& cells() const { return cells_; }

  const Face& face(Index f) const { return faces_[f]; }
  /// Adjacent cells of a face; the second entry is -1 on the boundary.
  const std::array<Index, 2>& face_cells(Index f) const { return face_cells_[f]; }
  bool is_boundary_face(Index f) const { return face_cells_[f][1] < 0; }
  Index cell_face(Index c, int local) const { return cell_faces_[c][local]; }

  bool is_boundary_vertex(Index v) const { return boundary_vertex_[v]; }
  /// Cells containing vertex v, ascending.
  const std::vector<Index>& vertex_cells(Index v) const { return vertex_cells_[v]; }

  CellGeometry<Dim> geometry(Index c) const {
    std::array<Point, Dim + 1> coords;
    for (int i = 0; i <= Dim; ++i) coords[i] = vertices_[cells_[c][i]];
    return CellGeometry<Dim>(coords);
  }

  double cell_measure(Index c) const { return geometry(c).measure; }
  double cell_diameter(Index c) const { return geometry(c).diameter; }

  double h_max() const {
    double h = 0.0;
    for (Index c = 0; c < n_cells(); ++c) h = std::max(h, cell_diameter(c));
    return h;
  }

  double total_measure() const {
    double m = 0.0;
    for (Index c = 0; c < n_cells(); ++c) m += cell_measure(c);
    return m;
  }

  /// Side lengths of the axis-aligned bounding box of the domain.
  Point bounding_box_extent() const {
    Point lo = vertices_.front(), hi = vertices_.front();
    for (const auto& p : vertices_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    return hi - lo;
  }

  /// Local index of global vertex v within cell c, or -1.
  int local_vertex(Index c, Index v) const {
    for (int i = 0; i <= Dim; ++i)
      if (cells_[c][i] == v) return i;
    return -1;
  }

private:
  void build_topology() {
    const Index nv = n_vertices();
    for (const auto& c : cells_)
      for (Index v : c)
        if (v < 0 || v >= nv) throw std::invalid_argument("Mesh: cell references unknown vertex");

    std::map<Face, Index> index_of;
    cell_faces_.resize(cells_.size());
    for (Index c = 0; c < n_cells(); ++c) {
      for (int local = 0; local <= Dim; ++local) {
        Face f{};
        int k = 0;
        for (int i = 0; i <= Dim; ++i)
          if (i != local) f[k++] = cells_[c][i];
        std::sort(f.begin(), f.end());
        auto [it, inserted] = index_of.emplace(f, static_cast<Index>(faces_.size()));
        if (inserted) {
          faces_.push_back(f);
          face_cells_.push_back({c, -1});
        } else {
          auto& owners = face_cells_[it->second];
          if (owners[1] >= 0)
            throw std::invalid_argument("Mesh: face shared by more than two cells (not conforming)");
          owners[1] = c;
        }
        cell_faces_[c][local] = it->second;
      }
    }

    boundary_vertex_.assign(nv, false);
    for (Index f = 0; f < n_faces(); ++f)
      if (face_cells_[f][1] < 0)
        for (Index v : faces_[f]) boundary_vertex_[v] = true;

    vertex_cells_.assign(nv, {});
    for (Index c = 0; c < n_cells(); ++c)
      for (Index v : cells_[c]) vertex_cells_[v].push_back(c);
  }

  void validate() const {
    for (Index c = 0; c < n_cells(); ++c) {
      const auto g = geometry(c);
      if (!(g.measure > 1e-14 * std::pow(g.diameter, Dim)))
        throw std::invalid_argument("Mesh: degenerate cell " + std::to_string(c));
    }
    for (Index v = 0; v < n_vertices(); ++v)
      if (vertex_cells_[v].empty())
        throw std::invalid_argument("Mesh: vertex " + std::to_string(v) + " belongs to no cell");
    if constexpr (Dim == 2) {
      // A hanging node shows up as a vertex lying inside a boundary-flagged edge.
      for (Index f = 0; f < n_faces(); ++f) {
        if (!is_boundary_face(f)) continue;
        const Point& a = vertices_[faces_[f][0]];
        const Point& b = vertices_[faces_[f][1]];
        const Point t = b - a;
        const double len2 = t.squaredNorm();
        for (Index v = 0; v < n_vertices(); ++v) {
          if (v == faces_[f][0] || v == faces_[f][1]) continue;
          const Point d = vertices_[v] - a;
          const double s = d.dot(t) / len2;
          const double cross = d.x() * t.y() - d.y() * t.x();
          if (s > 1e-12 && s < 1.0 - 1e-12 && std::abs(cross) <= 1e-12 * len2)
            throw std::invalid_argument("Mesh: hanging vertex " + std::to_string(v) +
                                        " (not conforming)");
        }
      }
    }
  }

  std::vector<Point> vertices_;
  std::vector<Cell> cells_;
  std::vector<Face> faces_;
  std::vector<std::array<Index, 2>> face_cells_;
  std::vector<std::array<Index, Dim + 1>> cell_faces_;
  std::vector<bool> boundary_vertex_;
  std::vector<std::vector<Index>> vertex_cells_;
};

/// Support of the hat function of one vertex.
template <int Dim>
struct VertexPatch {
  Index vertex = -1;
  std::vector<Index> cells;  // ascending
  double diameter = 0.0;     // max pairwise distance of patch vertices
  bool is_interior = false;
};

template <int Dim>
struct MeshQualityReport {
  double h_max = 0.0;
  double shape_regularity = 0.0;  // max_K h_K / rho_K
  std::vector<double> patch_diameters;
};

// ---------------------------------------------------------------------------
// Structured families

inline Mesh<1> build_interval_mesh(Index n_cells, double a = 0.0, double b = 1.0) {
  if (n_cells < 1) throw std::invalid_argument("build_interval_mesh: n_cells must be >= 1");
  if (!(b > a)) throw std::invalid_argument("build_interval_mesh: empty interval");
  std::vector<Mesh<1>::Point> v(n_cells + 1);
  std::vector<Mesh<1>::Cell> c(n_cells);
  for (Index i = 0; i <= n_cells; ++i) v[i][0] = a + (b - a) * static_cast<double>(i) / n_cells;
  v[n_cells][0] = b;
  for (Index i = 0; i < n_cells; ++i) c[i] = {i, i + 1};
  return Mesh<1>(std::move(v), std::move(c));
}

/// (0,1)^2 split into n^2 squares, each cut along its (0,0)-(1,1) diagonal.
inline Mesh<2> build_unit_square_mesh(Index n) {
  if (n < 1) throw std::invalid_argument("build_unit_square_mesh: n_per_side must be >= 1");
  std::vector<Mesh<2>::Point> v;
  v.reserve((n + 1) * (n + 1));
  for (Index j = 0; j <= n; ++j)
    for (Index i = 0; i <= n; ++i)
      v.emplace_back(static_cast<double>(i) / n, static_cast<double>(j) / n);
  std::vector<Mesh<2>::Cell> c;
  c.reserve(2 * n * n);
  auto id = [n](Index i, Index j) { return j * (n + 1) + i; };
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) {
      c.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      c.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return Mesh<2>(std::move(v), std::move(c));
}

/// Result of one uniform refinement. Vertices of the coarse mesh keep their
/// indices; each new vertex records the two coarse vertices it bisects.
template <int Dim>
struct Refinement {
  Mesh<Dim> fine;
  std::vector<std::array<Index, 2>> vertex_parents;  // {v, v} for inherited vertices
};

template <int Dim>
Refinement<Dim> refine_with_parents(const Mesh<Dim>& mesh) {
  using Point = typename Mesh<Dim>::Point;
  std::vector<Point> v = mesh.vertices();
  std::vector<std::array<Index, 2>> parents;
  for (Index i = 0; i < mesh.n_vertices(); ++i) parents.push_back({i, i});

  std::map<std::array<Index, 2>, Index> midpoint;
  auto mid = [&](Index a, Index b) {
    std::array<Index, 2> key{std::min(a, b), std::max(a, b)};
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const Index id = static_cast<Index>(v.size());
    v.push_back(0.5 * (mesh.vertex(a) + mesh.vertex(b)));
    parents.push_back(key);
    midpoint.emplace(key, id);
    return id;
  };

  std::vector<typename Mesh<Dim>::Cell> cells;
  for (const auto& c : mesh.cells()) {
    if constexpr (Dim == 1) {
      const Index m = mid(c[0], c[1]);
      cells.push_back({c[0], m});
      cells.push_back({m, c[1]});
    } else {
      const Index m01 = mid(c[0], c[1]);
      const Index m12 = mid(c[1], c[2]);
      const Index m20 = mid(c[2], c[0]);
      cells.push_back({c[0], m01, m20});
      cells.push_back({m01, c[1], m12});
      cells.push_back({m20, m12, c[2]});
      cells.push_back({m01, m12, m20});
    }
  }
  return {Mesh<Dim>(std::move(v), std::move(cells)), std::move(parents)};
}

template <int Dim>
Mesh<Dim> uniform_refine(const Mesh<Dim>& mesh) {
  return refine_with_parents(mesh).fine;
}

template <int Dim>
std::vector<VertexPatch<Dim>> vertex_patches(const Mesh<Dim>& mesh) {
  std::vector<VertexPatch<Dim>> patches(mesh.n_vertices());
  for (Index a = 0; a < mesh.n_vertices(); ++a) {
    auto& p = patches[a];
    p.vertex = a;
    p.cells = mesh.vertex_cells(a);
    p.is_interior = !mesh.is_boundary_vertex(a);
    std::vector<Index> verts;
    for (Index c : p.cells)
      for (Index v : mesh.cell(c)) verts.push_back(v);
    std::sort(verts.begin(), verts.end());
    verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
    for (std::size_t i = 0; i < verts.size(); ++i)
      for (std::size_t j = i + 1; j < verts.size(); ++j)
        p.diameter = std::max(p.diameter, (mesh.vertex(verts[i]) - mesh.vertex(verts[j])).norm());
  }
  return patches;
}

template <int Dim>
MeshQualityReport<Dim> mesh_quality(const Mesh<Dim>& mesh) {
  MeshQualityReport<Dim> r;
  for (Index c = 0; c < mesh.n_cells(); ++c) {
    const auto g = mesh.geometry(c);
    r.h_max = std::max(r.h_max, g.diameter);
    r.shape_regularity = std::max(r.shape_regularity, g.diameter / g.inscribed_radius());
  }
  for (const auto& p : vertex_patches(mesh)) r.patch_diameters.push_back(p.diameter);
  return r;
}

/// Cell containing x and its barycentric coordinates (first match, with a
/// small tolerance so points on shared faces are found).
template <int Dim>
std::pair<Index, Eigen::Matrix<double, Dim + 1, 1>> locate(const Mesh<Dim>& mesh,
                                                         const typename Mesh<Dim>::Point& x) {
  for (Index c = 0; c < mesh.n_cells(); ++c) {
    const auto g = mesh.geometry(c);
    const auto b = g.barycentric(x);
    if (b.minCoeff() >= -1e-12) return {c, b};
  }
  throw std::invalid_argument("locate: point outside the mesh");
}

// ---------------------------------------------------------------------------
// Text format: "dim n_vertices n_cells", coordinates, then 0-based cells.

inline int peek_mesh_dimension(std::istream& in) {
  int dim = 0;
  if (!(in >> dim)) throw std::invalid_argument("mesh file: missing header");
  return dim;
}

template <int Dim>
Mesh<Dim> read_mesh_text(std::istream& in) {
  int dim = 0;
  long nv = 0, nc = 0;
  if (!(in >> dim >> nv >> nc)) throw std::invalid_argument("mesh file: malformed header");
  if (dim != Dim)
    throw std::invalid_argument("mesh file: dimension " + std::to_string(dim) + ", expected " +
                                std::to_string(Dim));
  if (nv <= 0 || nc <= 0) throw std::invalid_argument("mesh file: empty mesh");
  std::vector<typename Mesh<Dim>::Point> v(nv);
  for (auto& p : v)
    for (int k = 0; k < Dim; ++k)
      if (!(in >> p[k])) throw std::invalid_argument("mesh file: truncated coordinates");
  std::vector<typename Mesh<Dim>::Cell> c(nc);
  for (auto& cell : c)
    for (auto& idx : cell)
      if (!(in >> idx)) throw std::invalid_argument("mesh file: truncated cells");
  return Mesh<Dim>(std::move(v), std::move(c));
}

template <int Dim>
Mesh<Dim> read_mesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open mesh file " + path);
  return read_mesh_text<Dim>(in);
}

template <int Dim>
void write_mesh_text(const Mesh<Dim>& mesh, std::ostream& out) {
  out.precision(17);
  out << Dim << ' ' << mesh.n_vertices() << ' ' << mesh.n_cells() << '\n';
  for (const auto& p : mesh.vertices()) {
    for (int k = 0; k < Dim; ++k) out << (k ? " " : "") << p[k];
    out << '\n';
  }
  for (const auto& c : mesh.cells()) {
    for (int k = 0; k <= Dim; ++k) out << (k ? " " : "") << c[k];
    out << '\n';
  }
}

}  // namespace hypercircle
