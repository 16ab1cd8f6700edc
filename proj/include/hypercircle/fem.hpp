#pragma once

#include "hypercircle/common.hpp"
#include "hypercircle/mesh.hpp"
#include "hypercircle/quadrature.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <functional>
#include <memory>
#include <random>

namespace hypercircle {

using SparseOperator = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct SolverOptions {
  double tol = 1e-12;   // relative residual ||A x - b|| / ||b||
  Index max_iters = 0;  // 0: 10 * n
};

/// Conforming P1 space with homogeneous Dirichlet conditions: one dof per
/// interior vertex, numbered in ascending vertex order.
template <int Dim>
class FeSpace {
public:
  using Point = typename Mesh<Dim>::Point;
  using Local = Eigen::Matrix<double, Dim + 1, 1>;

  explicit FeSpace(std::shared_ptr<const Mesh<Dim>> mesh, int degree = 1)
      : mesh_(std::move(mesh)), degree_(degree) {
    if (!mesh_) throw std::invalid_argument("FeSpace: null mesh");
    if (degree_ != 1) throw std::invalid_argument("FeSpace: only degree 1 is supported");
    dof_of_vertex_.assign(mesh_->n_vertices(), -1);
    for (Index v = 0; v < mesh_->n_vertices(); ++v) {
      if (mesh_->is_boundary_vertex(v)) continue;
      dof_of_vertex_[v] = static_cast<Index>(vertex_of_dof_.size());
      vertex_of_dof_.push_back(v);
    }
  }

  const Mesh<Dim>& mesh() const { return *mesh_; }
  const std::shared_ptr<const Mesh<Dim>>& mesh_ptr() const { return mesh_; }
  int degree() const { return degree_; }
  Index n_dofs() const { return static_cast<Index>(vertex_of_dof_.size()); }
  Index dof(Index vertex) const { return dof_of_vertex_[vertex]; }
  Index vertex_of_dof(Index d) const { return vertex_of_dof_[d]; }

  std::array<Index, Dim + 1> cell_dofs(Index c) const {
    std::array<Index, Dim + 1> d;
    for (int i = 0; i <= Dim; ++i) d[i] = dof_of_vertex_[mesh_->cell(c)[i]];
    return d;
  }

  /// Vertex values of a coefficient vector on cell c (zero on the boundary).
  Local cell_values(const Vector& coeffs, Index c) const {
    Local v;
    const auto d = cell_dofs(c);
    for (int i = 0; i <= Dim; ++i) v[i] = d[i] >= 0 ? coeffs[d[i]] : 0.0;
    return v;
  }

  static Point gradient(const CellGeometry<Dim>& g, const Local& values) {
    Point grad = Point::Zero();
    for (int i = 0; i <= Dim; ++i) grad += values[i] * g.grad_bary[i];
    return grad;
  }

  double evaluate(const Vector& coeffs, const Point& x) const {
    const auto [c, b] = locate(*mesh_, x);
    return cell_values(coeffs, c).dot(b);
  }

  /// Nodal interpolant (boundary values dropped).
  Vector interpolate(const std::function<double(const Point&)>& f) const {
    Vector v(n_dofs());
    for (Index d = 0; d < n_dofs(); ++d) v[d] = f(mesh_->vertex(vertex_of_dof_[d]));
    return v;
  }

private:
  std::shared_ptr<const Mesh<Dim>> mesh_;
  int degree_;
  std::vector<Index> dof_of_vertex_;
  std::vector<Index> vertex_of_dof_;
};

namespace detail {

template <int Dim, typename LocalMatrix>
SparseOperator assemble(const FeSpace<Dim>& space, LocalMatrix&& local) {
  std::vector<Eigen::Triplet<double>> triplets;
  const auto& mesh = space.mesh();
  triplets.reserve(static_cast<std::size_t>(mesh.n_cells()) * (Dim + 1) * (Dim + 1));
  for (Index c = 0; c < mesh.n_cells(); ++c) {
    const auto g = mesh.geometry(c);
    const auto d = space.cell_dofs(c);
    const Eigen::Matrix<double, Dim + 1, Dim + 1> m = local(g);
    for (int i = 0; i <= Dim; ++i) {
      if (d[i] < 0) continue;
      for (int j = 0; j <= Dim; ++j)
        if (d[j] >= 0) triplets.emplace_back(d[i], d[j], m(i, j));
    }
  }
  SparseOperator A(space.n_dofs(), space.n_dofs());
  A.setFromTriplets(triplets.begin(), triplets.end());
  return A;
}

}  // namespace detail

template <int Dim>
SparseOperator assemble_stiffness(const FeSpace<Dim>& space) {
  return detail::assemble(space, [](const CellGeometry<Dim>& g) {
    Eigen::Matrix<double, Dim + 1, Dim + 1> m;
    for (int i = 0; i <= Dim; ++i)
      for (int j = 0; j <= Dim; ++j) m(i, j) = g.measure * g.grad_bary[i].dot(g.grad_bary[j]);
    return m;
  });
}

template <int Dim>
SparseOperator assemble_mass(const FeSpace<Dim>& space) {
  return detail::assemble(space, [](const CellGeometry<Dim>& g) {
    // int_K lambda_i lambda_j = |K| (1 + delta_ij) / ((d+1)(d+2))
    Eigen::Matrix<double, Dim + 1, Dim + 1> m;
    m.setConstant(g.measure / ((Dim + 1) * (Dim + 2)));
    m.diagonal() *= 2.0;
    return m;
  });
}

/// b_i = int f phi_i with a rule of the given exactness.
template <int Dim>
Vector assemble_load(const FeSpace<Dim>& space,
                     const std::function<double(const typename Mesh<Dim>::Point&)>& f,
                     int degree = kDefaultQuadratureDegree) {
  const auto rule = simplex_rule<Dim>(degree);
  const auto& mesh = space.mesh();
  Vector b = Vector::Zero(space.n_dofs());
  for (Index c = 0; c < mesh.n_cells(); ++c) {
    const auto g = mesh.geometry(c);
    const auto d = space.cell_dofs(c);
    for (int q = 0; q < rule.size(); ++q) {
      const double w = rule.weights[q] * g.measure * (Dim == 1 ? 1.0 : 2.0);
      const double fv = f(g.map(rule.points[q]));
      for (int i = 0; i <= Dim; ++i)
        if (d[i] >= 0) b[d[i]] += w * fv * rule.points[q][i];
    }
  }
  return b;
}

/// Jacobi-preconditioned conjugate gradients.
inline Vector solve_spd(const SparseOperator& op, const Vector& rhs, const SolverOptions& opts = {}) {
  if (op.rows() != op.cols() || op.rows() != rhs.size())
    throw std::invalid_argument("solve_spd: dimension mismatch");
  if (rhs.size() == 0) return Vector();
  Eigen::ConjugateGradient<SparseOperator, Eigen::Lower | Eigen::Upper,
                           Eigen::DiagonalPreconditioner<double>>
      cg;
  cg.setTolerance(opts.tol);
  cg.setMaxIterations(opts.max_iters > 0 ? opts.max_iters : 10 * static_cast<Index>(op.rows()));
  cg.compute(op);
  Vector x = cg.solve(rhs);
  const double bnorm = rhs.norm();
  const double rel = bnorm > 0.0 ? (op * x - rhs).norm() / bnorm : 0.0;
  if (cg.info() != Eigen::Success && !(rel <= opts.tol))
    throw NumericFailure("solve_spd: CG did not converge after " +
                             std::to_string(cg.iterations()) + " iterations",
                         rel);
  return x;
}

/// Global L2 projection onto the space.
template <int Dim>
Vector l2_project(const FeSpace<Dim>& space,
                  const std::function<double(const typename Mesh<Dim>::Point&)>& f,
                  const SolverOptions& opts = {}, int degree = kDefaultQuadratureDegree) {
  return solve_spd(assemble_mass(space), assemble_load(space, f, degree), opts);
}

/// Lower bound for the H1-stability constant of the L2 projection.
///
/// Maximizes |grad P v| / |grad v| over v in the space built on the mesh
/// refined `n_refinements` times. Since the coarse space is nested in the fine
/// one the result is always >= 1.
struct ProjectionStability {
  double value = 1.0;
  int iterations = 0;
  bool converged = false;
};

template <int Dim>
ProjectionStability estimate_projection_stability(const FeSpace<Dim>& space, int n_refinements,
                                                  int max_iterations = 500, double tol = 1e-10) {
  if (n_refinements < 1)
    throw std::invalid_argument("estimate_projection_stability: need at least one refinement");
  // Prolongation coarse -> fine, composed over the refinement levels (vertex based).
  auto fine_mesh = std::make_shared<Mesh<Dim>>(space.mesh());
  Eigen::SparseMatrix<double> vertex_prolong(space.mesh().n_vertices(), space.mesh().n_vertices());
  vertex_prolong.setIdentity();
  for (int r = 0; r < n_refinements; ++r) {
    auto ref = refine_with_parents(*fine_mesh);
    std::vector<Eigen::Triplet<double>> t;
    for (Index v = 0; v < ref.fine.n_vertices(); ++v) {
      const auto [a, b] = ref.vertex_parents[v];
      if (a == b) {
        t.emplace_back(v, a, 1.0);
      } else {
        t.emplace_back(v, a, 0.5);
        t.emplace_back(v, b, 0.5);
      }
    }
    Eigen::SparseMatrix<double> step(ref.fine.n_vertices(), fine_mesh->n_vertices());
    step.setFromTriplets(t.begin(), t.end());
    vertex_prolong = (step * vertex_prolong).pruned();
    fine_mesh = std::make_shared<Mesh<Dim>>(std::move(ref.fine));
  }
  const FeSpace<Dim> fine(fine_mesh);
  // Restrict the vertex prolongation to dofs.
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < vertex_prolong.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(vertex_prolong, k); it; ++it) {
      const Index fd = fine.dof(static_cast<Index>(it.row()));
      const Index cd = space.dof(static_cast<Index>(it.col()));
      if (fd >= 0 && cd >= 0) t.emplace_back(fd, cd, it.value());
    }
  SparseOperator P(fine.n_dofs(), space.n_dofs());
  P.setFromTriplets(t.begin(), t.end());

  const SparseOperator Mc = assemble_mass(space), Ac = assemble_stiffness(space);
  const SparseOperator Mf = assemble_mass(fine), Af = assemble_stiffness(fine);
  SolverOptions inner{1e-13, 0};

  // Rayleigh quotient y^T K y / y^T Af y with K = Mf P Mc^-1 Ac Mc^-1 P^T Mf.
  auto apply_k = [&](const Vector& y) {
    const Vector x = solve_spd(Mc, P.transpose() * (Mf * y), inner);
    return Vector(Mf * (P * (Ac * x)));
  };
  ProjectionStability out;
  if (space.n_dofs() == 0 || fine.n_dofs() == 0) return out;
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vector y(fine.n_dofs());
  for (Index i = 0; i < y.size(); ++i) y[i] = dist(rng);
  double lambda = 0.0;
  for (int it = 1; it <= max_iterations; ++it) {
    y /= std::sqrt(y.dot(Af * y));
    const Vector ky = apply_k(y);
    const double next = y.dot(ky);
    y = solve_spd(Af, ky, inner);
    out.iterations = it;
    if (std::abs(next - lambda) <= tol * std::abs(next)) {
      lambda = next;
      out.converged = true;
      break;
    }
    lambda = next;
  }
  out.value = std::max(1.0, std::sqrt(lambda));
  return out;
}

}  // namespace hypercircle
