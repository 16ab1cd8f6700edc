#pragma once

#include "hypercircle/fem.hpp"

#include <cmath>
#include <string>

namespace hypercircle {

/// Strictly increasing time nodes 0 = t_0 < ... < t_N = T.
class TimeGrid {
public:
  explicit TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.size() < 2) throw std::invalid_argument("TimeGrid: need at least one interval");
    if (nodes_.front() != 0.0) throw std::invalid_argument("TimeGrid: t_0 must be 0");
    for (std::size_t i = 1; i < nodes_.size(); ++i)
      if (!(nodes_[i] > nodes_[i - 1]))
        throw std::invalid_argument("TimeGrid: nodes must be strictly increasing");
  }

  static TimeGrid uniform(double T, Index steps) {
    if (!(T > 0.0) || steps < 1) throw std::invalid_argument("TimeGrid::uniform: need T > 0, N >= 1");
    std::vector<double> t(steps + 1);
    for (Index n = 0; n <= steps; ++n) t[n] = T * static_cast<double>(n) / steps;
    t.back() = T;
    return TimeGrid(std::move(t));
  }

  /// Steps growing by `ratio` from one interval to the next.
  static TimeGrid geometric(double T, Index steps, double ratio) {
    if (!(T > 0.0) || steps < 1 || !(ratio > 0.0))
      throw std::invalid_argument("TimeGrid::geometric: need T > 0, N >= 1, ratio > 0");
    std::vector<double> t(steps + 1, 0.0);
    double step = 1.0, total = 0.0;
    for (Index n = 1; n <= steps; ++n) {
      total += step;
      t[n] = total;
      step *= ratio;
    }
    for (auto& x : t) x *= T / total;
    t.back() = T;
    return TimeGrid(std::move(t));
  }

  Index n_intervals() const { return static_cast<Index>(nodes_.size()) - 1; }
  double final_time() const { return nodes_.back(); }
  double node(Index n) const { return nodes_[n]; }
  const std::vector<double>& nodes() const { return nodes_; }
  /// Length of interval I_n = (t_{n-1}, t_n), n = 1..N.
  double tau(Index n) const { return nodes_[n] - nodes_[n - 1]; }
  double tau_max() const {
    double m = 0.0;
    for (Index n = 1; n <= n_intervals(); ++n) m = std::max(m, tau(n));
    return m;
  }

  /// Interval index n with t in (t_{n-1}, t_n]; 0 for t = 0 (left continuity).
  Index interval_of(double t) const {
    if (t < 0.0 || t > final_time()) throw std::invalid_argument("TimeGrid: time outside [0, T]");
    if (t == 0.0) return 0;
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t);
    return static_cast<Index>(it - nodes_.begin());
  }

private:
  std::vector<double> nodes_;
};

/// Discontinuous piecewise-P1 field: row c holds the values at the vertices of cell c.
template <int Dim>
using BrokenField = Eigen::Matrix<double, Eigen::Dynamic, Dim + 1>;

/// Cellwise L2 projection onto broken P1.
template <int Dim>
BrokenField<Dim> project_broken_p1(const Mesh<Dim>& mesh,
                                   const std::function<double(const typename Mesh<Dim>::Point&)>& f,
                                   int degree = kDefaultQuadratureDegree) {
  const auto rule = simplex_rule<Dim>(degree);
  BrokenField<Dim> out(mesh.n_cells(), Dim + 1);
  // Reference P1 mass matrix: (1 + delta_ij) / ((d+1)(d+2)) times |K|.
  Eigen::Matrix<double, Dim + 1, Dim + 1> mref;
  mref.setConstant(1.0 / ((Dim + 1) * (Dim + 2)));
  mref.diagonal() *= 2.0;
  const Eigen::Matrix<double, Dim + 1, Dim + 1> mref_inv = mref.inverse();
  for (Index c = 0; c < mesh.n_cells(); ++c) {
    const auto g = mesh.geometry(c);
    Eigen::Matrix<double, Dim + 1, 1> b = Eigen::Matrix<double, Dim + 1, 1>::Zero();
    for (int q = 0; q < rule.size(); ++q)
      b += rule.weights[q] * (Dim == 1 ? 1.0 : 2.0) * f(g.map(rule.points[q])) * rule.points[q];
    out.row(c) = (mref_inv * b).transpose();
  }
  return out;
}

template <int Dim>
struct ProblemSpec {
  using Point = typename Mesh<Dim>::Point;
  std::function<double(const Point&)> u0;
  std::function<double(const Point&, double)> f;
};

/// Nodal coefficients u_{h,tau,0..N} of the implicit Euler run together with
/// the data snapshots f_{h,tau,n} (n = 1..N, stored at index n - 1) and the
/// assembled operators they were computed with.
template <int Dim>
struct SpaceTimeSolution {
  std::shared_ptr<const FeSpace<Dim>> space;
  TimeGrid grid;
  std::vector<Vector> coefficients;
  std::vector<BrokenField<Dim>> data;
  std::shared_ptr<const SparseOperator> mass;
  std::shared_ptr<const SparseOperator> stiffness;

  Index n_intervals() const { return grid.n_intervals(); }
  const Vector& u(Index n) const { return coefficients[n]; }
  const BrokenField<Dim>& f(Index n) const { return data[n - 1]; }
};

/// Load vector (f_h, phi_i) of a broken P1 field (exact).
template <int Dim>
Vector broken_load(const FeSpace<Dim>& space, const BrokenField<Dim>& field) {
  Eigen::Matrix<double, Dim + 1, Dim + 1> mref;
  mref.setConstant(1.0 / ((Dim + 1) * (Dim + 2)));
  mref.diagonal() *= 2.0;
  const auto& mesh = space.mesh();
  Vector b = Vector::Zero(space.n_dofs());
  for (Index c = 0; c < mesh.n_cells(); ++c) {
    const double vol = mesh.cell_measure(c);
    const Eigen::Matrix<double, Dim + 1, 1> local = vol * (mref * field.row(c).transpose());
    const auto d = space.cell_dofs(c);
    for (int i = 0; i <= Dim; ++i)
      if (d[i] >= 0) b[d[i]] += local[i];
  }
  return b;
}

/// Assembles a SpaceTimeSolution around externally supplied coefficients and
/// data (validated for size only).
template <int Dim>
SpaceTimeSolution<Dim> make_solution(std::shared_ptr<const FeSpace<Dim>> space, TimeGrid grid,
                                     std::vector<Vector> coefficients,
                                     std::vector<BrokenField<Dim>> data) {
  if (static_cast<Index>(coefficients.size()) != grid.n_intervals() + 1)
    throw std::invalid_argument("make_solution: need N + 1 coefficient vectors");
  if (static_cast<Index>(data.size()) != grid.n_intervals())
    throw std::invalid_argument("make_solution: need N data snapshots");
  for (const auto& c : coefficients)
    if (c.size() != space->n_dofs()) throw std::invalid_argument("make_solution: wrong vector length");
  for (const auto& d : data)
    if (d.rows() != space->mesh().n_cells())
      throw std::invalid_argument("make_solution: wrong data snapshot size");
  auto mass = std::make_shared<const SparseOperator>(assemble_mass(*space));
  auto stiff = std::make_shared<const SparseOperator>(assemble_stiffness(*space));
  return {std::move(space), std::move(grid), std::move(coefficients), std::move(data),
          std::move(mass), std::move(stiff)};
}

/// Implicit Euler: (M / tau_n + A) u_n = (M / tau_n) u_{n-1} + (f_{h,tau,n}, phi).
/// f_{h,tau,n} is the broken-P1 projection of f(., t_n); u_{h,tau,0} = Pi_h u0.
template <int Dim>
SpaceTimeSolution<Dim> run_implicit_euler(std::shared_ptr<const FeSpace<Dim>> space,
                                          const TimeGrid& grid, const ProblemSpec<Dim>& problem,
                                          const SolverOptions& opts = {}) {
  using Point = typename Mesh<Dim>::Point;
  const auto& mesh = space->mesh();
  auto mass = std::make_shared<const SparseOperator>(assemble_mass(*space));
  auto stiff = std::make_shared<const SparseOperator>(assemble_stiffness(*space));

  std::vector<Vector> u;
  u.reserve(grid.n_intervals() + 1);
  u.push_back(solve_spd(*mass, assemble_load(*space, problem.u0), opts));

  std::vector<BrokenField<Dim>> data;
  data.reserve(grid.n_intervals());
  for (Index n = 1; n <= grid.n_intervals(); ++n) {
    const double tn = grid.node(n), tau = grid.tau(n);
    data.push_back(project_broken_p1<Dim>(mesh, [&](const Point& x) { return problem.f(x, tn); }));
    const SparseOperator lhs = (*mass) / tau + *stiff;
    const Vector rhs = (*mass) * u.back() / tau + broken_load(*space, data.back());
    try {
      u.push_back(solve_spd(lhs, rhs, opts));
    } catch (const NumericFailure& e) {
      throw NumericFailure("implicit Euler step " + std::to_string(n) + ": " + e.what(),
                           e.residual());
    }
  }
  return {std::move(space), grid, std::move(u), std::move(data), std::move(mass), std::move(stiff)};
}

/// Euclidean norm of the discrete residual of step n (n = 1..N).
template <int Dim>
double step_residual(const SpaceTimeSolution<Dim>& sol, Index n) {
  const double tau = sol.grid.tau(n);
  const Vector r = (*sol.mass) * (sol.u(n) - sol.u(n - 1)) / tau + (*sol.stiffness) * sol.u(n) -
                   broken_load(*sol.space, sol.f(n));
  return r.norm();
}

enum class ReconstructionKind { piecewise_constant, piecewise_affine, midpoint };

inline std::string to_string(ReconstructionKind k) {
  switch (k) {
    case ReconstructionKind::piecewise_constant: return "piecewise_constant";
    case ReconstructionKind::piecewise_affine: return "piecewise_affine";
    case ReconstructionKind::midpoint: return "midpoint";
  }
  return "?";
}

/// Coefficients of a reconstruction at time t. `interval` selects the side at
/// a node (interval n uses t in [t_{n-1}, t_n]); -1 picks the left-continuous value.
template <int Dim>
Vector reconstruction_at(const SpaceTimeSolution<Dim>& sol, ReconstructionKind kind, double t,
                         Index interval = -1) {
  const Index n = interval >= 0 ? interval : sol.grid.interval_of(t);
  if (n == 0) return sol.u(0);
  const double s = (t - sol.grid.node(n - 1)) / sol.grid.tau(n);
  const Vector affine = s * sol.u(n) + (1.0 - s) * sol.u(n - 1);
  switch (kind) {
    case ReconstructionKind::piecewise_constant: return sol.u(n);
    case ReconstructionKind::piecewise_affine: return affine;
    case ReconstructionKind::midpoint: return 0.5 * (sol.u(n) + affine);
  }
  return affine;
}

/// Pointwise value of a reconstruction.
template <int Dim>
double evaluate(const SpaceTimeSolution<Dim>& sol, ReconstructionKind kind, double t,
                const typename Mesh<Dim>::Point& x) {
  if (t < 0.0 || t > sol.grid.final_time())
    throw std::invalid_argument("evaluate: time outside [0, T]");
  // At t = 0 all three reconstructions equal u_{h,tau,0}.
  return sol.space->evaluate(reconstruction_at(sol, kind, t), x);
}

/// (u_n - u_{n-1}) / tau_n, the value of d/dt of the affine reconstruction on I_n.
template <int Dim>
Vector time_derivative_affine(const SpaceTimeSolution<Dim>& sol, Index n) {
  if (n < 1 || n > sol.n_intervals())
    throw std::out_of_range("time_derivative_affine: interval index out of range");
  return (sol.u(n) - sol.u(n - 1)) / sol.grid.tau(n);
}

}  // namespace hypercircle
