#pragma once

#include "hypercircle/rtn.hpp"
#include "hypercircle/timestepper.hpp"

#include <Eigen/LU>

#include <map>

namespace hypercircle {

/// Per-cell RTN and pressure bases plus their values at the quadrature points
/// of each cell. Shared by all patches and intervals.
template <int Dim>
class FluxDiscretization {
public:
  using Point = Eigen::Matrix<double, Dim, 1>;
  using Barycentric = Eigen::Matrix<double, Dim + 1, 1>;

  struct CellTable {
    std::vector<Point> x;
    std::vector<Barycentric> bary;
    std::vector<double> w;  // physical weights
    std::vector<Eigen::Matrix<double, Dim, Eigen::Dynamic>> phi;
    std::vector<Eigen::RowVectorXd> div;
    std::vector<Eigen::VectorXd> q;  // pressure basis
    Eigen::MatrixXd pressure_mass;
  };

  FluxDiscretization(std::shared_ptr<const Mesh<Dim>> mesh, int flux_degree, int fe_degree = 1)
      : mesh_(std::move(mesh)), degree_(flux_degree) {
    if (flux_degree < fe_degree + 1)
      throw std::invalid_argument("flux degree must be at least fe_degree + 1, got " +
                                  std::to_string(flux_degree));
    const auto rule = simplex_rule<Dim>(2 * flux_degree + 2);
    const double ref = Dim == 1 ? 1.0 : 2.0;
    for (Index c = 0; c < mesh_->n_cells(); ++c) {
      flux_.emplace_back(*mesh_, c, flux_degree);
      const auto& g = flux_.back().geometry();
      pressure_.emplace_back(g, flux_degree);
      CellTable t;
      t.pressure_mass = Eigen::MatrixXd::Zero(pressure_.back().size(), pressure_.back().size());
      for (int k = 0; k < rule.size(); ++k) {
        const Point x = g.map(rule.points[k]);
        t.x.push_back(x);
        t.bary.push_back(rule.points[k]);
        t.w.push_back(rule.weights[k] * ref * g.measure);
        t.phi.push_back(flux_.back().values(x));
        t.div.push_back(flux_.back().divergence(x));
        t.q.push_back(pressure_.back().values(x));
        t.pressure_mass += t.w.back() * t.q.back() * t.q.back().transpose();
      }
      tables_.push_back(std::move(t));
    }
  }

  const Mesh<Dim>& mesh() const { return *mesh_; }
  const std::shared_ptr<const Mesh<Dim>>& mesh_ptr() const { return mesh_; }
  int degree() const { return degree_; }
  const RtnCellBasis<Dim>& flux_basis(Index c) const { return flux_[c]; }
  const ScaledMonomialBasis<Dim>& pressure_basis(Index c) const { return pressure_[c]; }
  const CellTable& table(Index c) const { return tables_[c]; }
  int flux_size() const { return flux_.front().size(); }
  int pressure_size() const { return pressure_.front().size(); }

private:
  std::shared_ptr<const Mesh<Dim>> mesh_;
  int degree_;
  std::vector<RtnCellBasis<Dim>> flux_;
  std::vector<ScaledMonomialBasis<Dim>> pressure_;
  std::vector<CellTable> tables_;
};

/// Local mixed spaces on one vertex patch and the factorized saddle-point
/// matrix of the constrained least-squares problem.
///
/// Unknowns are ordered (flux, pressure[, zero-mean multiplier]):
///   [ A  B^T 0 ]
///   [ B  0   c ]
///   [ 0  c^T 0 ]
/// with A the flux mass matrix, B_kj = (div v_j, q_k), c_k = int q_k.
template <int Dim>
struct PatchMixedSpace {
  VertexPatch<Dim> patch;
  int flux_degree = 0;
  /// Per patch cell (in patch.cells order): local basis index -> patch flux dof, or -1.
  std::vector<std::vector<Index>> flux_map;
  Index n_flux = 0;
  Index n_pressure_raw = 0;  // broken P_k without the mean constraint
  int pressure_per_cell = 0;
  bool zero_mean = false;
  Eigen::MatrixXd flux_mass;
  Eigen::MatrixXd divergence;
  Eigen::VectorXd pressure_integrals;
  Eigen::MatrixXd kkt_matrix;
  Eigen::FullPivLU<Eigen::MatrixXd> kkt;

  Index flux_dim() const { return n_flux; }
  Index pressure_dim() const { return n_pressure_raw - (zero_mean ? 1 : 0); }
  Index kkt_size() const { return n_flux + n_pressure_raw + (zero_mean ? 1 : 0); }
};

/// Builds the patch spaces. Normal traces are removed on the whole patch
/// boundary for interior vertices, and on the part not on the domain boundary
/// for boundary vertices. Face dofs shared by two patch cells get one index.
template <int Dim>
PatchMixedSpace<Dim> build_patch_space(const FluxDiscretization<Dim>& disc,
                                       const VertexPatch<Dim>& patch) {
  const auto& mesh = disc.mesh();
  PatchMixedSpace<Dim> s;
  s.patch = patch;
  s.flux_degree = disc.degree();
  s.zero_mean = patch.is_interior;
  s.pressure_per_cell = disc.pressure_size();
  const Index nc = static_cast<Index>(patch.cells.size());
  s.n_pressure_raw = nc * s.pressure_per_cell;

  std::map<std::pair<Index, int>, Index> face_dof;
  s.flux_map.resize(nc);
  for (Index k = 0; k < nc; ++k) {
    const Index c = patch.cells[k];
    const auto& basis = disc.flux_basis(c);
    const int local_a = mesh.local_vertex(c, patch.vertex);
    auto& map = s.flux_map[k];
    map.assign(basis.size(), -1);
    const int per_face = basis.face_dofs_per_face();
    for (int i = 0; i <= Dim; ++i) {
      const Index f = mesh.cell_face(c, i);
      const bool contains_vertex = i != local_a;
      const bool on_patch_boundary = !contains_vertex || mesh.is_boundary_face(f);
      const bool constrained =
          patch.is_interior ? on_patch_boundary : (on_patch_boundary && !mesh.is_boundary_face(f));
      if (constrained) continue;
      for (int j = 0; j < per_face; ++j) {
        auto [it, inserted] = face_dof.emplace(std::make_pair(f, j), s.n_flux);
        if (inserted) ++s.n_flux;
        map[i * per_face + j] = it->second;
      }
    }
    for (int j = basis.n_face_dofs(); j < basis.size(); ++j) map[j] = s.n_flux++;
  }

  s.flux_mass = Eigen::MatrixXd::Zero(s.n_flux, s.n_flux);
  s.divergence = Eigen::MatrixXd::Zero(s.n_pressure_raw, s.n_flux);
  s.pressure_integrals = Eigen::VectorXd::Zero(s.n_pressure_raw);
  for (Index k = 0; k < nc; ++k) {
    const auto& t = disc.table(patch.cells[k]);
    const auto& map = s.flux_map[k];
    const Index p0 = k * s.pressure_per_cell;
    for (std::size_t q = 0; q < t.w.size(); ++q) {
      const Eigen::MatrixXd gram = t.w[q] * t.phi[q].transpose() * t.phi[q];
      const Eigen::MatrixXd div = t.w[q] * t.q[q] * t.div[q];
      for (std::size_t i = 0; i < map.size(); ++i) {
        if (map[i] < 0) continue;
        for (std::size_t j = 0; j < map.size(); ++j)
          if (map[j] >= 0) s.flux_mass(map[i], map[j]) += gram(i, j);
        s.divergence.block(p0, map[i], s.pressure_per_cell, 1) += div.col(i);
      }
      s.pressure_integrals.segment(p0, s.pressure_per_cell) += t.w[q] * t.q[q];
    }
  }

  const Index n = s.kkt_size();
  s.kkt_matrix = Eigen::MatrixXd::Zero(n, n);
  s.kkt_matrix.topLeftCorner(s.n_flux, s.n_flux) = s.flux_mass;
  s.kkt_matrix.block(s.n_flux, 0, s.n_pressure_raw, s.n_flux) = s.divergence;
  s.kkt_matrix.block(0, s.n_flux, s.n_flux, s.n_pressure_raw) = s.divergence.transpose();
  if (s.zero_mean) {
    s.kkt_matrix.block(s.n_flux, n - 1, s.n_pressure_raw, 1) = s.pressure_integrals;
    s.kkt_matrix.block(n - 1, s.n_flux, 1, s.n_pressure_raw) = s.pressure_integrals.transpose();
  }
  s.kkt.compute(s.kkt_matrix);
  if (s.kkt.rank() != n)
    throw IntegrityFailure("patch of vertex " + std::to_string(patch.vertex) +
                           ": singular saddle-point matrix (rank " + std::to_string(s.kkt.rank()) +
                           " of " + std::to_string(n) + ")");
  return s;
}

/// Right-hand side of one patch problem on interval n.
template <int Dim>
struct PatchRhs {
  /// g restricted to each patch cell, in the pressure basis of that cell.
  std::vector<Eigen::VectorXd> g;
  /// -(psi_a grad u_{h,tau,n}, v_i) for each patch flux dof.
  Eigen::VectorXd flux_load;
  /// (g, q_k) for each raw pressure basis function.
  Eigen::VectorXd pressure_load;
  double integral = 0.0;  // int_{omega_a} g
  double norm = 0.0;      // ||g||_{omega_a}
  double patch_measure = 0.0;

  /// |int g| relative to its Cauchy-Schwarz bound sqrt|omega_a| ||g||.
  double compatibility_defect() const {
    const double bound = std::sqrt(patch_measure) * norm;
    return bound > 0.0 ? std::abs(integral) / bound : 0.0;
  }
};

/// g = psi_a f_{h,tau,n} - psi_a d_t U_{h,tau}|_{I_n} - grad psi_a . grad u_{h,tau,n}.
template <int Dim>
PatchRhs<Dim> assemble_patch_rhs(const FluxDiscretization<Dim>& disc,
                                 const SpaceTimeSolution<Dim>& sol,
                                 const PatchMixedSpace<Dim>& space, Index n) {
  const auto& mesh = disc.mesh();
  const auto& fe = *sol.space;
  const double tau = sol.grid.tau(n);
  PatchRhs<Dim> rhs;
  rhs.flux_load = Eigen::VectorXd::Zero(space.n_flux);
  rhs.pressure_load = Eigen::VectorXd::Zero(space.n_pressure_raw);
  double norm2 = 0.0;
  for (std::size_t k = 0; k < space.patch.cells.size(); ++k) {
    const Index c = space.patch.cells[k];
    const auto& t = disc.table(c);
    const auto& g = disc.flux_basis(c).geometry();
    const int la = mesh.local_vertex(c, space.patch.vertex);
    const auto un = fe.cell_values(sol.u(n), c);
    const auto dudt = ((un - fe.cell_values(sol.u(n - 1), c)) / tau).eval();
    const auto grad_u = FeSpace<Dim>::gradient(g, un);
    const double grad_psi_dot_grad_u = g.grad_bary[la].dot(grad_u);
    const auto frow = sol.f(n).row(c);
    const auto& map = space.flux_map[k];
    Eigen::VectorXd moments = Eigen::VectorXd::Zero(t.q.front().size());
    for (std::size_t q = 0; q < t.w.size(); ++q) {
      const double psi = t.bary[q][la];
      const double gval = psi * frow.dot(t.bary[q]) - psi * dudt.dot(t.bary[q]) - grad_psi_dot_grad_u;
      moments += t.w[q] * gval * t.q[q];
      rhs.integral += t.w[q] * gval;
      norm2 += t.w[q] * gval * gval;
      const Eigen::RowVectorXd load = -(t.w[q] * psi) * grad_u.transpose() * t.phi[q];
      for (std::size_t i = 0; i < map.size(); ++i)
        if (map[i] >= 0) rhs.flux_load[map[i]] += load[i];
    }
    rhs.pressure_load.segment(k * space.pressure_per_cell, space.pressure_per_cell) = moments;
    rhs.g.push_back(t.pressure_mass.ldlt().solve(moments));
    rhs.patch_measure += g.measure;
  }
  rhs.norm = std::sqrt(norm2);
  return rhs;
}

/// Minimizer of ||v + psi_a grad u||_{omega_a} over the patch flux space
/// subject to div v = g.
template <int Dim>
struct PatchFlux {
  Eigen::VectorXd coefficients;          // patch flux dofs
  std::vector<Eigen::VectorXd> per_cell;  // local RTN coefficients, patch.cells order
  Eigen::VectorXd pressure;
  double multiplier = 0.0;  // equals the mean of g when the zero-mean row is active
};

template <int Dim>
PatchFlux<Dim> solve_patch(const PatchMixedSpace<Dim>& space, const PatchRhs<Dim>& rhs) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(space.kkt_size());
  b.head(space.n_flux) = rhs.flux_load;
  b.segment(space.n_flux, space.n_pressure_raw) = rhs.pressure_load;
  const Eigen::VectorXd x = space.kkt.solve(b);
  PatchFlux<Dim> out;
  out.coefficients = x.head(space.n_flux);
  out.pressure = x.segment(space.n_flux, space.n_pressure_raw);
  if (space.zero_mean) out.multiplier = x[space.kkt_size() - 1];
  for (const auto& map : space.flux_map) {
    Eigen::VectorXd local = Eigen::VectorXd::Zero(static_cast<Index>(map.size()));
    for (std::size_t i = 0; i < map.size(); ++i)
      if (map[i] >= 0) local[i] = out.coefficients[map[i]];
    out.per_cell.push_back(std::move(local));
  }
  return out;
}

/// Piecewise-constant-in-time flux: per interval, one row of local RTN
/// coefficients per cell.
template <int Dim>
struct EquilibratedFlux {
  using Point = Eigen::Matrix<double, Dim, 1>;

  std::shared_ptr<const FluxDiscretization<Dim>> disc;
  TimeGrid grid;
  std::vector<Eigen::MatrixXd> per_interval;  // index n - 1
  /// Largest relative compatibility defect over interior patches and intervals.
  double max_compatibility_defect = 0.0;

  const Eigen::MatrixXd& coefficients(Index n) const { return per_interval[n - 1]; }

  Point value(Index n, Index cell, const Point& x) const {
    return disc->flux_basis(cell).values(x) * coefficients(n).row(cell).transpose();
  }
  double divergence(Index n, Index cell, const Point& x) const {
    return disc->flux_basis(cell).divergence(x).dot(coefficients(n).row(cell));
  }
};

struct EquilibrationOptions {
  int flux_degree = 2;
  int threads = 1;
  /// Interior patches whose relative compatibility defect exceeds this abort
  /// the construction: the discrete solve did not satisfy its own equations.
  double compatibility_tol = 1e-8;
};

/// Sums the patch minimizers over all vertices, interval by interval. Patch
/// matrices are factorized once. Each cell accumulates its vertex
/// contributions in ascending vertex order.
template <int Dim>
EquilibratedFlux<Dim> build_global_flux(const SpaceTimeSolution<Dim>& sol,
                                        const EquilibrationOptions& opts = {}) {
  const auto& mesh_ptr = sol.space->mesh_ptr();
  const auto& mesh = *mesh_ptr;
  auto disc = std::make_shared<const FluxDiscretization<Dim>>(mesh_ptr, opts.flux_degree,
                                                              sol.space->degree());
  const auto patches = vertex_patches(mesh);
  const unsigned threads = resolve_threads(opts.threads);
  const Index nv = mesh.n_vertices();

  std::vector<std::unique_ptr<PatchMixedSpace<Dim>>> spaces(nv);
  parallel_for(nv, threads, [&](Index a) {
    spaces[a] = std::make_unique<PatchMixedSpace<Dim>>(build_patch_space(*disc, patches[a]));
  });

  EquilibratedFlux<Dim> flux{disc, sol.grid, {}, 0.0};
  const int nloc = disc->flux_size();
  std::vector<PatchFlux<Dim>> results(nv);
  std::vector<double> defects(nv, 0.0);
  for (Index n = 1; n <= sol.n_intervals(); ++n) {
    parallel_for(nv, threads, [&](Index a) {
      const auto rhs = assemble_patch_rhs(*disc, sol, *spaces[a], n);
      defects[a] = patches[a].is_interior ? rhs.compatibility_defect() : 0.0;
      results[a] = solve_patch(*spaces[a], rhs);
    });
    for (Index a = 0; a < nv; ++a) {
      if (defects[a] > opts.compatibility_tol)
        throw IntegrityFailure("vertex " + std::to_string(a) + ", interval " + std::to_string(n) +
                               ": source of the patch problem is not mean-free (relative defect " +
                               std::to_string(defects[a]) + ")");
      flux.max_compatibility_defect = std::max(flux.max_compatibility_defect, defects[a]);
    }
    Eigen::MatrixXd coeffs = Eigen::MatrixXd::Zero(mesh.n_cells(), nloc);
    for (Index c = 0; c < mesh.n_cells(); ++c) {
      auto verts = mesh.cell(c);
      std::sort(verts.begin(), verts.end());
      for (Index a : verts) {
        const auto& cells = patches[a].cells;
        const auto pos = std::lower_bound(cells.begin(), cells.end(), c) - cells.begin();
        coeffs.row(c) += results[a].per_cell[pos].transpose();
      }
    }
    flux.per_interval.push_back(std::move(coeffs));
  }
  return flux;
}

// ---------------------------------------------------------------------------
// Checks

struct ResidualCheck {
  double residual = 0.0;  // largest cellwise L2 norm
  double scale = 0.0;
  double relative() const { return scale > 0.0 ? residual / scale : (residual > 0.0 ? INFINITY : 0.0); }
};

/// Cellwise ||d_t U + div sigma - f_{h,tau}||_K on interval n, scaled by
/// ||f_{h,tau,n}|| + ||d_t U||.
template <int Dim>
ResidualCheck equilibration_residual(const EquilibratedFlux<Dim>& flux,
                                     const SpaceTimeSolution<Dim>& sol, Index n) {
  const auto& disc = *flux.disc;
  const auto& fe = *sol.space;
  ResidualCheck out;
  double f2 = 0.0, d2 = 0.0;
  const Eigen::VectorXd dudt_coeffs = time_derivative_affine(sol, n);
  for (Index c = 0; c < disc.mesh().n_cells(); ++c) {
    const auto& t = disc.table(c);
    const auto dudt = fe.cell_values(dudt_coeffs, c);
    const auto frow = sol.f(n).row(c);
    const Eigen::VectorXd coeff = flux.coefficients(n).row(c).transpose();
    double r2 = 0.0;
    for (std::size_t q = 0; q < t.w.size(); ++q) {
      const double fv = frow.dot(t.bary[q]);
      const double dv = dudt.dot(t.bary[q]);
      const double r = dv + t.div[q].dot(coeff) - fv;
      r2 += t.w[q] * r * r;
      f2 += t.w[q] * fv * fv;
      d2 += t.w[q] * dv * dv;
    }
    out.residual = std::max(out.residual, std::sqrt(r2));
  }
  out.scale = std::sqrt(f2) + std::sqrt(d2);
  return out;
}

/// L2 norm of the normal-trace jumps over interior faces on interval n,
/// scaled by the L2 norm of the normal traces themselves.
template <int Dim>
ResidualCheck normal_jump(const EquilibratedFlux<Dim>& flux, Index n) {
  using Point = Eigen::Matrix<double, Dim, 1>;
  const auto& mesh = flux.disc->mesh();
  const GaussLegendre gl(flux.disc->degree() + 2);
  double jump2 = 0.0, trace2 = 0.0;
  for (Index f = 0; f < mesh.n_faces(); ++f) {
    const auto [c0, c1] = mesh.face_cells(f);
    const auto& face = mesh.face(f);
    const auto& basis = flux.disc->flux_basis(c0);
    int local = 0;
    for (int i = 0; i <= Dim; ++i)
      if (mesh.cell_face(c0, i) == f) local = i;
    const Point normal = basis.face_normal(local);
    auto accumulate = [&](const Point& x, double w) {
      const double v0 = flux.value(n, c0, x).dot(normal);
      const double v1 = c1 >= 0 ? flux.value(n, c1, x).dot(normal) : v0;
      trace2 += w * 0.5 * (v0 * v0 + v1 * v1);
      if (c1 >= 0) jump2 += w * (v0 - v1) * (v0 - v1);
    };
    if constexpr (Dim == 1) {
      accumulate(mesh.vertex(face[0]), 1.0);
    } else {
      const Point a = mesh.vertex(face[0]), b = mesh.vertex(face[1]);
      const double len = (b - a).norm();
      for (int q = 0; q < gl.size(); ++q) accumulate(a + gl.nodes[q] * (b - a), gl.weights[q] * len);
    }
  }
  return {std::sqrt(jump2), std::sqrt(trace2)};
}

}  // namespace hypercircle
