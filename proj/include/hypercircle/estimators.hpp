#pragma once

#include "hypercircle/equilibration.hpp"

#include <cstdint>
#include <optional>
#include <random>

namespace hypercircle {

/// Analytic solution of d_t u - Laplace u = f with homogeneous Dirichlet data.
template <int Dim>
struct ExactSolution {
  using Point = Eigen::Matrix<double, Dim, 1>;

  std::function<double(const Point&, double)> u;
  std::function<Point(const Point&, double)> grad_u;
  std::function<double(const Point&, double)> f;
  std::function<double(const Point&, double)> laplacian;

  double u0(const Point& x) const { return u(x, 0.0); }

  ProblemSpec<Dim> problem() const {
    return {[u = u](const Point& x) { return u(x, 0.0); }, f};
  }
};

/// Largest |d_t u - Laplace u - f| over `samples` random points of
/// [0, 1]^Dim x [0, T], with d_t u by central differences.
template <int Dim>
double consistency_defect(const ExactSolution<Dim>& exact, double T = 1.0, int samples = 20,
                          std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double dt = 1e-5;
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    typename ExactSolution<Dim>::Point x;
    for (int k = 0; k < Dim; ++k) x[k] = unit(rng);
    const double t = dt + unit(rng) * (T - 2.0 * dt);
    const double ut = (exact.u(x, t + dt) - exact.u(x, t - dt)) / (2.0 * dt);
    worst = std::max(worst, std::abs(ut - exact.laplacian(x, t) - exact.f(x, t)));
  }
  return worst;
}

/// Quadrature points and physical weights of every cell.
template <int Dim>
struct CellQuadrature {
  using Point = Eigen::Matrix<double, Dim, 1>;
  using Barycentric = Eigen::Matrix<double, Dim + 1, 1>;

  struct Cell {
    CellGeometry<Dim> geometry;
    std::vector<Point> x;
    std::vector<Barycentric> bary;
    std::vector<double> w;
  };
  std::vector<Cell> cells;

  CellQuadrature(const Mesh<Dim>& mesh, int degree) {
    const auto rule = simplex_rule<Dim>(degree);
    const double ref = Dim == 1 ? 1.0 : 2.0;
    cells.reserve(mesh.n_cells());
    for (Index c = 0; c < mesh.n_cells(); ++c) {
      Cell cell{mesh.geometry(c), {}, {}, {}};
      for (int q = 0; q < rule.size(); ++q) {
        cell.x.push_back(cell.geometry.map(rule.points[q]));
        cell.bary.push_back(rule.points[q]);
        cell.w.push_back(rule.weights[q] * ref * cell.geometry.measure);
      }
      cells.push_back(std::move(cell));
    }
  }
};

inline constexpr int kErrorQuadratureDegree = 10;
inline constexpr int kTimeGaussPoints = 5;

/// Per-interval 1/4 int_{I_n} ||grad(u_{h,tau} - U_{h,tau})||^2 via the closed form
/// (tau_n / 12) (u_n - u_{n-1})^T A (u_n - u_{n-1}); cross-checked against
/// cellwise gradients integrated by 2-point Gauss in time.
template <int Dim>
std::vector<double> jump_estimator(const SpaceTimeSolution<Dim>& sol) {
  const auto& fe = *sol.space;
  const auto& mesh = fe.mesh();
  const GaussLegendre gl(2);
  std::vector<double> out(sol.n_intervals());
  for (Index n = 1; n <= sol.n_intervals(); ++n) {
    const double tau = sol.grid.tau(n);
    const Vector delta = sol.u(n) - sol.u(n - 1);
    const double closed = 0.25 * (tau / 3.0) * delta.dot((*sol.stiffness) * delta);
    double spatial = 0.0;
    for (Index c = 0; c < mesh.n_cells(); ++c) {
      const auto g = mesh.geometry(c);
      spatial += g.measure * FeSpace<Dim>::gradient(g, fe.cell_values(delta, c)).squaredNorm();
    }
    double quad = 0.0;
    for (int j = 0; j < gl.size(); ++j)
      quad += gl.weights[j] * tau * (1.0 - gl.nodes[j]) * (1.0 - gl.nodes[j]) * spatial;
    quad *= 0.25;
    if (std::abs(quad - closed) > 1e-12 * std::max(std::abs(closed), 1e-300) &&
        std::abs(quad - closed) > 1e-300)
      throw IntegrityFailure("jump_estimator: closed form " + std::to_string(closed) +
                             " disagrees with quadrature " + std::to_string(quad) +
                             " on interval " + std::to_string(n));
    out[n - 1] = closed;
  }
  return out;
}

/// int_{I_n} ||sigma + grad w||^2 for the three reconstructions w.
struct FluxEstimates {
  double midpoint = 0.0;  // w = bar u_{h,tau}: the estimator
  double constant = 0.0;  // w = u_{h,tau}
  double affine = 0.0;    // w = U_{h,tau}
};

/// Exact in time (2-point Gauss; the integrand is quadratic in t), spatial
/// rule of degree 2 p + 2 for flux degree p.
template <int Dim>
std::vector<FluxEstimates> flux_estimator(const SpaceTimeSolution<Dim>& sol,
                                          const EquilibratedFlux<Dim>& flux, int threads = 1) {
  using Point = Eigen::Matrix<double, Dim, 1>;
  const auto& disc = *flux.disc;
  const auto& fe = *sol.space;
  const GaussLegendre gl(2);
  std::vector<FluxEstimates> out(sol.n_intervals());
  parallel_for(sol.n_intervals(), resolve_threads(threads), [&](Index i) {
    const Index n = i + 1;
    const double tau = sol.grid.tau(n);
    FluxEstimates e;
    for (Index c = 0; c < disc.mesh().n_cells(); ++c) {
      const auto& t = disc.table(c);
      const auto& g = disc.flux_basis(c).geometry();
      const Point gn = FeSpace<Dim>::gradient(g, fe.cell_values(sol.u(n), c));
      const Point gp = FeSpace<Dim>::gradient(g, fe.cell_values(sol.u(n - 1), c));
      const Eigen::VectorXd coeff = flux.coefficients(n).row(c).transpose();
      for (std::size_t q = 0; q < t.w.size(); ++q) {
        const Point sigma = t.phi[q] * coeff;
        for (int j = 0; j < gl.size(); ++j) {
          const double w = t.w[q] * gl.weights[j] * tau;
          const Point affine = gp + gl.nodes[j] * (gn - gp);
          e.midpoint += w * (sigma + 0.5 * (gn + affine)).squaredNorm();
          e.constant += w * (sigma + gn).squaredNorm();
          e.affine += w * (sigma + affine).squaredNorm();
        }
      }
    }
    out[i] = e;
  });
  return out;
}

/// Computable upper surrogates for the data oscillation.
///
/// On each cell the residual r = f - f_{h,tau} is split into its mean m_K and
/// the mean-free rest; for phi in H_0^1,
///   <r, phi> <= [ sqrt(sum_K (h_K/pi)^2 ||r - m_K||_K^2) + C_F ||m|| ] ||grad phi||
/// with the Payne-Weinberger constant h_K/pi on convex cells and the
/// Friedrichs constant C_F of the bounding box. Integrating A(t)^2 in time and
/// adding ||u_0 - u_{h,tau,0}|| bounds the oscillation term of the upper bound.
struct OscillationReport {
  double osc_upper = 0.0;
  double initial = 0.0;               // ||u_0 - u_{h,tau,0}||
  std::vector<double> per_interval;   // int_{I_n} A(t)^2 dt
  /// (h_{omega_a}/pi)^2 ||f - f_{h,tau}||^2_{L2(omega_a x I_n)}, indexed [n - 1][a].
  std::vector<std::vector<double>> patch_sq;
};

template <int Dim>
double friedrichs_constant(const Mesh<Dim>& mesh) {
  const auto extent = mesh.bounding_box_extent();
  double s = 0.0;
  for (int k = 0; k < Dim; ++k) s += 1.0 / (extent[k] * extent[k]);
  return 1.0 / (M_PI * std::sqrt(s));
}

template <int Dim>
OscillationReport oscillation_surrogate(const SpaceTimeSolution<Dim>& sol,
                                        const ExactSolution<Dim>& exact, int threads = 1) {
  const auto& fe = *sol.space;
  const auto& mesh = fe.mesh();
  const CellQuadrature<Dim> quad(mesh, kErrorQuadratureDegree);
  const GaussLegendre gl(kTimeGaussPoints);
  const double cf = friedrichs_constant(mesh);
  const auto patches = vertex_patches(mesh);
  OscillationReport rep;
  rep.per_interval.assign(sol.n_intervals(), 0.0);
  rep.patch_sq.assign(sol.n_intervals(), std::vector<double>(mesh.n_vertices(), 0.0));

  parallel_for(sol.n_intervals(), resolve_threads(threads), [&](Index i) {
    const Index n = i + 1;
    const double tau = sol.grid.tau(n), t0 = sol.grid.node(n - 1);
    const auto& fh = sol.f(n);
    std::vector<double> cell_sq(mesh.n_cells(), 0.0);
    double total = 0.0;
    for (int j = 0; j < gl.size(); ++j) {
      const double t = t0 + gl.nodes[j] * tau;
      double rest = 0.0, mean = 0.0;
      for (Index c = 0; c < mesh.n_cells(); ++c) {
        const auto& cq = quad.cells[c];
        double r1 = 0.0, r2 = 0.0;
        for (std::size_t q = 0; q < cq.w.size(); ++q) {
          const double r = exact.f(cq.x[q], t) - fh.row(c).dot(cq.bary[q]);
          r1 += cq.w[q] * r;
          r2 += cq.w[q] * r * r;
        }
        const double m = r1 / cq.geometry.measure;
        const double hk = cq.geometry.diameter / M_PI;
        rest += hk * hk * std::max(0.0, r2 - m * r1);
        mean += m * r1;
        cell_sq[c] += gl.weights[j] * tau * r2;
      }
      const double a = std::sqrt(rest) + cf * std::sqrt(std::max(0.0, mean));
      total += gl.weights[j] * tau * a * a;
    }
    rep.per_interval[i] = total;
    for (const auto& p : patches) {
      double s = 0.0;
      for (Index c : p.cells) s += cell_sq[c];
      rep.patch_sq[i][p.vertex] = (p.diameter / M_PI) * (p.diameter / M_PI) * s;
    }
  });

  double init2 = 0.0;
  for (Index c = 0; c < mesh.n_cells(); ++c) {
    const auto& cq = quad.cells[c];
    const auto uh = fe.cell_values(sol.u(0), c);
    for (std::size_t q = 0; q < cq.w.size(); ++q) {
      const double e = exact.u0(cq.x[q]) - uh.dot(cq.bary[q]);
      init2 += cq.w[q] * e * e;
    }
  }
  rep.initial = std::sqrt(init2);
  double sum = 0.0;
  for (double v : rep.per_interval) sum += v;
  rep.osc_upper = std::sqrt(sum) + rep.initial;
  return rep;
}

/// Squared pieces of the energy errors of all three reconstructions.
/// ||u - w||_E^2 = final_sq + sum_n X_sq(w)[n], with final_sq = 1/2 ||u(T) - u_N||^2
/// shared by all three since they agree at T.
struct EnergyErrors {
  double final_sq = 0.0;
  std::vector<double> x_const, x_affine, x_mid;  // int_{I_n} ||grad(u - w)||^2

  static double sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  double energy(ReconstructionKind k) const {
    switch (k) {
      case ReconstructionKind::piecewise_constant: return std::sqrt(final_sq + sum(x_const));
      case ReconstructionKind::piecewise_affine: return std::sqrt(final_sq + sum(x_affine));
      case ReconstructionKind::midpoint: break;
    }
    return std::sqrt(final_sq + sum(x_mid));
  }
  double x_norm(ReconstructionKind k) const {
    switch (k) {
      case ReconstructionKind::piecewise_constant: return std::sqrt(sum(x_const));
      case ReconstructionKind::piecewise_affine: return std::sqrt(sum(x_affine));
      case ReconstructionKind::midpoint: break;
    }
    return std::sqrt(sum(x_mid));
  }
  /// ||u - u_{h,tau}||_E + ||u - U_{h,tau}||_E
  double quantifier() const {
    return energy(ReconstructionKind::piecewise_constant) +
           energy(ReconstructionKind::piecewise_affine);
  }
};

/// 5-point Gauss per interval in time, degree-10 rule in space.
template <int Dim>
EnergyErrors energy_errors(const SpaceTimeSolution<Dim>& sol, const ExactSolution<Dim>& exact,
                           int threads = 1) {
  using Point = Eigen::Matrix<double, Dim, 1>;
  const auto& fe = *sol.space;
  const auto& mesh = fe.mesh();
  const CellQuadrature<Dim> quad(mesh, kErrorQuadratureDegree);
  const GaussLegendre gl(kTimeGaussPoints);
  EnergyErrors out;
  const Index N = sol.n_intervals();
  out.x_const.assign(N, 0.0);
  out.x_affine.assign(N, 0.0);
  out.x_mid.assign(N, 0.0);
  parallel_for(N, resolve_threads(threads), [&](Index i) {
    const Index n = i + 1;
    const double tau = sol.grid.tau(n), t0 = sol.grid.node(n - 1);
    double xc = 0.0, xa = 0.0, xm = 0.0;
    for (Index c = 0; c < mesh.n_cells(); ++c) {
      const auto& cq = quad.cells[c];
      const Point gn = FeSpace<Dim>::gradient(cq.geometry, fe.cell_values(sol.u(n), c));
      const Point gp = FeSpace<Dim>::gradient(cq.geometry, fe.cell_values(sol.u(n - 1), c));
      for (int j = 0; j < gl.size(); ++j) {
        const double s = gl.nodes[j], t = t0 + s * tau;
        const Point affine = gp + s * (gn - gp);
        const Point mid = 0.5 * (gn + affine);
        for (std::size_t q = 0; q < cq.w.size(); ++q) {
          const double w = gl.weights[j] * tau * cq.w[q];
          const Point gu = exact.grad_u(cq.x[q], t);
          xc += w * (gu - gn).squaredNorm();
          xa += w * (gu - affine).squaredNorm();
          xm += w * (gu - mid).squaredNorm();
        }
      }
    }
    out.x_const[i] = xc;
    out.x_affine[i] = xa;
    out.x_mid[i] = xm;
  });
  const double T = sol.grid.final_time();
  double fin = 0.0;
  for (Index c = 0; c < mesh.n_cells(); ++c) {
    const auto& cq = quad.cells[c];
    const auto uN = fe.cell_values(sol.u(N), c);
    for (std::size_t q = 0; q < cq.w.size(); ++q) {
      const double e = exact.u(cq.x[q], T) - uN.dot(cq.bary[q]);
      fin += cq.w[q] * e * e;
    }
  }
  out.final_sq = 0.5 * fin;
  return out;
}

template <int Dim>
double energy_error(const SpaceTimeSolution<Dim>& sol, ReconstructionKind kind,
                    const ExactSolution<Dim>& exact) {
  return energy_errors(sol, exact).energy(kind);
}

/// max over vertex patches and intervals of h_{omega_a}^2 / tau_n.
template <int Dim>
double gamma_realized(const Mesh<Dim>& mesh, const TimeGrid& grid) {
  double hmax = 0.0;
  for (const auto& p : vertex_patches(mesh)) hmax = std::max(hmax, p.diameter);
  double tmin = grid.tau(1);
  for (Index n = 2; n <= grid.n_intervals(); ++n) tmin = std::min(tmin, grid.tau(n));
  return hmax * hmax / tmin;
}

struct IntervalEstimate {
  double jump_sq = 0.0;
  double flux_sq = 0.0;
  double flux_sq_const = 0.0;
  double flux_sq_affine = 0.0;
  double osc_sq = 0.0;  // int_{I_n} A(t)^2, see OscillationReport
  double err_x_mid_sq = 0.0;
};

struct EstimatorReport {
  std::vector<IntervalEstimate> per_interval;
  double h_max = 0.0;
  double tau_max = 0.0;
  double gamma_realized = 0.0;
  double est_jump = 0.0;   // sqrt(sum jump_sq)
  double est_flux = 0.0;   // sqrt(sum flux_sq)
  double est_total = 0.0;  // sqrt(sum jump_sq + flux_sq)
  double osc_upper = 0.0;
  double osc_initial = 0.0;
  bool has_exact = false;
  double err_energy = 0.0;    // ||u - bar u_{h,tau}||_E
  double err_const_E = 0.0;   // ||u - u_{h,tau}||_E
  double err_affine_E = 0.0;  // ||u - U_{h,tau}||_E
  double err_X_const = 0.0;
  double err_X_affine = 0.0;
  double quantifier_E = 0.0;
  std::optional<double> effectivity;
  double max_compatibility_defect = 0.0;
};

/// Energy norm of the discrete solution, the data scale of the effectivity guard.
template <int Dim>
double discrete_energy(const SpaceTimeSolution<Dim>& sol) {
  const Vector& uN = sol.u(sol.n_intervals());
  double s = 0.5 * uN.dot((*sol.mass) * uN);
  for (Index n = 1; n <= sol.n_intervals(); ++n)
    s += sol.grid.tau(n) * sol.u(n).dot((*sol.stiffness) * sol.u(n));
  return std::sqrt(s);
}

template <int Dim>
EstimatorReport build_report(const SpaceTimeSolution<Dim>& sol, const EquilibratedFlux<Dim>& flux,
                             const ExactSolution<Dim>* exact, int threads = 1) {
  const auto& mesh = sol.space->mesh();
  const Index N = sol.n_intervals();
  EstimatorReport r;
  r.h_max = mesh.h_max();
  r.tau_max = sol.grid.tau_max();
  r.gamma_realized = gamma_realized(mesh, sol.grid);
  r.max_compatibility_defect = flux.max_compatibility_defect;
  r.per_interval.resize(N);
  const auto jumps = jump_estimator(sol);
  const auto fluxes = flux_estimator(sol, flux, threads);
  double sj = 0.0, sf = 0.0;
  for (Index i = 0; i < N; ++i) {
    auto& e = r.per_interval[i];
    e.jump_sq = jumps[i];
    e.flux_sq = fluxes[i].midpoint;
    e.flux_sq_const = fluxes[i].constant;
    e.flux_sq_affine = fluxes[i].affine;
    sj += e.jump_sq;
    sf += e.flux_sq;
  }
  r.est_jump = std::sqrt(sj);
  r.est_flux = std::sqrt(sf);
  r.est_total = std::sqrt(sj + sf);
  if (!exact) return r;

  r.has_exact = true;
  const auto osc = oscillation_surrogate(sol, *exact, threads);
  r.osc_upper = osc.osc_upper;
  r.osc_initial = osc.initial;
  const auto err = energy_errors(sol, *exact, threads);
  for (Index i = 0; i < N; ++i) {
    r.per_interval[i].osc_sq = osc.per_interval[i];
    r.per_interval[i].err_x_mid_sq = err.x_mid[i];
  }
  r.err_energy = err.energy(ReconstructionKind::midpoint);
  r.err_const_E = err.energy(ReconstructionKind::piecewise_constant);
  r.err_affine_E = err.energy(ReconstructionKind::piecewise_affine);
  r.err_X_const = err.x_norm(ReconstructionKind::piecewise_constant);
  r.err_X_affine = err.x_norm(ReconstructionKind::piecewise_affine);
  r.quantifier_E = err.quantifier();
  if (r.err_energy > 0.5 * r.quantifier_E * (1.0 + 1e-12) + 1e-300)
    throw IntegrityFailure("build_report: ||u - bar u||_E exceeds half the quantifier E");
  if (r.err_energy > 1e-12 * discrete_energy(sol)) r.effectivity = r.est_total / r.err_energy;
  return r;
}

struct UpperBoundCheck {
  double lhs = 0.0;  // err_energy
  double rhs = 0.0;  // est_total + osc_upper
  double margin = 0.0;
  bool pass = false;
};

inline constexpr double kUpperBoundSlack = 1e-9;

inline UpperBoundCheck verify_upper_bound(const EstimatorReport& r) {
  if (!r.has_exact) throw std::invalid_argument("verify_upper_bound: report has no exact error");
  UpperBoundCheck c;
  c.lhs = r.err_energy;
  c.rhs = r.est_total + r.osc_upper;
  c.margin = c.rhs - c.lhs;
  c.pass = c.margin >= -kUpperBoundSlack;
  return c;
}

// ---------------------------------------------------------------------------
// Residual identity for discrete test fields

/// Piecewise-affine-in-time test field with nodal values phi_0..phi_N in V_h.
using DiscreteTestField = std::vector<Vector>;

template <int Dim>
DiscreteTestField random_test_field(const SpaceTimeSolution<Dim>& sol, std::uint64_t seed,
                                    bool zero_initial = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  DiscreteTestField phi;
  for (Index n = 0; n <= sol.n_intervals(); ++n) {
    Vector v(sol.space->n_dofs());
    for (Index i = 0; i < v.size(); ++i) v[i] = dist(rng);
    if (n == 0 && zero_initial) v.setZero();
    phi.push_back(std::move(v));
  }
  return phi;
}

struct ResidualIdentity {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap() const { return std::abs(lhs - rhs); }
  double scale() const { return std::max(std::abs(lhs), std::abs(rhs)); }
};

/// Both sides of
///   1/2 int [(d_t phi, u_{h,tau} - U_{h,tau}) + (grad phi, grad(u_{h,tau} - U_{h,tau}))]
///     = B_Z(u - bar u_{h,tau}, phi) - int <f - f_{h,tau}, phi> - (u_0 - u_{h,tau,0}, phi(0))
/// with B_Z(v, phi) = (v(T), phi(T)) + int (-<d_t phi, v> + (grad phi, grad v)).
template <int Dim>
ResidualIdentity verify_residual_identity(const SpaceTimeSolution<Dim>& sol,
                                          const ExactSolution<Dim>& exact,
                                          const DiscreteTestField& phi) {
  using Point = Eigen::Matrix<double, Dim, 1>;
  const Index N = sol.n_intervals();
  if (static_cast<Index>(phi.size()) != N + 1)
    throw std::invalid_argument("verify_residual_identity: need N + 1 test field values");
  const auto& fe = *sol.space;
  const auto& mesh = fe.mesh();
  const CellQuadrature<Dim> quad(mesh, kErrorQuadratureDegree);
  const GaussLegendre gl(kTimeGaussPoints);
  const auto& M = *sol.mass;
  const auto& A = *sol.stiffness;
  ResidualIdentity out;

  // Left side: u_{h,tau} - U_{h,tau} = (1 - s) delta_n on I_n, phi = phi_{n-1} + s dphi.
  for (Index n = 1; n <= N; ++n) {
    const double tau = sol.grid.tau(n);
    const Vector delta = sol.u(n) - sol.u(n - 1);
    const Vector dphi = phi[n] - phi[n - 1];
    const Vector Md = M * delta, Ad = A * delta;
    for (int j = 0; j < gl.size(); ++j) {
      const double s = gl.nodes[j];
      const Vector ph = phi[n - 1] + s * dphi;
      out.lhs += 0.5 * gl.weights[j] * tau * (1.0 - s) * (dphi.dot(Md) / tau + ph.dot(Ad));
    }
  }

  // Right side.
  double rhs = 0.0;
  const double T = sol.grid.final_time();
  for (Index c = 0; c < mesh.n_cells(); ++c) {
    const auto& cq = quad.cells[c];
    const auto uN = fe.cell_values(sol.u(N), c);
    const auto u0h = fe.cell_values(sol.u(0), c);
    const auto pN = fe.cell_values(phi[N], c);
    const auto p0 = fe.cell_values(phi[0], c);
    for (std::size_t q = 0; q < cq.w.size(); ++q) {
      const auto& b = cq.bary[q];
      rhs += cq.w[q] * (exact.u(cq.x[q], T) - uN.dot(b)) * pN.dot(b);
      rhs -= cq.w[q] * (exact.u0(cq.x[q]) - u0h.dot(b)) * p0.dot(b);
    }
  }
  for (Index n = 1; n <= N; ++n) {
    const double tau = sol.grid.tau(n), t0 = sol.grid.node(n - 1);
    for (Index c = 0; c < mesh.n_cells(); ++c) {
      const auto& cq = quad.cells[c];
      const auto un = fe.cell_values(sol.u(n), c);
      const auto up = fe.cell_values(sol.u(n - 1), c);
      const auto pn = fe.cell_values(phi[n], c);
      const auto pp = fe.cell_values(phi[n - 1], c);
      const auto fh = sol.f(n).row(c);
      const Point gun = FeSpace<Dim>::gradient(cq.geometry, un);
      const Point gup = FeSpace<Dim>::gradient(cq.geometry, up);
      const Point gpn = FeSpace<Dim>::gradient(cq.geometry, pn);
      const Point gpp = FeSpace<Dim>::gradient(cq.geometry, pp);
      for (int j = 0; j < gl.size(); ++j) {
        const double s = gl.nodes[j], t = t0 + s * tau;
        // bar u = u_n - (1 - s)/2 (u_n - u_{n-1})
        const double ws = 0.5 * (1.0 - s);
        const Point gbar = gun - ws * (gun - gup);
        const Point gph = gpp + s * (gpn - gpp);
        for (std::size_t q = 0; q < cq.w.size(); ++q) {
          const auto& b = cq.bary[q];
          const double w = gl.weights[j] * tau * cq.w[q];
          const double ubar = un.dot(b) - ws * (un.dot(b) - up.dot(b));
          const double v = exact.u(cq.x[q], t) - ubar;
          const double ph = pp.dot(b) + s * (pn.dot(b) - pp.dot(b));
          const double dtph = (pn.dot(b) - pp.dot(b)) / tau;
          rhs += w * (-dtph * v + gph.dot(exact.grad_u(cq.x[q], t) - gbar));
          rhs -= w * (exact.f(cq.x[q], t) - fh.dot(b)) * ph;
        }
      }
    }
  }
  out.rhs = rhs;
  return out;
}

}  // namespace hypercircle
