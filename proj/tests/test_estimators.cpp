#include "hypercircle/estimators.hpp"
#include "hypercircle/harness/catalog.hpp"

#include <gtest/gtest.h>

using namespace hypercircle;
using harness::lookup;

namespace {

using P1 = Eigen::Matrix<double, 1, 1>;

template <int Dim>
SpaceTimeSolution<Dim> solve(const ExactSolution<Dim>& exact, const Mesh<Dim>& mesh, Index steps,
                             double T = 1.0) {
  auto fe = std::make_shared<const FeSpace<Dim>>(std::make_shared<const Mesh<Dim>>(mesh));
  return run_implicit_euler<Dim>(fe, TimeGrid::uniform(T, steps), exact.problem());
}

template <int Dim>
EstimatorReport full_report(const ExactSolution<Dim>& exact, const Mesh<Dim>& mesh, Index steps) {
  const auto sol = solve(exact, mesh, steps);
  const auto flux = build_global_flux(sol);
  return build_report(sol, flux, &exact);
}

ExactSolution<1> scaled(const ExactSolution<1>& e, double c) {
  ExactSolution<1> s;
  s.u = [e, c](const P1& x, double t) { return c * e.u(x, t); };
  s.grad_u = [e, c](const P1& x, double t) -> P1 { return c * e.grad_u(x, t); };
  s.f = [e, c](const P1& x, double t) { return c * e.f(x, t); };
  s.laplacian = [e, c](const P1& x, double t) { return c * e.laplacian(x, t); };
  return s;
}

}  // namespace

TEST(Catalog, ManufacturedDataIsConsistent) {
  EXPECT_LT(consistency_defect(lookup("sin1d_decay").exact<1>()), 1e-5);
  EXPECT_LT(consistency_defect(lookup("sin2d_decay").exact<2>()), 1e-5);
  EXPECT_LT(consistency_defect(lookup("poly1d").exact<1>()), 1e-5);
  // f = (pi^2 - 1) sin(pi x) e^{-t} at x = 1/2, t = 0
  P1 x;
  x << 0.5;
  EXPECT_NEAR(lookup("sin1d_decay").exact<1>().f(x, 0.0), M_PI * M_PI - 1.0, 1e-14);
  EXPECT_NEAR(lookup("sin2d_decay").exact<2>().f(Eigen::Vector2d(0.5, 0.5), 0.0),
              2 * M_PI * M_PI - 1.0, 1e-14);
  EXPECT_EQ(lookup("zero").exact<2>().f(Eigen::Vector2d(0.3, 0.1), 0.4), 0.0);
  EXPECT_EQ(lookup("zero").exact<1>().u0(x), 0.0);
}

TEST(Catalog, LookupErrors) {
  try {
    lookup("nope");
    FAIL();
  } catch (const std::out_of_range& e) {
    EXPECT_NE(std::string(e.what()).find("sin2d_decay"), std::string::npos);
  }
  EXPECT_THROW(lookup("sin2d_decay").exact<1>(), std::invalid_argument);
}

TEST(JumpEstimator, StationaryTrajectoryGivesZero) {
  auto fe = std::make_shared<const FeSpace<1>>(
      std::make_shared<const Mesh<1>>(build_interval_mesh(4)));
  const Vector u = Vector::LinSpaced(3, 1.0, 2.0);
  const auto sol = make_solution(fe, TimeGrid::uniform(1.0, 3), std::vector<Vector>(4, u),
                                 std::vector<BrokenField<1>>(3, BrokenField<1>::Zero(4, 2)));
  for (double j : jump_estimator(sol)) EXPECT_EQ(j, 0.0);
}

TEST(JumpEstimator, HandComputedSingleDof) {
  // One interior hat on two cells: ||grad hat||^2 = 4. u goes 0 -> 1/2 over tau = 1:
  // 1/4 * (1/3) * 4 * (1/2)^2 = 1/12.
  auto fe = std::make_shared<const FeSpace<1>>(
      std::make_shared<const Mesh<1>>(build_interval_mesh(2)));
  const auto sol = make_solution(fe, TimeGrid::uniform(1.0, 1),
                                 {Vector::Zero(1), Vector::Constant(1, 0.5)},
                                 {BrokenField<1>::Zero(2, 2)});
  EXPECT_NEAR(jump_estimator(sol)[0], 1.0 / 12.0, 1e-15);
}

TEST(FluxEstimator, MidpointBelowAverageOfVariants) {
  const auto sol = solve(lookup("sin2d_decay").exact<2>(), build_unit_square_mesh(4), 4);
  const auto flux = build_global_flux(sol);
  for (const auto& e : flux_estimator(sol, flux)) {
    EXPECT_LE(std::sqrt(e.midpoint), 0.5 * (std::sqrt(e.constant) + std::sqrt(e.affine)) + 1e-14);
    EXPECT_GT(e.midpoint, 0.0);
  }
}

TEST(Oscillation, VanishesForDiscreteData) {
  // f = 1 is in the broken P1 space and constant in time; u0 = 0 is in V_h.
  ExactSolution<1> e;
  e.u = [](const P1&, double) { return 0.0; };
  e.grad_u = [](const P1&, double) -> P1 { return P1::Zero(); };
  e.f = [](const P1&, double) { return 1.0; };
  e.laplacian = [](const P1&, double) { return 0.0; };
  const auto sol = solve(e, build_interval_mesh(4), 3);
  const auto osc = oscillation_surrogate(sol, e);
  EXPECT_LT(osc.osc_upper, 1e-14);
  EXPECT_EQ(osc.initial, 0.0);
}

TEST(Oscillation, ShrinksWithRefinement) {
  const auto& e = lookup("sin1d_decay").exact<1>();
  double prev = INFINITY;
  for (Index n : {4, 8, 16}) {
    const auto osc = oscillation_surrogate(solve(e, build_interval_mesh(n), n), e);
    EXPECT_LT(osc.osc_upper, prev);
    prev = osc.osc_upper;
  }
  EXPECT_NEAR(friedrichs_constant(build_unit_square_mesh(2)), 1.0 / (M_PI * std::sqrt(2.0)), 1e-15);
}

TEST(EnergyErrors, ZeroForZeroProblem) {
  const auto r = full_report(lookup("zero").exact<2>(), build_unit_square_mesh(2), 2);
  EXPECT_EQ(r.err_energy, 0.0);
  EXPECT_EQ(r.est_total, 0.0);
  EXPECT_FALSE(r.effectivity.has_value());
  const auto ub = verify_upper_bound(r);
  EXPECT_TRUE(ub.pass);
  EXPECT_EQ(ub.margin, 0.0);
}

TEST(EnergyErrors, MidpointIsHalfwayInEnergy) {
  const auto r = full_report(lookup("sin1d_decay").exact<1>(), build_interval_mesh(8), 8);
  EXPECT_LE(r.err_energy, 0.5 * r.quantifier_E * (1 + 1e-12));
  EXPECT_GT(r.err_energy, 0.0);
  EXPECT_NEAR(r.quantifier_E, r.err_const_E + r.err_affine_E, 1e-15);
}

TEST(UpperBound, HoldsInOneDimension) {
  const auto& e = lookup("sin1d_decay").exact<1>();
  for (Index n : {4, 8, 16, 32}) {
    const auto check = verify_upper_bound(full_report(e, build_interval_mesh(n), n));
    EXPECT_TRUE(check.pass) << "n = " << n << " margin " << check.margin;
  }
}

TEST(UpperBound, HoldsInTwoDimensions) {
  const auto& e = lookup("sin2d_decay").exact<2>();
  for (Index n : {2, 4}) {
    const auto check = verify_upper_bound(full_report(e, build_unit_square_mesh(n), 2 * n));
    EXPECT_TRUE(check.pass) << "n = " << n << " margin " << check.margin;
  }
}

TEST(UpperBound, HoldsForPolynomialData) {
  const auto& e = lookup("poly1d").exact<1>();
  const auto check = verify_upper_bound(full_report(e, build_interval_mesh(6), 5));
  EXPECT_TRUE(check.pass) << check.margin;
}

TEST(UpperBound, CorruptedFluxIsCaughtByEquilibrationCheck) {
  const auto sol = solve(lookup("sin1d_decay").exact<1>(), build_interval_mesh(8), 4);
  auto flux = build_global_flux(sol);
  EXPECT_LT(equilibration_residual(flux, sol, 2).relative(), 1e-10);
  flux.per_interval[1] *= 0.9;
  EXPECT_GT(equilibration_residual(flux, sol, 2).relative(), 1e-3);
}

TEST(Scaling, EstimatorsScaleWithData) {
  const auto& e = lookup("sin1d_decay").exact<1>();
  const auto base = full_report(e, build_interval_mesh(8), 8);
  const auto big = full_report(scaled(e, 3.0), build_interval_mesh(8), 8);
  EXPECT_NEAR(big.est_total, 3.0 * base.est_total, 1e-12 * big.est_total);
  EXPECT_NEAR(big.err_energy, 3.0 * base.err_energy, 1e-12 * big.err_energy);
  EXPECT_NEAR(*big.effectivity, *base.effectivity, 1e-12);
}

TEST(Report, RealizedGammaAndSizes) {
  const auto mesh = build_unit_square_mesh(4);
  const auto r = full_report(lookup("sin2d_decay").exact<2>(), mesh, 4);
  // Interior patch diameter sqrt(2)/2 at n = 4, tau = 1/4.
  EXPECT_NEAR(r.gamma_realized, 0.5 / 0.25, 1e-12);
  EXPECT_EQ(r.per_interval.size(), 4u);
  EXPECT_NEAR(r.h_max, std::sqrt(2.0) / 4.0, 1e-15);
  double s = 0.0;
  for (const auto& i : r.per_interval) s += i.jump_sq + i.flux_sq;
  EXPECT_NEAR(r.est_total, std::sqrt(s), 1e-15);
}

TEST(ResidualIdentity, HoldsForRandomFields) {
  const auto& e = lookup("sin1d_decay").exact<1>();
  const auto sol = solve(e, build_interval_mesh(4), 3);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto id = verify_residual_identity(sol, e, random_test_field(sol, seed));
    EXPECT_LE(id.gap(), 1e-9 * id.scale()) << "seed " << seed;
    EXPECT_GT(id.scale(), 0.0);
  }
  const auto id0 = verify_residual_identity(sol, e, random_test_field(sol, 3, true));
  EXPECT_LE(id0.gap(), 1e-9 * id0.scale());
}

TEST(ResidualIdentity, ZeroFieldAndSizeCheck) {
  const auto& e = lookup("sin1d_decay").exact<1>();
  const auto sol = solve(e, build_interval_mesh(4), 3);
  DiscreteTestField zero(4, Vector::Zero(3));
  const auto id = verify_residual_identity(sol, e, zero);
  EXPECT_EQ(id.lhs, 0.0);
  EXPECT_NEAR(id.rhs, 0.0, 1e-15);
  EXPECT_THROW(verify_residual_identity(sol, e, DiscreteTestField(2, Vector::Zero(3))),
               std::invalid_argument);
}
