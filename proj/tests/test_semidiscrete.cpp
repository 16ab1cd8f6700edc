#include "hypercircle/semidiscrete.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace hypercircle;
using namespace hypercircle::semidiscrete;

TEST(SolveMode, SingleStepUnitLambda) {
  const auto p = ModeProblem::constant(1.0, TimeGrid::uniform(1.0, 1), 1.0, 0.0);
  const auto u = solve_mode(p);
  EXPECT_DOUBLE_EQ(u[1], 0.5);
}

TEST(SolveMode, TwoSteps) {
  const auto u = solve_mode(ModeProblem::constant(2.0, TimeGrid::uniform(1.0, 2), 1.0, 0.0));
  EXPECT_DOUBLE_EQ(u[1], 0.25);
  EXPECT_DOUBLE_EQ(u[2], 0.375);
}

TEST(SolveMode, SteadyState) {
  const double c = 0.7, lambda = 3.0;
  for (double v : solve_mode(ModeProblem::constant(lambda, TimeGrid::uniform(2.0, 5), lambda * c, c)))
    EXPECT_NEAR(v, c, 1e-15);
}

TEST(SolveMode, Validation) {
  EXPECT_THROW(ModeProblem::constant(0.0, TimeGrid::uniform(1.0, 1), 1.0, 0.0),
               std::invalid_argument);
  ModeProblem p;
  p.forcing = {1.0, 2.0};
  EXPECT_THROW(solve_mode(p), std::invalid_argument);
}

TEST(ExactMode, ClosedForm) {
  const auto p = ModeProblem::constant(1.0, TimeGrid::uniform(1.0, 1), 1.0, 0.0);
  const auto u = exact_mode_solution(p);
  EXPECT_EQ(u(0.0), 0.0);
  EXPECT_NEAR(u(1.0), 1.0 - std::exp(-1.0), 1e-15);
  const auto far = exact_mode_solution(ModeProblem::constant(1.0, TimeGrid::uniform(50.0, 1), 1.0, 0.0));
  EXPECT_NEAR(far(50.0), 1.0, 1e-15);
}

TEST(ExactMode, PiecewiseForcingNeedsGeneralPath) {
  ModeProblem p{1.0, TimeGrid::uniform(1.0, 2), {1.0, 2.0}, 0.0};
  EXPECT_THROW(exact_mode_solution(p), std::invalid_argument);
  const ExactModeSolution u(p);
  // Continuity across the node and the steady limit of the second piece.
  EXPECT_NEAR(u.at(1, 0.5), u.at(2, 0.0), 1e-15);
  const double u1 = u.nodal_values()[1];
  EXPECT_NEAR(u(1.0), 2.0 + (u1 - 2.0) * std::exp(-0.5), 1e-15);
}

TEST(ModeEnergies, SingleStepUnitLambda) {
  const auto p = ModeProblem::constant(1.0, TimeGrid::uniform(1.0, 1), 1.0, 0.0);
  const auto r = mode_energy_report(p, solve_mode(p));
  EXPECT_NEAR(r.jump_E * r.jump_E, 1.0 / 12.0, 1e-15);
  EXPECT_NEAR(r.err_mid_E, 0.5 * std::sqrt(1.0 / 12.0), 1e-15);
  EXPECT_LT(r.pythagoras_defect(), 1e-14);
}

TEST(ModeEnergies, SteadyStateIsExact) {
  const auto p = ModeProblem::constant(2.0, TimeGrid::uniform(1.0, 4), 1.0, 0.5);
  const auto r = mode_energy_report(p, solve_mode(p));
  EXPECT_EQ(r.err_const_E, 0.0);
  EXPECT_EQ(r.err_affine_E, 0.0);
  EXPECT_EQ(r.err_mid_E, 0.0);
  EXPECT_EQ(r.jump_E, 0.0);
}

namespace {

/// Composite 10-point Gauss on 4000 pieces per interval, fine enough for the
/// e^{-lambda s} layer at lambda = 1e3.
ModeEnergyReport composite_oracle(const ModeProblem& p, const std::vector<double>& u) {
  const ExactModeSolution exact(p);
  const GaussLegendre gl(10);
  const int pieces = 4000;
  double ic = 0, ia = 0, im = 0, ij = 0;
  for (Index n = 1; n <= p.grid.n_intervals(); ++n) {
    const double tau = p.grid.tau(n), beta = (u[n] - u[n - 1]) / tau, h = tau / pieces;
    for (int k = 0; k < pieces; ++k)
      for (int q = 0; q < gl.size(); ++q) {
        const double s = (k + gl.nodes[q]) * h, w = gl.weights[q] * h;
        const double ex = exact.at(n, s), affine = u[n - 1] + beta * s;
        const double mid = 0.5 * (u[n] + affine);
        ic += w * (ex - u[n]) * (ex - u[n]);
        ia += w * (ex - affine) * (ex - affine);
        im += w * (ex - mid) * (ex - mid);
        ij += w * (u[n] - affine) * (u[n] - affine);
      }
  }
  const double eT = exact.nodal_values().back() - u.back();
  ModeEnergyReport r;
  r.err_const_E = std::sqrt(0.5 * eT * eT + p.lambda * ic);
  r.err_affine_E = std::sqrt(0.5 * eT * eT + p.lambda * ia);
  r.err_mid_E = std::sqrt(0.5 * eT * eT + p.lambda * im);
  r.jump_E = std::sqrt(p.lambda * ij);
  return r;
}

}  // namespace

TEST(ModeEnergies, ClosedFormMatchesQuadrature) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double lambda : {1e-3, 0.3, 1.0, 7.0, 1e3}) {
    ModeProblem p{lambda, TimeGrid::geometric(1.0, 5, 1.3), {}, u(rng)};
    for (int i = 0; i < 5; ++i) p.forcing.push_back(u(rng));
    const auto x = solve_mode(p);
    const auto a = mode_energy_report(p, x, ModeIntegration::closed_form);
    const auto b = composite_oracle(p, x);
    EXPECT_NEAR(a.err_const_E, b.err_const_E, 1e-11 * (1 + b.err_const_E)) << lambda;
    EXPECT_NEAR(a.err_affine_E, b.err_affine_E, 1e-11 * (1 + b.err_affine_E)) << lambda;
    EXPECT_NEAR(a.err_mid_E, b.err_mid_E, 1e-11 * (1 + b.err_mid_E)) << lambda;
    EXPECT_NEAR(a.jump_E, b.jump_E, 1e-12 * (1 + b.jump_E)) << lambda;
    if (lambda * p.grid.tau_max() < 2.0) {
      // The plain 10-point path is only accurate without a boundary layer.
      const auto g = mode_energy_report(p, x, ModeIntegration::gauss);
      EXPECT_NEAR(a.err_mid_E, g.err_mid_E, 1e-11 * (1 + g.err_mid_E)) << lambda;
    }
  }
}

TEST(ModeEnergies, SeriesBranchesAreContinuous) {
  // psi2..psi4 switch from series to closed form at z = 1.
  const double below = std::nextafter(1.0, 0.0);
  EXPECT_NEAR(semidiscrete::detail::psi2(below), semidiscrete::detail::psi2(1.0), 1e-15);
  EXPECT_NEAR(semidiscrete::detail::psi3(below), semidiscrete::detail::psi3(1.0), 1e-15);
  EXPECT_NEAR(semidiscrete::detail::psi4(below), semidiscrete::detail::psi4(1.0), 1e-15);
  EXPECT_NEAR(semidiscrete::detail::psi2(0.0), 0.5, 1e-16);
  EXPECT_NEAR(semidiscrete::detail::psi3(0.0), 1.0 / 3.0, 1e-16);
  EXPECT_NEAR(semidiscrete::detail::psi4(0.0), 1.0 / 3.0, 1e-16);
}

TEST(Hypercircle, IdentitiesOnRandomInstances) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0), e(-3.0, 3.0);
  std::uniform_int_distribution<int> steps(1, 16);
  for (int i = 0; i < 50; ++i) {
    const Index N = steps(rng);
    ModeProblem p{std::pow(10.0, e(rng)), TimeGrid::geometric(1.0, N, 1.0 + 0.5 * (u(rng) + 1)), {},
                  u(rng)};
    for (Index n = 0; n < N; ++n) p.forcing.push_back(u(rng));
    const auto r = mode_energy_report(p, solve_mode(p));
    EXPECT_LE(r.pythagoras_defect(), 1e-11) << "instance " << i;
    EXPECT_LE(r.hypercircle_defect(), 1e-11) << "instance " << i;
  }
}

TEST(Counterexample, RatiosDivergeInOppositeLimits) {
  const auto rows = counterexample_sweep(default_counterexample_lambdas());
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_TRUE(counterexample_monotone(rows));
  const auto& small = rows.front();
  const auto& one = rows[3];
  const auto& large = rows.back();
  EXPECT_EQ(one.lambda, 1.0);
  EXPECT_GE(small.ratio_affine, 10.0 * one.ratio_affine);
  EXPECT_GE(large.ratio_const, 10.0 * one.ratio_const);
  // Oracle at lambda = 1: jump_E^2 = 1/12.
  EXPECT_NEAR(one.energies.jump_E, std::sqrt(1.0 / 12.0), 1e-15);
}

TEST(Counterexample, MonotonicityDetectsViolations) {
  auto rows = counterexample_sweep({0.01, 0.1, 1.0, 10.0});
  std::swap(rows[0].ratio_affine, rows[1].ratio_affine);
  EXPECT_FALSE(counterexample_monotone(rows));
}

TEST(Convergence, NodalErrorIsFirstOrder) {
  std::vector<double> err;
  for (int l = 0; l <= 4; ++l) {
    const auto p = ModeProblem::constant(2.0, TimeGrid::uniform(1.0, 4 << l), 1.0, 0.0);
    const auto u = solve_mode(p);
    err.push_back(std::abs(u.back() - exact_mode_solution(p)(1.0)));
  }
  for (std::size_t i = 1; i < err.size(); ++i) {
    const double eoc = std::log2(err[i - 1] / err[i]);
    EXPECT_GE(eoc, 0.9);
    EXPECT_LE(eoc, 1.1);
  }
}
