#pragma once

#include "hypercircle/quadrature.hpp"
#include "hypercircle/timestepper.hpp"

#include <cmath>

namespace hypercircle::semidiscrete {

/// One Fourier mode of the heat equation: u' + lambda u = f_n on I_n, u(0) = u0.
/// Under the mode picture ||grad v||^2 becomes lambda |v|^2 and L2 becomes |.|.
struct ModeProblem {
  double lambda = 1.0;
  TimeGrid grid = TimeGrid::uniform(1.0, 1);
  std::vector<double> forcing;  // f_n, n = 1..N at index n - 1
  double u0 = 0.0;

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
      throw std::invalid_argument("ModeProblem: lambda must be positive");
    if (static_cast<Index>(forcing.size()) != grid.n_intervals())
      throw std::invalid_argument("ModeProblem: forcing needs one value per interval");
  }

  static ModeProblem constant(double lambda, TimeGrid grid, double f, double u0) {
    ModeProblem p{lambda, grid, std::vector<double>(grid.n_intervals(), f), u0};
    p.validate();
    return p;
  }
};

/// u_n = (u_{n-1} + tau_n f_n) / (1 + tau_n lambda)
inline std::vector<double> solve_mode(const ModeProblem& p) {
  p.validate();
  std::vector<double> u{p.u0};
  for (Index n = 1; n <= p.grid.n_intervals(); ++n) {
    const double tau = p.grid.tau(n);
    u.push_back((u.back() + tau * p.forcing[n - 1]) / (1.0 + tau * p.lambda));
  }
  return u;
}

namespace detail {

/// (1 - e^{-z}) / z
inline double phi1(double z) { return z == 0.0 ? 1.0 : -std::expm1(-z) / z; }

// int_0^tau s phi1(lambda s) ds = tau^2 psi2(z), int s^2 phi1 = tau^3 psi3(z),
// int s^2 phi1^2 = tau^3 psi4(z), z = lambda tau. Series below z = 1.
inline double psi2(double z) {
  if (z < 1.0) {
    double sum = 0.0, term = 0.5;  // (-z)^j / (j+2)!
    for (int j = 0; j < 25; ++j) {
      sum += term;
      term *= -z / (j + 3);
    }
    return sum;
  }
  return (z - 1.0 + std::exp(-z)) / (z * z);
}

inline double psi3(double z) {
  if (z < 1.0) {
    double sum = 0.0, fact = 6.0, zp = 1.0;  // (-1)^j (j+2) z^j / (j+3)!
    for (int j = 0; j < 25; ++j) {
      sum += (j % 2 == 0 ? 1.0 : -1.0) * (j + 2) * zp / fact;
      zp *= z;
      fact *= j + 4;
    }
    return sum;
  }
  return (0.5 * z * z - 1.0 + std::exp(-z) * (1.0 + z)) / (z * z * z);
}

inline double psi4(double z) {
  if (z < 1.0) {
    double sum = 0.0, fact = 6.0, zp = 1.0, pow2 = 4.0;  // (-1)^j (2^{j+2} - 2) z^j / (j+3)!
    for (int j = 0; j < 25; ++j) {
      sum += (j % 2 == 0 ? 1.0 : -1.0) * (pow2 - 2.0) * zp / fact;
      zp *= z;
      fact *= j + 4;
      pow2 *= 2.0;
    }
    return sum;
  }
  return (z + 2.0 * std::expm1(-z) - 0.5 * std::expm1(-2.0 * z)) / (z * z * z);
}

}  // namespace detail

/// Exact solution for piecewise-constant forcing, evaluated interval by interval.
class ExactModeSolution {
public:
  explicit ExactModeSolution(const ModeProblem& p) : p_(p) {
    p_.validate();
    nodes_.push_back(p_.u0);
    for (Index n = 1; n <= p_.grid.n_intervals(); ++n) nodes_.push_back(at(n, p_.grid.tau(n)));
  }

  /// u(t_{n-1} + s) for s in [0, tau_n].
  double at(Index n, double s) const {
    const double g = p_.forcing[n - 1] - p_.lambda * nodes_[n - 1];
    return nodes_[n - 1] + g * s * detail::phi1(p_.lambda * s);
  }

  double operator()(double t) const {
    const Index n = std::max<Index>(1, p_.grid.interval_of(t));
    return at(n, t - p_.grid.node(n - 1));
  }

  const std::vector<double>& nodal_values() const { return nodes_; }

private:
  ModeProblem p_;
  std::vector<double> nodes_;
};

/// u(t) = F/lambda + (u0 - F/lambda) e^{-lambda t}; requires constant forcing.
inline ExactModeSolution exact_mode_solution(const ModeProblem& p) {
  p.validate();
  for (double f : p.forcing)
    if (f != p.forcing.front())
      throw std::invalid_argument(
          "exact_mode_solution: forcing is not constant, use ExactModeSolution per interval");
  return ExactModeSolution(p);
}

/// ||v||_E^2 = 1/2 |v(T)|^2 + lambda int |v|^2 for v = u - w.
struct ModeEnergyReport {
  double err_const_E = 0.0;   // w = u_tau
  double err_affine_E = 0.0;  // w = U_tau
  double err_mid_E = 0.0;     // w = bar u_tau
  double jump_E = 0.0;        // ||u_tau - U_tau||_E

  double pythagoras_defect() const {
    const double j2 = jump_E * jump_E;
    const double d = err_const_E * err_const_E + err_affine_E * err_affine_E - j2;
    return j2 > 0.0 ? std::abs(d) / j2 : std::abs(d);
  }
  double hypercircle_defect() const {
    const double d = err_mid_E - 0.5 * jump_E;
    return jump_E > 0.0 ? std::abs(d) / jump_E : std::abs(d);
  }
};

enum class ModeIntegration { closed_form, gauss };

/// (lambda / 3) sum_n tau_n (u_n - u_{n-1})^2
inline double jump_energy_sq(const ModeProblem& p, const std::vector<double>& u) {
  double s = 0.0;
  for (Index n = 1; n <= p.grid.n_intervals(); ++n) {
    const double d = u[n] - u[n - 1];
    s += p.grid.tau(n) * d * d;
  }
  return p.lambda * s / 3.0;
}

namespace detail {

/// int_0^tau (u(t_{n-1} + s) - alpha - beta s)^2 ds in closed form.
inline double affine_error_sq(double lambda, double tau, double u_start, double f, double alpha,
                              double beta) {
  const double z = lambda * tau;
  const double g = f - lambda * u_start;
  const double e0 = u_start - alpha;
  const double t2 = tau * tau, t3 = t2 * tau;
  const double poly = e0 * e0 * tau - e0 * beta * t2 + beta * beta * t3 / 3.0;
  return poly + 2.0 * g * e0 * t2 * psi2(z) - 2.0 * g * beta * t3 * psi3(z) +
         g * g * t3 * psi4(z);
}

}  // namespace detail

/// All four energies; closed-form antiderivatives or 10-point Gauss per interval.
/// The Gauss path misses the e^{-lambda s} layer once lambda tau is large.
inline ModeEnergyReport mode_energy_report(const ModeProblem& p, const std::vector<double>& u,
                                           ModeIntegration method = ModeIntegration::closed_form) {
  p.validate();
  const Index N = p.grid.n_intervals();
  if (static_cast<Index>(u.size()) != N + 1)
    throw std::invalid_argument("mode_energy_report: trajectory needs N + 1 values");
  const ExactModeSolution exact(p);
  const auto& ue = exact.nodal_values();
  const GaussLegendre gl(10);
  double ic = 0.0, ia = 0.0, im = 0.0, ij = 0.0;
  for (Index n = 1; n <= N; ++n) {
    const double tau = p.grid.tau(n), f = p.forcing[n - 1];
    const double beta = (u[n] - u[n - 1]) / tau;
    if (method == ModeIntegration::closed_form) {
      ic += detail::affine_error_sq(p.lambda, tau, ue[n - 1], f, u[n], 0.0);
      ia += detail::affine_error_sq(p.lambda, tau, ue[n - 1], f, u[n - 1], beta);
      im += detail::affine_error_sq(p.lambda, tau, ue[n - 1], f, 0.5 * (u[n] + u[n - 1]),
                                    0.5 * beta);
      ij += tau * (u[n] - u[n - 1]) * (u[n] - u[n - 1]) / 3.0;
    } else {
      for (int q = 0; q < gl.size(); ++q) {
        const double s = gl.nodes[q] * tau, w = gl.weights[q] * tau;
        const double ex = exact.at(n, s);
        const double affine = u[n - 1] + beta * s;
        ic += w * (ex - u[n]) * (ex - u[n]);
        ia += w * (ex - affine) * (ex - affine);
        im += w * (ex - 0.5 * (u[n] + affine)) * (ex - 0.5 * (u[n] + affine));
        ij += w * (u[n] - affine) * (u[n] - affine);
      }
    }
  }
  const double eT = ue[N] - u[N];
  const double fin = 0.5 * eT * eT;
  ModeEnergyReport r;
  r.err_const_E = std::sqrt(fin + p.lambda * ic);
  r.err_affine_E = std::sqrt(fin + p.lambda * ia);
  r.err_mid_E = std::sqrt(fin + p.lambda * im);
  r.jump_E = std::sqrt(p.lambda * ij);
  return r;
}

struct CounterexampleRow {
  double lambda = 0.0;
  ModeEnergyReport energies;
  double ratio_const = 0.0;   // jump_E / err_const_E
  double ratio_affine = 0.0;  // jump_E / err_affine_E
};

/// Single step tau = 1, f = 1, u0 = 0 for each lambda.
inline std::vector<CounterexampleRow> counterexample_sweep(const std::vector<double>& lambdas) {
  std::vector<CounterexampleRow> rows;
  for (double lambda : lambdas) {
    const auto p = ModeProblem::constant(lambda, TimeGrid::uniform(1.0, 1), 1.0, 0.0);
    CounterexampleRow row;
    row.lambda = lambda;
    row.energies = mode_energy_report(p, solve_mode(p));
    row.ratio_const = row.energies.jump_E / row.energies.err_const_E;
    row.ratio_affine = row.energies.jump_E / row.energies.err_affine_E;
    rows.push_back(row);
  }
  return rows;
}

inline const std::vector<double>& default_counterexample_lambdas() {
  static const std::vector<double> l{1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
  return l;
}

/// Both ratios must grow toward their singular limits: ratio_affine as lambda
/// decreases below 1, ratio_const as lambda increases above 1.
inline bool counterexample_monotone(const std::vector<CounterexampleRow>& rows) {
  std::vector<CounterexampleRow> sorted = rows;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.lambda < b.lambda; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const auto& lo = sorted[i - 1];
    const auto& hi = sorted[i];
    if (hi.lambda <= 1.0 && !(lo.ratio_affine > hi.ratio_affine)) return false;
    if (lo.lambda >= 1.0 && !(hi.ratio_const > lo.ratio_const)) return false;
  }
  return true;
}

}  // namespace hypercircle::semidiscrete
