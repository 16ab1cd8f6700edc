#pragma once

#include "hypercircle/harness/catalog.hpp"
#include "hypercircle/harness/config.hpp"
#include "hypercircle/semidiscrete.hpp"

#include <cstdio>
#include <iomanip>
#include <random>

namespace hypercircle::harness {

/// %.17g, so that written numbers round-trip.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
};

/// A solver stage failed; the message names the module it came from.
class StageFailure : public std::runtime_error {
public:
  StageFailure(const std::string& module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(module) {}
  const std::string& module() const { return module_; }

private:
  std::string module_;
};

template <typename Fn>
auto stage(const char* module, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const NumericFailure& e) {
    throw StageFailure(module, e.what());
  } catch (const IntegrityFailure& e) {
    throw StageFailure(module, e.what());
  }
}

struct StudyResult {
  Study study = Study::solve;
  std::vector<std::string> failures;
  CsvTable csv;
  Json report;
  std::string summary;

  bool passed() const { return failures.empty(); }
  int exit_code() const { return passed() ? 0 : 1; }
};

/// EOC between consecutive levels; absent when either value is not positive.
inline std::optional<double> eoc(double e_prev, double e, double h_prev, double h) {
  if (!(e_prev > 0.0) || !(e > 0.0) || h_prev == h) return std::nullopt;
  return std::log(e_prev / e) / std::log(h_prev / h);
}

/// Number of steps for a level: the tau rules use h_max of that level, the
/// uniform rule doubles the configured count with each refinement. The small
/// guard keeps ceil from rounding an exact quotient up.
inline Index steps_for_level(const StudyConfig& c, double h_max, int level) {
  const double guard = 1e-9;
  switch (c.time.rule) {
    case TimeRule::tau_eq_h: return static_cast<Index>(std::ceil(c.time.T / h_max - guard));
    case TimeRule::tau_eq_h_sq:
      return static_cast<Index>(std::ceil(c.time.T / (h_max * h_max) - guard));
    case TimeRule::uniform: break;
  }
  return c.time.steps << level;
}

inline TimeGrid make_grid(const StudyConfig& c, Index steps) {
  if (c.time.grading == 1.0) return TimeGrid::uniform(c.time.T, steps);
  return TimeGrid::geometric(c.time.T, steps, c.time.grading);
}

template <int Dim>
Mesh<Dim> make_mesh(const StudyConfig& c, int level) {
  const Index n = c.mesh.resolution << level;
  if constexpr (Dim == 1) return build_interval_mesh(n);
  else return build_unit_square_mesh(n);
}

template <int Dim>
struct LevelRun {
  int level = 0;
  Index resolution = 0;
  std::shared_ptr<const Mesh<Dim>> mesh;
  std::optional<SpaceTimeSolution<Dim>> sol;
  std::optional<EquilibratedFlux<Dim>> flux;
  EstimatorReport report;
  double max_residual = 0.0;  // equilibration identity, relative
  double max_jump = 0.0;      // normal-trace jump, relative
};

template <int Dim>
LevelRun<Dim> run_level(const StudyConfig& c, const ExactSolution<Dim>& exact, int level) {
  LevelRun<Dim> run;
  run.level = level;
  run.resolution = c.mesh.resolution << level;
  run.mesh = stage("mesh", [&] { return std::make_shared<const Mesh<Dim>>(make_mesh<Dim>(c, level)); });
  auto space = std::make_shared<const FeSpace<Dim>>(run.mesh);
  const TimeGrid grid = make_grid(c, steps_for_level(c, run.mesh->h_max(), level));
  const SolverOptions opts{c.solver_tol, c.solver_max_iters};
  run.sol = stage("timestepper", [&] { return run_implicit_euler(space, grid, exact.problem(), opts); });
  EquilibrationOptions eq;
  eq.flux_degree = c.flux_degree;
  eq.threads = c.threads;
  run.flux = stage("equilibration", [&] { return build_global_flux(*run.sol, eq); });
  for (Index n = 1; n <= grid.n_intervals(); ++n) {
    run.max_residual = std::max(run.max_residual, equilibration_residual(*run.flux, *run.sol, n).relative());
    run.max_jump = std::max(run.max_jump, normal_jump(*run.flux, n).relative());
  }
  run.report = stage("estimators", [&] { return build_report(*run.sol, *run.flux, &exact, c.threads); });
  return run;
}

inline const std::vector<std::string>& pde_columns() {
  static const std::vector<std::string> cols{
      "level",       "h_max",        "tau_max",  "gamma_realized", "err_energy",
      "err_X_const", "err_X_affine", "est_jump", "est_flux",       "est_total",
      "osc_upper",   "effectivity",  "eoc_err_energy", "eoc_est_total", "bound_margin"};
  return cols;
}

template <int Dim>
Json level_json(const LevelRun<Dim>& run, bool dump_flux) {
  const auto& r = run.report;
  Json j;
  j["level"] = run.level;
  j["resolution"] = run.resolution;
  j["n_intervals"] = run.sol->n_intervals();
  j["h_max"] = r.h_max;
  j["tau_max"] = r.tau_max;
  j["gamma_realized"] = r.gamma_realized;
  j["err_energy"] = r.err_energy;
  j["err_const_E"] = r.err_const_E;
  j["err_affine_E"] = r.err_affine_E;
  j["err_X_const"] = r.err_X_const;
  j["err_X_affine"] = r.err_X_affine;
  j["quantifier_E"] = r.quantifier_E;
  j["est_jump"] = r.est_jump;
  j["est_flux"] = r.est_flux;
  j["est_total"] = r.est_total;
  j["osc_upper"] = r.osc_upper;
  j["osc_initial"] = r.osc_initial;
  j["effectivity"] = r.effectivity ? Json(*r.effectivity) : Json(nullptr);
  j["equilibration_residual"] = run.max_residual;
  j["normal_jump"] = run.max_jump;
  j["compatibility_defect"] = r.max_compatibility_defect;
  Json per = Json::array();
  for (std::size_t i = 0; i < r.per_interval.size(); ++i) {
    const auto& e = r.per_interval[i];
    const Index n = static_cast<Index>(i) + 1;
    per.push_back({{"n", n},
                   {"t", run.sol->grid.node(n)},
                   {"tau", run.sol->grid.tau(n)},
                   {"jump_sq", e.jump_sq},
                   {"flux_sq", e.flux_sq},
                   {"flux_sq_const", e.flux_sq_const},
                   {"flux_sq_affine", e.flux_sq_affine},
                   {"osc_sq", e.osc_sq},
                   {"err_X_mid_sq", e.err_x_mid_sq}});
  }
  j["per_interval"] = per;
  if (dump_flux) {
    Json flux = Json::array();
    for (Index n = 1; n <= run.sol->n_intervals(); ++n) {
      Json rows = Json::array();
      const auto& m = run.flux->coefficients(n);
      for (Index c = 0; c < m.rows(); ++c) {
        std::vector<double> row(m.cols());
        for (Index k = 0; k < m.cols(); ++k) row[k] = m(c, k);
        rows.push_back(row);
      }
      flux.push_back(rows);
    }
    j["flux"] = flux;
  }
  return j;
}

namespace detail {

inline std::string table_line(const std::vector<std::string>& cells, int width = 12) {
  std::ostringstream os;
  for (const auto& c : cells) os << std::setw(width) << c.substr(0, width - 1);
  return os.str() + "\n";
}

inline std::string short_fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4e", v);
  return buf;
}

template <int Dim>
StudyResult run_pde_study(const StudyConfig& c, const CatalogEntry& entry) {
  StudyResult res;
  res.study = c.study;
  res.csv.header = pde_columns();
  const auto& exact = entry.template exact<Dim>();
  const int levels = c.study == Study::solve || c.study == Study::residual_identity
                         ? 1
                         : c.mesh.refinements + 1;
  Json jl = Json::array();
  std::vector<LevelRun<Dim>> runs;
  std::optional<double> first_eff, last_eff;
  res.summary += table_line({"level", "h_max", "N", "err_E", "est_total", "osc", "eff"});
  for (int l = 0; l < levels; ++l) {
    runs.push_back(run_level<Dim>(c, exact, l));
    const auto& run = runs.back();
    const auto& r = run.report;
    std::optional<double> eoc_err, eoc_est;
    if (l > 0) {
      const auto& p = runs[l - 1].report;
      eoc_err = eoc(p.err_energy, r.err_energy, p.h_max, r.h_max);
      eoc_est = eoc(p.est_total, r.est_total, p.h_max, r.h_max);
    }
    const auto bound = verify_upper_bound(r);
    res.csv.rows.push_back({std::to_string(l), fmt(r.h_max), fmt(r.tau_max), fmt(r.gamma_realized),
                            fmt(r.err_energy), fmt(r.err_X_const), fmt(r.err_X_affine),
                            fmt(r.est_jump), fmt(r.est_flux), fmt(r.est_total), fmt(r.osc_upper),
                            fmt(r.effectivity), fmt(eoc_err), fmt(eoc_est), fmt(bound.margin)});
    res.summary += table_line({std::to_string(l), short_fmt(r.h_max),
                               std::to_string(run.sol->n_intervals()), short_fmt(r.err_energy),
                               short_fmt(r.est_total), short_fmt(r.osc_upper),
                               r.effectivity ? short_fmt(*r.effectivity) : "-"});
    Json lj = level_json(run, c.dump_flux);
    lj["bound_margin"] = bound.margin;

    if (c.study == Study::upper_bound && !bound.pass)
      res.failures.push_back("level " + std::to_string(l) + ": err_energy " + fmt(r.err_energy) +
                             " exceeds est_total + osc_upper " + fmt(bound.rhs));
    if (c.study == Study::effectivity && r.effectivity &&
        (!c.gamma || r.gamma_realized <= *c.gamma)) {
      const double e = *r.effectivity;
      if (!first_eff) first_eff = e;
      last_eff = e;
      if (e < c.effectivity_min || e > c.effectivity_max)
        res.failures.push_back("level " + std::to_string(l) + ": effectivity " + fmt(e) +
                               " outside [" + fmt(c.effectivity_min) + ", " +
                               fmt(c.effectivity_max) + "]");
    }
    if (c.study == Study::residual_identity) {
      Json fields = Json::array();
      CsvTable t;
      t.header = {"field", "lhs", "rhs", "gap", "relative_gap"};
      res.summary = table_line({"field", "lhs", "rhs", "rel_gap"});
      for (int k = 0; k < c.fields; ++k) {
        const auto phi = random_test_field(*run.sol, c.seed + static_cast<std::uint64_t>(k));
        const auto id = verify_residual_identity(*run.sol, exact, phi);
        const double rel = id.scale() > 0.0 ? id.gap() / id.scale() : id.gap();
        t.rows.push_back({std::to_string(k), fmt(id.lhs), fmt(id.rhs), fmt(id.gap()), fmt(rel)});
        res.summary += table_line({std::to_string(k), short_fmt(id.lhs), short_fmt(id.rhs),
                                   short_fmt(rel)});
        fields.push_back({{"field", k}, {"lhs", id.lhs}, {"rhs", id.rhs}, {"relative_gap", rel}});
        if (!(rel <= c.residual_tol))
          res.failures.push_back("field " + std::to_string(k) + ": relative gap " + fmt(rel) +
                                 " > " + fmt(c.residual_tol));
      }
      lj["residual_identity"] = fields;
      res.csv = t;
    }
    jl.push_back(lj);
  }
  if (c.study == Study::effectivity && first_eff && *last_eff > c.effectivity_growth * *first_eff)
    res.failures.push_back("last-level effectivity " + fmt(*last_eff) + " exceeds " +
                           fmt(c.effectivity_growth) + " x first-level " + fmt(*first_eff));
  res.report["levels"] = jl;
  return res;
}

inline semidiscrete::ModeProblem mode_problem(const StudyConfig& c, const ModeConfig& m, int level) {
  const Index steps = c.time.steps << level;
  return semidiscrete::ModeProblem::constant(m.lambda, make_grid(c, steps), m.f, m.u0);
}

inline StudyResult run_mode_study(const StudyConfig& c, const ModeConfig& m) {
  if (c.time.rule != TimeRule::uniform)
    throw ConfigError("a single-mode problem has no mesh; use time.rule = uniform");
  StudyResult res;
  res.study = c.study;
  res.csv.header = {"level", "tau_max", "lambda", "u_N", "u_T", "nodal_error", "jump_E",
                    "err_const_E", "err_affine_E", "err_mid_E", "eoc_nodal_error"};
  const int levels = c.study == Study::solve ? 1 : c.mesh.refinements + 1;
  Json jl = Json::array();
  double prev_err = 0.0, prev_tau = 0.0;
  res.summary = table_line({"level", "tau", "nodal_err", "jump_E", "err_mid_E"});
  for (int l = 0; l < levels; ++l) {
    const auto p = mode_problem(c, m, l);
    const auto u = semidiscrete::solve_mode(p);
    const semidiscrete::ExactModeSolution exact(p);
    const auto e = semidiscrete::mode_energy_report(p, u);
    const double uT = exact.nodal_values().back();
    const double err = std::abs(u.back() - uT);
    const double tau = p.grid.tau_max();
    const auto rate = l > 0 ? eoc(prev_err, err, prev_tau, tau) : std::nullopt;
    res.csv.rows.push_back({std::to_string(l), fmt(tau), fmt(m.lambda), fmt(u.back()), fmt(uT),
                            fmt(err), fmt(e.jump_E), fmt(e.err_const_E), fmt(e.err_affine_E),
                            fmt(e.err_mid_E), fmt(rate)});
    res.summary += table_line({std::to_string(l), short_fmt(tau), short_fmt(err),
                               short_fmt(e.jump_E), short_fmt(e.err_mid_E)});
    jl.push_back({{"level", l}, {"tau_max", tau}, {"trajectory", u}, {"jump_E", e.jump_E},
                  {"err_const_E", e.err_const_E}, {"err_affine_E", e.err_affine_E},
                  {"err_mid_E", e.err_mid_E}});
    prev_err = err;
    prev_tau = tau;
  }
  res.report["levels"] = jl;
  return res;
}

inline StudyResult run_appendix(const StudyConfig& c) {
  StudyResult res;
  res.study = c.study;
  const auto& lambdas = c.lambdas.empty() ? semidiscrete::default_counterexample_lambdas() : c.lambdas;
  const auto rows = semidiscrete::counterexample_sweep(lambdas);
  res.csv.header = {"lambda", "jump_E", "err_const_E", "err_affine_E", "err_mid_E",
                    "ratio_const", "ratio_affine"};
  res.summary = table_line({"lambda", "jump_E", "ratio_const", "ratio_affine"});
  Json jr = Json::array();
  for (const auto& r : rows) {
    const auto& e = r.energies;
    res.csv.rows.push_back({fmt(r.lambda), fmt(e.jump_E), fmt(e.err_const_E), fmt(e.err_affine_E),
                            fmt(e.err_mid_E), fmt(r.ratio_const), fmt(r.ratio_affine)});
    res.summary += table_line({short_fmt(r.lambda), short_fmt(e.jump_E), short_fmt(r.ratio_const),
                               short_fmt(r.ratio_affine)});
    jr.push_back({{"lambda", r.lambda}, {"jump_E", e.jump_E}, {"err_const_E", e.err_const_E},
                  {"err_affine_E", e.err_affine_E}, {"err_mid_E", e.err_mid_E},
                  {"ratio_const", r.ratio_const}, {"ratio_affine", r.ratio_affine}});
  }
  if (!semidiscrete::counterexample_monotone(rows))
    res.failures.push_back("ratios are not monotone toward the singular limits");
  res.report["rows"] = jr;
  return res;
}

/// Random semi-discrete instance: log-uniform lambda, random steps on [0, T],
/// forcing and initial value uniform in [-1, 1].
inline semidiscrete::ModeProblem random_mode_problem(std::mt19937_64& rng, const StudyConfig& c) {
  std::uniform_real_distribution<double> unit(0.0, 1.0), sym(-1.0, 1.0);
  std::uniform_int_distribution<Index> steps(1, c.max_steps);
  const double lambda =
      std::exp(std::log(c.lambda_min) + unit(rng) * (std::log(c.lambda_max) - std::log(c.lambda_min)));
  const Index N = steps(rng);
  std::vector<double> t{0.0};
  for (Index n = 0; n < N; ++n) t.push_back(t.back() + 0.1 + unit(rng));
  for (auto& x : t) x *= c.time.T / t.back();
  t.back() = c.time.T;
  semidiscrete::ModeProblem p{lambda, TimeGrid(t), {}, sym(rng)};
  for (Index n = 0; n < N; ++n) p.forcing.push_back(sym(rng));
  return p;
}

inline StudyResult run_hypercircle(const StudyConfig& c) {
  StudyResult res;
  res.study = c.study;
  res.csv.header = {"instance", "lambda", "steps", "u0", "jump_E", "err_const_E", "err_affine_E",
                    "err_mid_E", "pythagoras_defect", "hypercircle_defect"};
  std::mt19937_64 rng(c.seed);
  double worst_p = 0.0, worst_h = 0.0;
  for (int i = 0; i < c.instances; ++i) {
    const auto p = random_mode_problem(rng, c);
    const auto e = semidiscrete::mode_energy_report(p, semidiscrete::solve_mode(p));
    const double dp = e.pythagoras_defect(), dh = e.hypercircle_defect();
    worst_p = std::max(worst_p, dp);
    worst_h = std::max(worst_h, dh);
    res.csv.rows.push_back({std::to_string(i), fmt(p.lambda), std::to_string(p.grid.n_intervals()),
                            fmt(p.u0), fmt(e.jump_E), fmt(e.err_const_E), fmt(e.err_affine_E),
                            fmt(e.err_mid_E), fmt(dp), fmt(dh)});
    if (!(dp <= c.identity_tol) || !(dh <= c.identity_tol))
      res.failures.push_back("instance " + std::to_string(i) + ": defects " + fmt(dp) + ", " +
                             fmt(dh) + " > " + fmt(c.identity_tol));
  }
  res.summary = "instances " + std::to_string(c.instances) + "  max pythagoras defect " +
                short_fmt(worst_p) + "  max hypercircle defect " + short_fmt(worst_h) + "\n";
  res.report["max_pythagoras_defect"] = worst_p;
  res.report["max_hypercircle_defect"] = worst_h;
  return res;
}

}  // namespace detail

/// Runs the configured study. Assertion failures are reported in the result;
/// ConfigError and StageFailure propagate.
inline StudyResult run_study(const StudyConfig& c) {
  StudyResult res;
  switch (c.study) {
    case Study::appendix_ode: res = detail::run_appendix(c); break;
    case Study::hypercircle: res = detail::run_hypercircle(c); break;
    default: {
      if (c.problem.mode) {
        if (c.study != Study::solve && c.study != Study::convergence)
          throw ConfigError("study '" + to_string(c.study) + "' needs a catalog problem, not a mode");
        res = detail::run_mode_study(c, *c.problem.mode);
        break;
      }
      const CatalogEntry* entry = nullptr;
      try {
        entry = &lookup(c.problem.name);
      } catch (const std::out_of_range& e) {
        throw ConfigError(e.what());
      }
      const int dim = c.mesh.dimension();
      if (!entry->supports(dim))
        throw ConfigError("problem '" + entry->name + "' does not live on mesh family '" +
                          c.mesh.family + "'");
      res = dim == 1 ? detail::run_pde_study<1>(c, *entry) : detail::run_pde_study<2>(c, *entry);
    }
  }
  Json report;
  report["study"] = to_string(c.study);
  report["config"] = c.source;
  report["status"] = res.passed() ? "pass" : "fail";
  report["failures"] = res.failures;
  for (auto& [k, v] : res.report.items()) report[k] = v;
  res.report = std::move(report);
  return res;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

}  // namespace hypercircle::harness
