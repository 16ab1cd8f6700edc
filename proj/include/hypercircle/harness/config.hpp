#pragma once

#include "hypercircle/common.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

namespace hypercircle::harness {

using Json = nlohmann::ordered_json;

/// Malformed or inconsistent configuration; the CLI answers with usage text.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class Study { solve, convergence, upper_bound, effectivity, appendix_ode, hypercircle,
                   residual_identity };

inline const std::vector<std::pair<Study, std::string>>& study_names() {
  static const std::vector<std::pair<Study, std::string>> names{
      {Study::solve, "solve"},
      {Study::convergence, "convergence"},
      {Study::upper_bound, "upper-bound"},
      {Study::effectivity, "effectivity"},
      {Study::appendix_ode, "appendix-ode"},
      {Study::hypercircle, "hypercircle"},
      {Study::residual_identity, "residual-identity"}};
  return names;
}

inline std::string to_string(Study s) {
  for (const auto& [k, v] : study_names())
    if (k == s) return v;
  return "?";
}

inline Study parse_study(const std::string& name) {
  for (const auto& [k, v] : study_names())
    if (v == name) return k;
  std::string all;
  for (const auto& [k, v] : study_names()) all += (all.empty() ? "" : ", ") + v;
  throw ConfigError("unknown study '" + name + "' (expected one of: " + all + ")");
}

enum class TimeRule { uniform, tau_eq_h, tau_eq_h_sq };

struct MeshConfig {
  std::string family = "interval";  // interval | unit_square
  Index resolution = 4;
  int refinements = 0;
  int dimension() const { return family == "unit_square" ? 2 : 1; }
};

struct TimeConfig {
  double T = 1.0;
  Index steps = 4;  // uniform rule: steps at level 0, doubled with each refinement
  TimeRule rule = TimeRule::uniform;
  double grading = 1.0;  // ratio of consecutive steps; 1 is uniform
};

struct ModeConfig {
  double lambda = 1.0;
  double f = 1.0;
  double u0 = 0.0;
};

struct ProblemConfig {
  std::string name = "sin1d_decay";
  std::optional<ModeConfig> mode;  // set when the problem is a single mode
};

struct StudyConfig {
  Study study = Study::solve;
  MeshConfig mesh;
  TimeConfig time;
  ProblemConfig problem;
  int flux_degree = 2;
  double solver_tol = 1e-12;
  Index solver_max_iters = 0;
  std::string csv_path;
  std::string json_path;
  int threads = 1;  // 0: auto
  bool dump_flux = false;

  // effectivity
  double effectivity_min = 1.0;
  double effectivity_max = 10.0;
  double effectivity_growth = 1.5;  // last level <= growth * first level
  std::optional<double> gamma;      // assert only on levels with gamma_realized <= gamma

  // appendix-ode
  std::vector<double> lambdas;

  // hypercircle
  int instances = 200;
  std::uint64_t seed = 1;
  Index max_steps = 16;
  double lambda_min = 1e-3;
  double lambda_max = 1e3;
  double identity_tol = 1e-11;

  // residual-identity
  int fields = 20;
  double residual_tol = 1e-8;

  Json source;  // echoed into the JSON report
};

namespace detail {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline void require_object(const Json& j, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
}

}  // namespace detail

inline StudyConfig parse_config(const Json& j) {
  using detail::get_or;
  detail::require_object(j, "config");
  StudyConfig c;
  c.source = j;
  if (j.contains("study")) c.study = parse_study(get_or<std::string>(j, "study", ""));

  if (j.contains("mesh")) {
    const auto& m = j.at("mesh");
    detail::require_object(m, "mesh");
    c.mesh.family = get_or<std::string>(m, "family", c.mesh.family);
    c.mesh.resolution = get_or<Index>(m, "resolution", c.mesh.resolution);
    c.mesh.refinements = get_or<int>(m, "refinements", c.mesh.refinements);
  }
  if (c.mesh.family != "interval" && c.mesh.family != "unit_square")
    throw ConfigError("mesh.family must be 'interval' or 'unit_square', got '" + c.mesh.family + "'");
  if (c.mesh.resolution < 1) throw ConfigError("mesh.resolution must be >= 1");
  if (c.mesh.refinements < 0) throw ConfigError("mesh.refinements must be >= 0");

  if (j.contains("time")) {
    const auto& t = j.at("time");
    detail::require_object(t, "time");
    c.time.T = get_or<double>(t, "T", c.time.T);
    c.time.steps = get_or<Index>(t, "steps", c.time.steps);
    c.time.grading = get_or<double>(t, "grading", c.time.grading);
    const auto rule = get_or<std::string>(t, "rule", "uniform");
    if (rule == "uniform") c.time.rule = TimeRule::uniform;
    else if (rule == "tau_eq_h") c.time.rule = TimeRule::tau_eq_h;
    else if (rule == "tau_eq_h_sq") c.time.rule = TimeRule::tau_eq_h_sq;
    else throw ConfigError("time.rule must be uniform, tau_eq_h or tau_eq_h_sq, got '" + rule + "'");
  }
  if (!(c.time.T > 0.0)) throw ConfigError("time.T must be > 0");
  if (c.time.steps < 1) throw ConfigError("time.steps must be >= 1");
  if (!(c.time.grading > 0.0)) throw ConfigError("time.grading must be > 0");

  if (j.contains("problem")) {
    const auto& p = j.at("problem");
    if (p.is_string()) {
      c.problem.name = p.get<std::string>();
    } else if (p.is_object() && p.contains("lambda")) {
      ModeConfig m;
      m.lambda = get_or<double>(p, "lambda", m.lambda);
      m.f = get_or<double>(p, "f", m.f);
      m.u0 = get_or<double>(p, "u0", m.u0);
      if (!(m.lambda > 0.0)) throw ConfigError("problem.lambda must be > 0");
      c.problem.mode = m;
      c.problem.name = "mode";
    } else if (p.is_object() && p.contains("name")) {
      c.problem.name = get_or<std::string>(p, "name", "");
    } else {
      throw ConfigError("problem must be a catalog name or an object with 'name' or 'lambda'");
    }
  }

  c.flux_degree = get_or<int>(j, "flux_degree", c.flux_degree);
  if (c.flux_degree < 2) throw ConfigError("flux_degree must be >= 2");
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    detail::require_object(s, "solver");
    c.solver_tol = get_or<double>(s, "tol", c.solver_tol);
    c.solver_max_iters = get_or<Index>(s, "max_iters", c.solver_max_iters);
    if (!(c.solver_tol > 0.0)) throw ConfigError("solver.tol must be > 0");
  }
  if (j.contains("output")) {
    const auto& o = j.at("output");
    detail::require_object(o, "output");
    c.csv_path = get_or<std::string>(o, "csv", "");
    c.json_path = get_or<std::string>(o, "json", "");
    c.dump_flux = get_or<bool>(o, "dump_flux", false);
  }
  if (j.contains("threads")) {
    const auto& t = j.at("threads");
    if (t.is_string() && t.get<std::string>() == "auto") c.threads = 0;
    else if (t.is_number_integer() && t.get<int>() >= 1) c.threads = t.get<int>();
    else throw ConfigError("threads must be a positive integer or \"auto\"");
  }

  if (j.contains("effectivity")) {
    const auto& e = j.at("effectivity");
    detail::require_object(e, "effectivity");
    c.effectivity_min = get_or<double>(e, "min", c.effectivity_min);
    c.effectivity_max = get_or<double>(e, "max", c.effectivity_max);
    c.effectivity_growth = get_or<double>(e, "growth", c.effectivity_growth);
    if (e.contains("gamma")) c.gamma = get_or<double>(e, "gamma", 0.0);
  }
  if (j.contains("appendix")) {
    const auto& a = j.at("appendix");
    detail::require_object(a, "appendix");
    c.lambdas = get_or<std::vector<double>>(a, "lambdas", {});
    for (double l : c.lambdas)
      if (!(l > 0.0)) throw ConfigError("appendix.lambdas must be positive");
  }
  if (j.contains("hypercircle")) {
    const auto& h = j.at("hypercircle");
    detail::require_object(h, "hypercircle");
    c.instances = get_or<int>(h, "instances", c.instances);
    c.seed = get_or<std::uint64_t>(h, "seed", c.seed);
    c.max_steps = get_or<Index>(h, "max_steps", c.max_steps);
    c.lambda_min = get_or<double>(h, "lambda_min", c.lambda_min);
    c.lambda_max = get_or<double>(h, "lambda_max", c.lambda_max);
    c.identity_tol = get_or<double>(h, "tol", c.identity_tol);
    if (c.instances < 1 || c.max_steps < 1 || !(c.lambda_min > 0.0) ||
        !(c.lambda_max >= c.lambda_min))
      throw ConfigError("hypercircle: need instances >= 1, max_steps >= 1, 0 < lambda_min <= lambda_max");
  }
  if (j.contains("residual_identity")) {
    const auto& r = j.at("residual_identity");
    detail::require_object(r, "residual_identity");
    c.fields = get_or<int>(r, "fields", c.fields);
    c.seed = get_or<std::uint64_t>(r, "seed", c.seed);
    c.residual_tol = get_or<double>(r, "tol", c.residual_tol);
    if (c.fields < 1) throw ConfigError("residual_identity.fields must be >= 1");
  }
  return c;
}

inline StudyConfig parse_config_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline StudyConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Documented defaults, shown by --help.
inline const char* config_help() {
  return R"(Config (JSON object; every key optional):
  study            one of the study names (the command-line study wins)
  mesh.family      "interval" | "unit_square"                 [interval]
  mesh.resolution  cells per side at level 0                  [4]
  mesh.refinements number of extra levels, resolution doubled  [0]
  time.T           final time                                 [1]
  time.steps       steps at level 0 for rule "uniform"        [4]
  time.rule        "uniform" | "tau_eq_h" (N = ceil(T/h_max))
                   | "tau_eq_h_sq" (N = ceil(T/h_max^2))      [uniform]
  time.grading     step ratio for graded grids                [1]
  problem          catalog name (sin1d_decay, sin2d_decay, poly1d, zero)
                   or {"lambda": l, "f": 1, "u0": 0} for a single mode
  flux_degree      RTN degree, >= 2                           [2]
  solver.tol       relative CG tolerance                      [1e-12]
  solver.max_iters CG iteration cap, 0 = 10 n                 [0]
  output.csv, output.json, output.dump_flux
  threads          worker count or "auto"                     [1]
  effectivity      {"min": 1, "max": 10, "growth": 1.5, "gamma": none}
  appendix         {"lambdas": [1e-3, ..., 1e3]}
  hypercircle      {"instances": 200, "seed": 1, "max_steps": 16,
                    "lambda_min": 1e-3, "lambda_max": 1e3, "tol": 1e-11}
  residual_identity {"fields": 20, "seed": 1, "tol": 1e-8}
)";
}

}  // namespace hypercircle::harness
