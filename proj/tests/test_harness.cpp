#include "hypercircle/harness/study.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace hypercircle;
using namespace hypercircle::harness;

namespace {

StudyConfig config(const std::string& text) { return parse_config_text(text); }

std::vector<std::string> column(const CsvTable& t, const std::string& name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  EXPECT_NE(it, t.header.end()) << name;
  std::vector<std::string> out;
  for (const auto& r : t.rows) out.push_back(r[it - t.header.begin()]);
  return out;
}

}  // namespace

TEST(Config, Defaults) {
  const auto c = config("{}");
  EXPECT_EQ(c.study, Study::solve);
  EXPECT_EQ(c.mesh.family, "interval");
  EXPECT_EQ(c.mesh.dimension(), 1);
  EXPECT_EQ(c.flux_degree, 2);
  EXPECT_EQ(c.threads, 1);
  EXPECT_EQ(c.problem.name, "sin1d_decay");
  EXPECT_FALSE(c.problem.mode);
}

TEST(Config, ParsesNestedSections) {
  const auto c = config(R"({"study": "effectivity",
    "mesh": {"family": "unit_square", "resolution": 3, "refinements": 2},
    "time": {"T": 0.5, "rule": "tau_eq_h_sq"}, "problem": {"lambda": 2, "f": 3},
    "threads": "auto", "effectivity": {"gamma": 4}})");
  EXPECT_EQ(c.study, Study::effectivity);
  EXPECT_EQ(c.mesh.dimension(), 2);
  EXPECT_EQ(c.mesh.resolution, 3);
  EXPECT_EQ(c.time.rule, TimeRule::tau_eq_h_sq);
  EXPECT_EQ(c.time.T, 0.5);
  ASSERT_TRUE(c.problem.mode);
  EXPECT_EQ(c.problem.mode->f, 3.0);
  EXPECT_EQ(c.threads, 0);
  EXPECT_EQ(*c.gamma, 4.0);
}

TEST(Config, RejectsMalformedInput) {
  for (const char* bad :
       {"not json", "[]", R"({"study": "nope"})", R"({"mesh": {"family": "torus"}})",
        R"({"mesh": {"resolution": 0}})", R"({"mesh": {"refinements": -1}})",
        R"({"mesh": {"resolution": "four"}})", R"({"time": {"rule": "tau_eq_2h"}})",
        R"({"time": {"T": 0}})", R"({"flux_degree": 1})", R"({"threads": 0})",
        R"({"problem": {"lambda": -1}})", R"({"problem": 3})", R"({"appendix": {"lambdas": [0]}})",
        R"({"hypercircle": {"instances": 0}})", R"({"residual_identity": {"fields": 0}})"})
    EXPECT_THROW(config(bad), ConfigError) << bad;
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, SampleConfigsParse) {
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(HYPERCIRCLE_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(entry.path().string())) << entry.path();
    ++count;
  }
  EXPECT_GE(count, 6);
}

TEST(Config, StudyNamesRoundTrip) {
  for (const auto& [s, name] : study_names()) EXPECT_EQ(parse_study(name), s);
  EXPECT_NE(std::string(config_help()).find("tau_eq_h"), std::string::npos);
}

TEST(Helpers, StepsForLevel) {
  StudyConfig c;
  c.time.rule = TimeRule::tau_eq_h;
  EXPECT_EQ(steps_for_level(c, 0.25, 0), 4);  // exact quotient is not rounded up
  EXPECT_EQ(steps_for_level(c, std::sqrt(2.0) / 2.0, 0), 2);
  EXPECT_EQ(steps_for_level(c, std::sqrt(2.0) / 16.0, 0), 12);
  c.time.rule = TimeRule::tau_eq_h_sq;
  EXPECT_EQ(steps_for_level(c, 0.25, 0), 16);
  c.time.rule = TimeRule::uniform;
  c.time.steps = 3;
  EXPECT_EQ(steps_for_level(c, 0.1, 2), 12);
}

TEST(Helpers, EocAndFormatting) {
  EXPECT_NEAR(*eoc(4.0, 1.0, 0.5, 0.25), 2.0, 1e-15);
  EXPECT_FALSE(eoc(0.0, 1.0, 0.5, 0.25));
  EXPECT_FALSE(eoc(1.0, 1.0, 0.5, 0.5));
  const double x = 0.1 + 0.2;
  EXPECT_EQ(std::stod(fmt(x)), x);
  EXPECT_EQ(fmt(std::optional<double>()), "");
}

TEST(Studies, ConvergenceWithoutRefinementHasOneRowAndNoRates) {
  auto c = config(R"({"study": "convergence", "mesh": {"resolution": 4}, "time": {"steps": 4}})");
  const auto r = run_study(c);
  ASSERT_EQ(r.csv.rows.size(), 1u);
  EXPECT_EQ(column(r.csv, "eoc_err_energy")[0], "");
  EXPECT_EQ(column(r.csv, "eoc_est_total")[0], "");
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.csv.header.front(), "level");
  EXPECT_EQ(r.csv.header[11], "effectivity");
}

TEST(Studies, UpperBoundOnSquare) {
  const auto r = run_study(config(R"({"study": "upper-bound",
    "mesh": {"family": "unit_square", "resolution": 4}, "time": {"steps": 4},
    "problem": "sin2d_decay"})"));
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.report["status"], "pass");
  EXPECT_GT(std::stod(column(r.csv, "bound_margin")[0]), 0.0);
  EXPECT_TRUE(r.report["levels"][0].contains("gamma_realized"));
  EXPECT_FALSE(r.report["levels"][0].contains("flux"));
}

TEST(Studies, FluxDumpHasOneBlockPerInterval) {
  auto c = config(R"({"mesh": {"resolution": 4}, "time": {"steps": 3}})");
  c.dump_flux = true;
  const auto r = run_study(c);
  const auto& flux = r.report["levels"][0]["flux"];
  ASSERT_EQ(flux.size(), 3u);
  EXPECT_EQ(flux[0].size(), 4u);     // cells
  EXPECT_EQ(flux[0][0].size(), 4u);  // RTN_2 on an interval
}

TEST(Studies, CounterexampleRatiosAreMonotone) {
  const auto r = run_study(config(R"({"study": "appendix-ode"})"));
  EXPECT_TRUE(r.passed());
  const auto lambdas = column(r.csv, "lambda");
  const auto ra = column(r.csv, "ratio_affine");
  const auto rc = column(r.csv, "ratio_const");
  ASSERT_EQ(lambdas.size(), 7u);
  for (std::size_t i = 1; i < lambdas.size(); ++i) {
    if (std::stod(lambdas[i]) <= 1.0) {
      EXPECT_GT(std::stod(ra[i - 1]), std::stod(ra[i]));
    }
    if (std::stod(lambdas[i - 1]) >= 1.0) {
      EXPECT_GT(std::stod(rc[i]), std::stod(rc[i - 1]));
    }
  }
}

TEST(Studies, HypercircleAndResidualIdentity) {
  auto h = run_study(config(R"({"study": "hypercircle", "hypercircle": {"instances": 40}})"));
  EXPECT_TRUE(h.passed());
  EXPECT_EQ(h.csv.rows.size(), 40u);
  auto r = run_study(config(R"({"study": "residual-identity", "time": {"steps": 3},
    "residual_identity": {"fields": 5}})"));
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.csv.rows.size(), 5u);
}

TEST(Studies, ModeConvergence) {
  const auto r = run_study(config(R"({"study": "convergence", "mesh": {"refinements": 3},
    "problem": {"lambda": 2, "f": 1, "u0": 0}})"));
  ASSERT_EQ(r.csv.rows.size(), 4u);
  const auto rates = column(r.csv, "eoc_nodal_error");
  for (std::size_t i = 1; i < rates.size(); ++i) EXPECT_NEAR(std::stod(rates[i]), 1.0, 0.1);
  EXPECT_THROW(run_study(config(R"({"study": "upper-bound", "problem": {"lambda": 2}})")),
               ConfigError);
}

TEST(Studies, EffectivityFailuresAreReported) {
  auto c = config(R"({"study": "effectivity", "mesh": {"resolution": 4}, "time": {"steps": 4},
    "effectivity": {"min": 50, "max": 60}})");
  const auto r = run_study(c);
  EXPECT_FALSE(r.passed());
  EXPECT_EQ(r.exit_code(), 1);
  EXPECT_EQ(r.report["status"], "fail");
}

TEST(Studies, ProblemAndMeshMustAgree) {
  EXPECT_THROW(run_study(config(R"({"problem": "sin2d_decay"})")), ConfigError);
  EXPECT_THROW(run_study(config(R"({"problem": "missing"})")), ConfigError);
}

TEST(Studies, StageFailureNamesModule) {
  // sin(pi x) loads are mass-matrix eigenvectors in 1D, so use the polynomial problem.
  auto c = config(R"({"mesh": {"resolution": 16}, "time": {"steps": 2}, "problem": "poly1d",
    "solver": {"tol": 1e-14, "max_iters": 1}})");
  try {
    run_study(c);
    FAIL();
  } catch (const StageFailure& e) {
    EXPECT_EQ(e.module(), "timestepper");
  }
}

TEST(Determinism, CsvIsIdenticalAcrossThreadCounts) {
  const char* text = R"({"study": "upper-bound", "mesh": {"family": "unit_square",
    "resolution": 2, "refinements": 2}, "time": {"rule": "tau_eq_h"}, "problem": "sin2d_decay"})";
  auto one = config(text), four = config(text);
  four.threads = 4;
  const auto a = run_study(one).csv.str();
  const auto b = run_study(four).csv.str();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, run_study(one).csv.str());
}
