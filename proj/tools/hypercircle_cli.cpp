#include "hypercircle/harness/study.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace hh = hypercircle::harness;

int main(int argc, char** argv) {
  CLI::App app{"Equilibrated-flux estimators for implicit Euler / P1 heat equation runs"};
  app.footer(hh::config_help());
  std::string study, config_path, csv_path, json_path;
  int threads = -1;
  bool dump_flux = false;
  std::string studies;
  for (const auto& [k, v] : hh::study_names()) studies += (studies.empty() ? "" : ", ") + v;
  app.add_option("study", study, "Study to run: " + studies)->required();
  app.add_option("--config", config_path, "JSON config file")->required();
  app.add_option("--threads", threads, "Worker threads (0 = auto); overrides the config");
  app.add_option("--csv", csv_path, "CSV output path; overrides the config");
  app.add_option("--json", json_path, "JSON report path; overrides the config");
  app.add_flag("--dump-flux", dump_flux, "Include flux coefficients in the JSON report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  hh::StudyConfig cfg;
  try {
    cfg = hh::load_config(config_path);
    cfg.study = hh::parse_study(study);
  } catch (const hh::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  if (threads >= 0) cfg.threads = threads;
  if (!csv_path.empty()) cfg.csv_path = csv_path;
  if (!json_path.empty()) cfg.json_path = json_path;
  if (dump_flux) cfg.dump_flux = true;

  hh::StudyResult result;
  try {
    result = hh::run_study(cfg);
  } catch (const hh::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const hh::StageFailure& e) {
    std::cerr << "numeric failure in " << e.what() << "\n";
    return 3;
  }

  try {
    if (!cfg.csv_path.empty()) hh::write_text(cfg.csv_path, result.csv.str());
    if (!cfg.json_path.empty()) hh::write_text(cfg.json_path, result.report.dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }

  std::cout << hh::to_string(cfg.study) << "\n" << result.summary;
  for (const auto& f : result.failures) std::cout << "FAIL " << f << "\n";
  std::cout << (result.passed() ? "PASS" : "FAIL") << "\n";
  return result.exit_code();
}
