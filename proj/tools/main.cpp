#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "impm/errors.hpp"
#include "impm/scenarios.hpp"

namespace {

impm::Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
  impm::Config cfg = impm::Config::parse_file(path);
  for (const auto& o : overrides) cfg.set_override(o);
  return cfg;
}

void print_checks(const impm::RunReport& report) {
  for (const auto& c : report.checks)
    std::printf("[%s] %-45s measured %.6g  expected %.6g  tol %.3g\n",
                c.pass ? "PASS" : "FAIL", c.name.c_str(), c.measured, c.expected, c.tol);
}

int dispatch(int argc, char** argv) {
  CLI::App app{"implicit MPM engine with reverse-mode differentiated Jacobians"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string strategy = "sparse";

  auto* run = app.add_subcommand("run", "run a scenario config");
  run->add_option("config", config_path, "scenario config file")->required();
  run->add_option("--set", overrides, "override, e.g. --set solver.tol=1e-10");

  auto* check = app.add_subcommand("check", "run a scenario and its verification checks");
  check->add_option("config", config_path, "scenario config file")->required();
  check->add_option("--set", overrides, "override, e.g. --set geometry.cells=32");

  auto* bench = app.add_subcommand("bench", "differentiation cost benchmark");
  bench->add_option("config", config_path, "jacobian-bench config file")->required();
  bench->add_option("--strategy", strategy, "sparse | dense")->check(CLI::IsMember({"sparse", "dense"}));
  bench->add_option("--set", overrides, "override");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    const impm::RunReport report = impm::run_scenario(load_config(config_path, overrides), false);
    std::printf("%s: %d steps in %.2f s\n", report.scenario.c_str(), report.steps,
                report.wall_s);
    for (const auto& o : report.outputs) std::printf("wrote %s\n", o.c_str());
    return 0;
  }
  if (check->parsed()) {
    const impm::RunReport report = impm::run_scenario(load_config(config_path, overrides), true);
    print_checks(report);
    std::printf("%s: %zu checks, %s (%.2f s)\n", report.scenario.c_str(),
                report.checks.size(), report.all_pass() ? "all passed" : "FAILURES", report.wall_s);
    return report.all_pass() ? 0 : 1;
  }
  if (bench->parsed()) {
    const impm::RunReport report = impm::bench_scenario(
        load_config(config_path, overrides),
        strategy == "dense" ? impm::JacobianStrategy::dense : impm::JacobianStrategy::sparse);
    std::printf("%s [%s]: %d steps in %.2f s\n", report.scenario.c_str(), strategy.c_str(),
                report.steps, report.wall_s);
    for (const auto& o : report.outputs) std::printf("wrote %s\n", o.c_str());
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const impm::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 3;
  } catch (const impm::NonConvergenceError& e) {
    std::fprintf(stderr, "solver did not converge: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
