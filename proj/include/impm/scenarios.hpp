#pragma once

#include <string>
#include <vector>

#include "impm/config.hpp"
#include "impm/jacobian.hpp"

namespace impm {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double expected = 0.0;  // bound or target
  double tol = 0.0;       // tolerance on the comparison (0 for pure bounds)
  bool pass = false;
};

struct RunReport {
  std::string scenario;
  int steps = 0;
  double wall_s = 0.0;
  std::vector<CheckResult> checks;
  std::vector<std::string> outputs;  // files written

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

// Runs the scenario described by the config; with_checks additionally runs
// the scenario's registered verification oracles.
RunReport run_scenario(const Config& cfg, bool with_checks);

// Differentiation-cost benchmark (jacobian-bench scenario) under one strategy.
RunReport bench_scenario(const Config& cfg, JacobianStrategy strategy);

void write_report_json(const RunReport& report, const std::string& path);

}  // namespace impm
