#include "impm/stress_point.hpp"

namespace impm {

std::vector<ControlStep> drained_triaxial_path(const NorSandParams& prm, double axial_strain,
                                               int increments) {
  const double sigma_a0 = 3.0 * prm.p0 / (1.0 + 2.0 * prm.K0);
  const double sigma_r0 = prm.K0 * sigma_a0;
  std::vector<ControlStep> path(increments);
  const double de_a = axial_strain / increments;
  for (auto& step : path) {
    step[0] = {ControlKind::strain, de_a};
    step[1] = {ControlKind::stress, sigma_r0};
    step[2] = {ControlKind::stress, sigma_r0};
  }
  return path;
}

double final_convergence_order(const std::vector<double>& residuals, double floor) {
  // Residuals at or below the floor are roundoff-dominated and say nothing
  // about the contraction order, so they are dropped before measuring.
  std::vector<double> r;
  for (double v : residuals)
    if (v > floor) r.push_back(v);
  if (r.size() < 3) return 2.0;  // converged too fast to measure; treat as quadratic
  auto order_at = [&](std::size_t i) {
    const double denom = std::log(r[i + 1] / r[i]);
    if (denom >= 0.0) return 0.0;
    return std::log(r[i + 2] / r[i + 1]) / denom;
  };
  double best = order_at(r.size() - 3);
  if (r.size() >= 4) best = std::max(best, order_at(r.size() - 4));
  return best;
}

}  // namespace impm
