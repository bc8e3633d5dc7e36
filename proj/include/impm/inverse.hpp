#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "impm/mpm_solver.hpp"

namespace impm {

// Desk-scale inverse benchmark: a plane-strain elastic column loaded by a
// surface strip, stepped in independent load levels from the reference
// configuration (total-Lagrangian), so the converged solve of each level is
// the only constraint tying the response to the parameter and the per-level
// implicit-function adjoint is exact.
struct InverseOptions {
  double E_true = 1.0e6;  // [Pa]
  double nu = 0.2;
  double width = 4.0;           // [m]
  double height = 4.0;          // [m]
  double h = 0.5;               // grid spacing [m]
  int ppc = 2;                  // particles per cell per axis
  double strip_fraction = 0.5;  // centered strip of the top surface
  double t_hat = 40.0e3;        // final strip traction [Pa]
  int levels = 10;              // load levels
  double lr = 0.2;              // gradient-descent rate in ln(E)
  double loss_threshold = 1.0e-10;
  int max_gd_iterations = 20;
  JacobianStrategy strategy = JacobianStrategy::sparse;
};

struct ForwardRun {
  std::vector<double> force;         // applied strip force per level [N/m]
  std::vector<double> displacement;  // mean strip settlement per level [m]
};

struct GdRecord {
  int iteration;
  double E;
  double loss;
  double gradient;  // dL/d ln E
};

class InverseProblem {
 public:
  explicit InverseProblem(InverseOptions opt);

  // Full forward simulation; converged nodal solutions of every level are
  // retained for the adjoint sweep.
  ForwardRun simulate(double log_E);

  void generate_reference();  // forward run at E_true, stored immutably
  const ForwardRun& reference() const { return *reference_; }
  void set_reference(ForwardRun ref) { reference_ = std::move(ref); }

  // squared relative mismatch of the force-displacement slope
  double loss(const ForwardRun& run) const;

  // dL/d ln E by per-level adjoints over the retained forward run
  double gradient(double log_E, const ForwardRun& run) const;

  std::vector<GdRecord> gradient_descent(double E0);

  static double fd_slope(const std::vector<double>& x, const std::vector<double>& y);

 private:
  MpmSim<2> build_sim(double E) const;
  std::vector<double> loss_gradient_wrt_displacement(const ForwardRun& run) const;

  InverseOptions opt_;
  std::optional<ForwardRun> reference_;

  // retained forward state for the adjoint sweep
  std::unique_ptr<MpmSim<2>> sim_;
  std::vector<std::vector<double>> u_levels_;
  std::vector<double> scale_levels_;
  std::vector<std::size_t> strip_particles_;
  std::vector<double> gauge_;  // d(mean settlement)/du
};

}  // namespace impm
