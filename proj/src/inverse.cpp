#include "impm/inverse.hpp"

#include <cmath>

#include "impm/sparse.hpp"

namespace impm {

InverseProblem::InverseProblem(InverseOptions opt) : opt_(std::move(opt)) {
  if (!(opt_.E_true > 0.0)) throw ConfigError("inverse: E_true must be positive");
  if (!(opt_.lr > 0.0)) throw ConfigError("inverse: learning rate must be positive");
}

MpmSim<2> InverseProblem::build_sim(double E) const {
  const double h = opt_.h;
  Grid<2> grid;
  grid.h = h;
  grid.origin = Vec2d{{-h, -h}};
  grid.nodes = {static_cast<int>(std::round(opt_.width / h)) + 3,
                static_cast<int>(std::round(opt_.height / h)) + 3};
  MaterialSpec mat;
  mat.kind = MaterialKind::hencky;
  mat.elastic = {E, opt_.nu};
  auto parts = seed_box<2>(grid, Vec2d{{0.0, 0.0}}, Vec2d{{opt_.width, opt_.height}}, opt_.ppc,
                           1000.0);

  SolverOptions sopt;
  sopt.total_lagrangian = true;
  sopt.strategy = opt_.strategy;
  sopt.tol = 1e-11;
  sopt.max_iterations = 30;
  MpmSim<2> sim(grid, std::move(parts), mat, sopt);
  sim.fix_nodes([](const Vec2d& x) { return x[1] <= 1e-12; });  // base: fixed
  const double w = opt_.width;
  sim.fix_nodes([w](const Vec2d& x) { return x[0] <= 1e-12 || x[0] >= w - 1e-12; },
                0);  // lateral rollers
  return sim;
}

ForwardRun InverseProblem::simulate(double log_E) {
  const double E = std::exp(log_E);
  sim_ = std::make_unique<MpmSim<2>>(build_sim(E));
  auto& sim = *sim_;

  // strip-load particles: top row under the centered strip
  double top_y = -1e300;
  for (const auto& p : sim.particles) top_y = std::max(top_y, p.X[1]);
  const double x_lo = 0.5 * opt_.width * (1.0 - opt_.strip_fraction);
  const double x_hi = 0.5 * opt_.width * (1.0 + opt_.strip_fraction);
  strip_particles_.clear();
  for (std::size_t pi = 0; pi < sim.particles.size(); ++pi) {
    auto& p = sim.particles[pi];
    if (p.X[1] >= top_y - 1e-9 && p.X[0] >= x_lo && p.X[0] <= x_hi) {
      strip_particles_.push_back(pi);
    }
  }
  if (strip_particles_.empty()) throw ConfigError("inverse: empty strip-load particle set");
  const double strip_width = opt_.width * opt_.strip_fraction;
  const double area_per_particle = strip_width / strip_particles_.size();
  for (std::size_t pi : strip_particles_)
    sim.particles[pi].traction_force = Vec2d{{0.0, -opt_.t_hat * area_per_particle}};

  sim.begin_step();

  // settlement gauge: mean interpolated vertical displacement of the strip
  gauge_.assign(sim.n_dofs(), 0.0);
  for (std::size_t pi : strip_particles_)
    sim.add_interpolation_weights(pi, 1, 1.0 / strip_particles_.size(),
                                  std::span<double>(gauge_.data(), gauge_.size()));

  ForwardRun run;
  u_levels_.clear();
  scale_levels_.clear();
  for (int level = 1; level <= opt_.levels; ++level) {
    const double scale = static_cast<double>(level) / opt_.levels;
    sim.newton_solve(scale);  // warm-started total displacement solve
    const auto& u = sim.nodal_solution();
    u_levels_.push_back(u);
    scale_levels_.push_back(scale);
    double delta = 0.0;
    for (std::size_t d = 0; d < u.size(); ++d) delta += gauge_[d] * u[d];
    run.displacement.push_back(-delta);  // settlement positive downward
    run.force.push_back(opt_.t_hat * scale * strip_width);
  }
  sim.commit_step();
  return run;
}

void InverseProblem::generate_reference() {
  reference_ = simulate(std::log(opt_.E_true));
}

double InverseProblem::fd_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double xb = 0.0, yb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    xb += x[i];
    yb += y[i];
  }
  xb /= n;
  yb /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - xb) * (x[i] - xb);
    sxy += (x[i] - xb) * (y[i] - yb);
  }
  return sxy / sxx;
}

double InverseProblem::loss(const ForwardRun& run) const {
  if (!reference_) throw ConfigError("inverse: reference response not set");
  const double s = fd_slope(run.displacement, run.force);
  const double s_ref = fd_slope(reference_->displacement, reference_->force);
  if (!(s > 0.0) || !(s_ref > 0.0))
    throw NonConvergenceError("inverse: non-positive force-displacement slope", {});
  // squared log-slope mismatch: scale-free, so a fixed learning rate in
  // ln(E) contracts at the same rate anywhere on the curve
  const double mis = std::log(s / s_ref);
  return mis * mis;
}

std::vector<double> InverseProblem::loss_gradient_wrt_displacement(const ForwardRun& run) const {
  // L = (s/s_ref - 1)^2 with s the least-squares slope of force on settlement
  const std::size_t n = run.displacement.size();
  const double s_ref = fd_slope(reference_->displacement, reference_->force);
  const double s = fd_slope(run.displacement, run.force);
  double xb = 0.0, yb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    xb += run.displacement[i];
    yb += run.force[i];
  }
  xb /= n;
  yb /= n;
  double sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    sxx += (run.displacement[i] - xb) * (run.displacement[i] - xb);
  std::vector<double> g(n);
  const double pref = 2.0 * std::log(s / s_ref) / s;
  for (std::size_t i = 0; i < n; ++i) {
    const double D = run.displacement[i] - xb;
    const double G = run.force[i] - yb;
    g[i] = pref * (G - 2.0 * s * D) / sxx;
  }
  return g;
}

double InverseProblem::gradient(double log_E, const ForwardRun& run) const {
  if (!sim_) throw ConfigError("inverse: no retained forward run");
  auto& sim = *sim_;
  const auto dL_ddelta = loss_gradient_wrt_displacement(run);

  double dL_dtheta = 0.0;
  ad::Tape tape;
  for (std::size_t level = 0; level < u_levels_.size(); ++level) {
    // dL/du of this level (settlement is positive downward: delta = -gauge.u)
    std::vector<double> rhs(sim.n_dofs(), 0.0);
    for (int d = 0; d < sim.n_dofs(); ++d) rhs[d] = -dL_ddelta[level] * gauge_[d];

    // re-record the converged residual with theta = ln E as an extra input
    sim.record_residual(u_levels_[level], scale_levels_[level], tape, log_E);
    JacobianStats stats;
    const CsrMatrix J = sim.assembler().sparse(tape, &stats);
    const std::vector<double> lambda = sparse_lu_solve(J.transposed(), rhs);

    // one seeded backward pass gives lambda^T dr/dtheta
    std::vector<double> grad(sim.n_dofs() + 1);
    std::vector<double> adjoint;
    tape.backward(std::span<const double>(lambda.data(), lambda.size()),
                  std::span<double>(grad.data(), grad.size()), adjoint);
    dL_dtheta -= grad[sim.n_dofs()];
  }
  return dL_dtheta;
}

std::vector<GdRecord> InverseProblem::gradient_descent(double E0) {
  if (!reference_) generate_reference();
  double theta = std::log(E0);
  std::vector<GdRecord> trajectory;
  double initial_loss = -1.0;
  for (int it = 0; it < opt_.max_gd_iterations; ++it) {
    const ForwardRun run = simulate(theta);
    const double L = loss(run);
    if (it == 0) initial_loss = std::max(L, 1e-300);
    if (L > 1e6 * initial_loss)
      throw NonConvergenceError(
          "inverse gradient descent diverged; reduce the learning rate", {});
    const double g = gradient(theta, run);
    trajectory.push_back({it, std::exp(theta), L, g});
    if (L <= opt_.loss_threshold) break;
    theta -= opt_.lr * g;
  }
  return trajectory;
}

}  // namespace impm
