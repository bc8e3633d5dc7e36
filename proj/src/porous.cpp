#include "impm/porous.hpp"

#include <algorithm>
#include <cmath>

namespace impm {

double terzaghi_pressure_ratio(double z_over_H, double Tv, int terms) {
  double sum = 0.0;
  for (int m = 0; m < terms; ++m) {
    const double M = 0.5 * M_PI * (2.0 * m + 1.0);
    sum += (2.0 / M) * std::sin(M * z_over_H) * std::exp(-M * M * Tv);
  }
  return sum;
}

CoupledSim::CoupledSim(Grid<2> g, std::vector<Particle<2>> parts, PoroParams pp,
                       SolverOptions opt)
    : grid(g), particles(std::move(parts)), poro(pp), options(opt) {
  poro.validate();
  fixed_u.assign(static_cast<std::size_t>(grid.node_count()) * 2, 0);
  fixed_p.assign(grid.node_count(), 0);
}

void CoupledSim::initialize() {
  const int n_nodes = grid.node_count();
  node_mass_.assign(n_nodes, 0.0);
  supports_.resize(particles.size());
  surface_y_ = -1e300;
  double max_mass = 0.0;
  for (const auto& p : particles) {
    max_mass = std::max(max_mass, p.m);
    surface_y_ = std::max(surface_y_, p.X[1]);
  }
  for (std::size_t pi = 0; pi < particles.size(); ++pi) {
    const auto& p = particles[pi];
    Support& sup = supports_[pi];
    sup.count = 0;
    std::array<SupportRange, 2> range;
    for (int a = 0; a < 2; ++a) {
      range[a] = gimp_support_1d(p.X[a], p.lp[a], grid.origin[a], grid.h);
      if (range[a].first < 0 || range[a].first + range[a].count > grid.nodes[a])
        throw OutOfDomainError("particle " + std::to_string(pi) +
                               " has support outside the grid on axis " + std::to_string(a));
    }
    for (int i = range[0].first; i < range[0].first + range[0].count; ++i)
      for (int j = range[1].first; j < range[1].first + range[1].count; ++j) {
        const Vec2d node_x{{grid.origin[0] + i * grid.h, grid.origin[1] + j * grid.h}};
        const auto wg = gimp_weight<2>(p.X, p.lp, node_x, grid.h);
        const int k = sup.count++;
        sup.node[k] = grid.flat({i, j});
        sup.w[k] = wg.w;
        sup.grad[k] = wg.grad;
        node_mass_[sup.node[k]] += wg.w * p.m;
      }
  }
  active_.assign(n_nodes, 0);
  const double cutoff = 1e-12 * max_mass;
  for (int n = 0; n < n_nodes; ++n) active_[n] = node_mass_[n] > cutoff ? 1 : 0;

  std::vector<std::uint8_t> fixed3(static_cast<std::size_t>(n_nodes) * 3, 0);
  for (int n = 0; n < n_nodes; ++n) {
    fixed3[n * 3 + 0] = fixed_u[n * 2 + 0];
    fixed3[n * 3 + 1] = fixed_u[n * 2 + 1];
    fixed3[n * 3 + 2] = fixed_p[n];
  }
  dofs_.build(n_nodes, 3, active_, fixed3);
  assembler_ = JacobianAssembler<2>(grid, dofs_, ShapeFunctionKind::gimp);
  p_nodes_.assign(n_nodes, 0.0);
  u_total_y_.assign(particles.size(), 0.0);
  initialized_ = true;
}

std::vector<double> CoupledSim::residual(std::span<const double> x, double dt) const {
  std::vector<double> r;
  assemble<double>(x, dt, r);
  return r;
}

void CoupledSim::record_residual(std::span<const double> x, double dt, ad::Tape& tape) const {
  using ad::Var;
  tape.clear();
  std::vector<Var> xv;
  xv.reserve(x.size());
  for (double xi : x) xv.push_back(tape.input(xi));
  std::vector<Var> rv;
  assemble<Var>(std::span<const Var>(xv.data(), xv.size()), dt, rv);
  tape.set_outputs(rv);
}

StepRecord CoupledSim::step(double dt) {
  if (!initialized_) initialize();
  StepRecord rec;
  rec.step = ++step_counter_;
  const auto t0 = std::chrono::steady_clock::now();

  // unknowns: displacement increment (0) and pressure (warm start)
  std::vector<double> x(dofs_.n_dofs, 0.0);
  for (int d = 0; d < dofs_.n_dofs; ++d)
    if (dofs_.field_of[d] == 2) x[d] = p_nodes_[dofs_.node_of[d]];

  std::vector<double> r = residual(x, dt);
  const double r0 = norm(r);
  rec.r0_norm = r0;
  // normalize against the largest initial residual seen so far (the load
  // application step); later warm-started steps begin nearly converged and
  // their own r0 is no measure of the force scale
  r_scale_ = std::max(r_scale_, r0);
  const double denom = r_scale_;
  bool converged = r0 < options.abs_floor;

  for (int it = 1; it <= options.max_iterations && !converged; ++it) {
    record_residual(x, dt, tape_);
    JacobianStats stats;
    std::vector<double> rhs(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) rhs[i] = -r[i];
    std::vector<double> delta;
    if (options.strategy == JacobianStrategy::dense) {
      const DenseMatrix J = assembler_.dense(tape_, &stats);
      delta = sparse_lu_solve(assembler_.to_csr(J), rhs);
    } else {
      const CsrMatrix J = assembler_.sparse(tape_, &stats, options.interference);
      delta = sparse_lu_solve(J, rhs);
    }
    rec.diff_seconds += stats.seconds;
    rec.backward_passes += stats.total_passes;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += delta[i];
    r = residual(x, dt);
    rec.rel_residuals.push_back(norm(r) / denom);
    rec.iterations = it;
    if (norm(r) / denom <= options.tol || norm(r) < options.abs_floor) converged = true;
  }
  if (!converged)
    throw NonConvergenceError("coupled Newton did not converge at step " +
                                  std::to_string(step_counter_),
                              rec.rel_residuals);

  // commit: deformation gradients, pressures, accumulated settlement
  for (std::size_t pi = 0; pi < particles.size(); ++pi) {
    auto& p = particles[pi];
    const Support& sup = supports_[pi];
    Mat2d G{};
    double duy = 0.0;
    for (int k = 0; k < sup.count; ++k) {
      for (int c = 0; c < 2; ++c) {
        const std::int32_t dof = dofs_.dof(sup.node[k], c);
        const double uv = dof >= 0 ? x[dof] : 0.0;
        if (c == 1) duy += sup.w[k] * uv;
        for (int a = 0; a < 2; ++a) G(c, a) += uv * sup.grad[k][a];
      }
    }
    Mat2d f_inc = G;
    f_inc(0, 0) += 1.0;
    f_inc(1, 1) += 1.0;
    p.F = matmul(f_inc, p.F);
    p.V = det(p.F) * p.V0;
    const Lame<double> lame{poro.lambda, poro.mu};
    p.sigma = neo_hookean_update<double, 2>(p.F, lame).sigma;
    u_total_y_[pi] += duy;
  }
  for (int n = 0; n < grid.node_count(); ++n) p_nodes_[n] = 0.0;
  for (int d = 0; d < dofs_.n_dofs; ++d)
    if (dofs_.field_of[d] == 2) p_nodes_[dofs_.node_of[d]] = x[d];

  time_ += dt;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

double CoupledSim::top_settlement() const {
  // mean downward displacement of the top particle row
  double best_y = -1e300;
  for (const auto& p : particles) best_y = std::max(best_y, p.X[1]);
  double sum = 0.0;
  int count = 0;
  for (std::size_t pi = 0; pi < particles.size(); ++pi) {
    if (particles[pi].X[1] > best_y - 1e-9) {
      sum += u_total_y_[pi];
      ++count;
    }
  }
  return count > 0 ? -sum / count : 0.0;
}

std::vector<std::pair<double, double>> CoupledSim::pressure_profile(int x_index,
                                                                    double surface_y) const {
  std::vector<std::pair<double, double>> out;
  for (int n = 0; n < grid.node_count(); ++n) {
    if (!active_[n]) continue;
    const auto idx = grid.unflat(n);
    if (idx[0] != x_index) continue;
    const double y = grid.node_pos(n)[1];
    if (y < -1e-9 || y > surface_y + 1e-9) continue;
    out.emplace_back(surface_y - y, fixed_p[n] ? 0.0 : p_nodes_[n]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace impm
