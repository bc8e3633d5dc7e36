#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "impm/errors.hpp"
#include "impm/gimp.hpp"
#include "impm/grid.hpp"
#include "impm/jacobian.hpp"
#include "impm/materials.hpp"
#include "impm/particle.hpp"
#include "impm/sparse.hpp"
#include "impm/tape.hpp"

namespace impm {

struct MaterialSpec {
  MaterialKind kind = MaterialKind::hencky;
  ElasticParams elastic{1.0, 0.0};
  double kappa = 0.0;  // J2 yield strength
};

struct SolverOptions {
  double tol = 1e-11;        // relative residual
  double abs_floor = 1e-14;  // accept immediately below this absolute norm
  int max_iterations = 20;
  JacobianStrategy strategy = JacobianStrategy::sparse;
  InterferenceCheck interference = InterferenceCheck::off;
  // Total-Lagrangian stepping: connectivity and weights stay at the reference
  // configuration and the unknown is the total displacement. Elastic only.
  bool total_lagrangian = false;
};

struct StepRecord {
  int step = 0;
  int iterations = 0;
  std::vector<double> rel_residuals;  // per iteration, ||r_k|| / ||r_0||
  double r0_norm = 0.0;
  double seconds = 0.0;
  double diff_seconds = 0.0;
  int backward_passes = 0;
};

// Implicit quasi-static MPM over a structured grid with cpGIMP transfers.
// Each step runs the four-stage update: P2G, implicit nodal Newton solve,
// G2P, particle update + grid reset.
template <int D>
class MpmSim {
 public:
  static constexpr int kMaxSupport = ipow(3, D);

  Grid<D> grid;
  std::vector<Particle<D>> particles;
  MaterialSpec material;
  Vec<double, D> gravity{};
  SolverOptions options;
  std::vector<std::uint8_t> fixed;  // [node * D + comp]

  MpmSim(Grid<D> g, std::vector<Particle<D>> parts, MaterialSpec mat, SolverOptions opt = {})
      : grid(g), particles(std::move(parts)), material(mat), options(opt) {
    fixed.assign(static_cast<std::size_t>(grid.node_count()) * D, 0);
    if (options.total_lagrangian && mat.kind == MaterialKind::hencky_j2)
      throw ConfigError("total-Lagrangian stepping supports elastic materials only");
  }

  // Marks every (node, component) with predicate(node position) as fixed.
  template <class Pred>
  void fix_nodes(Pred&& predicate, int component = -1) {
    for (int n = 0; n < grid.node_count(); ++n) {
      if (!predicate(grid.node_pos(n))) continue;
      for (int c = 0; c < D; ++c)
        if (component < 0 || component == c) fixed[static_cast<std::size_t>(n) * D + c] = 1;
    }
  }

  const DofMap& dofs() const { return dofs_; }
  const JacobianAssembler<D>& assembler() const { return assembler_; }
  int n_dofs() const { return dofs_.n_dofs; }
  const std::vector<double>& node_mass() const { return node_mass_; }
  double total_node_mass() const {
    double s = 0.0;
    for (double m : node_mass_) s += m;
    return s;
  }

  // P2G stage: transfer weights/masses at the step-start configuration,
  // active-node detection and free-DOF numbering. Connectivity stays fixed
  // through the Newton iterations of this step.
  void begin_step() {
    if (options.total_lagrangian && step_built_) return;  // reference connectivity persists
    const int n_nodes = grid.node_count();
    node_mass_.assign(n_nodes, 0.0);
    supports_.resize(particles.size());
    double max_mass = 0.0;
    for (const auto& p : particles) max_mass = std::max(max_mass, p.m);
    for (std::size_t pi = 0; pi < particles.size(); ++pi) {
      const auto& p = particles[pi];
      Support& sup = supports_[pi];
      sup.count = 0;
      std::array<SupportRange, D> range;
      for (int a = 0; a < D; ++a) {
        range[a] = gimp_support_1d(p.x[a], p.lp[a], grid.origin[a], grid.h);
        if (range[a].first < 0 || range[a].first + range[a].count > grid.nodes[a])
          throw OutOfDomainError("particle " + std::to_string(pi) +
                                 " has support outside the grid on axis " + std::to_string(a));
      }
      std::array<int, D> idx{};
      for (int a = 0; a < D; ++a) idx[a] = range[a].first;
      while (true) {
        Vec<double, D> node_x;
        for (int a = 0; a < D; ++a) node_x[a] = grid.origin[a] + idx[a] * grid.h;
        const auto wg = gimp_weight<D>(p.x, p.lp, node_x, grid.h);
        const int k = sup.count++;
        sup.node[k] = grid.flat(idx);
        sup.w[k] = wg.w;
        sup.grad[k] = wg.grad;
        node_mass_[sup.node[k]] += wg.w * p.m;
        int a = D - 1;
        for (; a >= 0; --a) {
          if (++idx[a] < range[a].first + range[a].count) break;
          idx[a] = range[a].first;
        }
        if (a < 0) break;
      }
    }

    active_.assign(n_nodes, 0);
    const double cutoff = 1e-12 * max_mass;
    for (int n = 0; n < n_nodes; ++n) active_[n] = node_mass_[n] > cutoff ? 1 : 0;
    dofs_.build(n_nodes, D, active_, fixed);
    assembler_ = JacobianAssembler<D>(grid, dofs_, ShapeFunctionKind::gimp);
    u_.assign(dofs_.n_dofs, 0.0);
    step_built_ = true;
  }

  // Mass-weighted particle-to-node map of an arbitrary per-particle value:
  // f_i = sum_p w_ip m_p f_p / M_i.
  std::vector<double> p2g_map(std::span<const double> per_particle) const {
    std::vector<double> out(grid.node_count(), 0.0);
    for (std::size_t pi = 0; pi < particles.size(); ++pi) {
      const Support& sup = supports_[pi];
      for (int k = 0; k < sup.count; ++k)
        out[sup.node[k]] += sup.w[k] * particles[pi].m * per_particle[pi];
    }
    for (int n = 0; n < grid.node_count(); ++n)
      if (node_mass_[n] > 0.0) out[n] /= node_mass_[n];
    return out;
  }

  // Assembles the residual r(u) = f_int - f_ext over free DOFs. With T = Var
  // the same code path records the computational graph.
  template <class T>
  void assemble(std::span<const T> u, const Lame<T>& lame, double load_scale,
                std::vector<T>& r) const {
    r.assign(dofs_.n_dofs, T(0.0));
    for (std::size_t pi = 0; pi < particles.size(); ++pi) {
      const auto& p = particles[pi];
      const Support& sup = supports_[pi];

      Mat<T, D> G{};  // displacement gradient at the particle
      for (int k = 0; k < sup.count; ++k) {
        for (int c = 0; c < D; ++c) {
          const std::int32_t dof = dofs_.dof(sup.node[k], c);
          if (dof < 0) continue;
          for (int a = 0; a < D; ++a) G(c, a) += u[dof] * sup.grad[k][a];
        }
      }
      Mat<T, D> f_inc = G;
      for (int a = 0; a < D; ++a) f_inc(a, a) += 1.0;

      Mat<T, D> F_new;
      if (options.total_lagrangian) {
        F_new = f_inc;
      } else {
        Mat<T, D> Fn;
        for (int i = 0; i < D * D; ++i) Fn.e[i] = T(p.F.e[i]);
        F_new = matmul(f_inc, Fn);
      }
      if (!(value_of(det(F_new)) > 0.0))
        throw DomainError("non-positive det(F) at particle " + std::to_string(pi));

      const StressUpdate<T> su = update_stress<T>(F_new, f_inc, p, lame);
      const T V = su.J * p.V0;

      // weight gradients pulled to the trial configuration:
      // grad_x w = f_inc^{-T} grad_{x_n} w
      const Mat<T, D> finc_inv = inverse(f_inc);
      for (int k = 0; k < sup.count; ++k) {
        Vec<T, D> gw;
        for (int a = 0; a < D; ++a) {
          T g = finc_inv(0, a) * sup.grad[k][0];
          for (int b = 1; b < D; ++b) g += finc_inv(b, a) * sup.grad[k][b];
          gw[a] = g;
        }
        for (int c = 0; c < D; ++c) {
          const std::int32_t dof = dofs_.dof(sup.node[k], c);
          if (dof < 0) continue;
          T fint = gw[0] * su.sigma(c, 0);
          for (int a = 1; a < D; ++a) fint += gw[a] * su.sigma(c, a);
          fint = fint * V;
          const double fext =
              sup.w[k] * (p.m * gravity[c] + p.traction_force[c] + p.point_load[c]) * load_scale;
          r[dof] += fint - fext;
        }
      }
    }
  }

  std::vector<double> residual(std::span<const double> u, double load_scale) const {
    std::vector<double> r;
    const Lame<double> lame{material.elastic.lambda(), material.elastic.mu()};
    assemble<double>(u, lame, load_scale, r);
    return r;
  }

  // Records r(u) on the tape; when theta0 is given, an extra input ln(E) is
  // appended after the displacement DOFs and the material stiffness is driven
  // by it (used by the inverse machinery).
  void record_residual(std::span<const double> u, double load_scale, ad::Tape& tape,
                       std::optional<double> log_E = {}) const {
    using ad::Var;
    tape.clear();
    tape.reserve(tape_hint_);
    std::vector<Var> uv;
    uv.reserve(u.size() + 1);
    for (double ui : u) uv.push_back(tape.input(ui));
    Lame<Var> lame;
    if (log_E) {
      Var theta = tape.input(*log_E);
      lame = make_lame(ad::exp(theta), material.elastic.nu);
    } else {
      lame = Lame<Var>{Var(material.elastic.lambda()), Var(material.elastic.mu())};
    }
    std::vector<Var> rv;
    assemble<Var>(std::span<const Var>(uv.data(), u.size()), lame, load_scale, rv);
    tape.set_outputs(rv);
    tape_hint_ = std::max(tape_hint_, tape.node_count());
  }

  // One implicit load step: Newton iteration on the nodal system with the
  // Jacobian from reverse-mode differentiation of the recorded residual.
  // Warm-starts from the previous increment when that lowers the initial
  // residual; falls back to a cold start if the warm basin stalls.
  StepRecord newton_solve(double load_scale) {
    std::vector<double> warm(dofs_.n_dofs, 0.0);
    bool have_warm = false;
    if (options.total_lagrangian && u_warm_.size() == static_cast<std::size_t>(dofs_.n_dofs)) {
      warm = u_warm_;
      have_warm = true;
    } else if (!options.total_lagrangian && !prev_by_node_.empty()) {
      for (int d = 0; d < dofs_.n_dofs; ++d)
        warm[d] =
            prev_by_node_[static_cast<std::size_t>(dofs_.node_of[d]) * D + dofs_.field_of[d]];
      have_warm = true;
    }
    ++step_counter_;
    if (have_warm) {
      bool warm_viable = true;
      double r_warm = 0.0;
      try {
        r_warm = norm(residual(warm, load_scale));
      } catch (const DomainError&) {
        warm_viable = false;
      }
      if (warm_viable && r_warm < norm(residual(std::vector<double>(dofs_.n_dofs, 0.0),
                                                load_scale))) {
        try {
          return newton_attempt(load_scale, warm);
        } catch (const NonConvergenceError&) {
          // fall through to the cold start
        }
      }
    }
    return newton_attempt(load_scale, std::vector<double>(dofs_.n_dofs, 0.0));
  }

  StepRecord newton_attempt(double load_scale, std::vector<double> u_init) {
    StepRecord rec;
    rec.step = step_counter_;
    const auto t_start = std::chrono::steady_clock::now();

    u_ = std::move(u_init);

    std::vector<double> r = residual(u_, load_scale);
    const double r0 = norm(r);
    rec.r0_norm = r0;
    if (r0 < options.abs_floor) {
      rec.seconds = elapsed(t_start);
      return rec;
    }

    double rnorm_prev = r0;
    for (int it = 1; it <= options.max_iterations; ++it) {
      record_residual(u_, load_scale, tape_);
      JacobianStats stats;
      std::vector<double> delta;
      std::vector<double> rhs(r.size());
      for (std::size_t i = 0; i < r.size(); ++i) rhs[i] = -r[i];
      if (options.strategy == JacobianStrategy::dense) {
        const DenseMatrix J = assembler_.dense(tape_, &stats);
        delta = sparse_lu_solve(assembler_.to_csr(J), rhs);
      } else {
        const CsrMatrix J = assembler_.sparse(tape_, &stats, options.interference);
        delta = sparse_lu_solve(J, rhs);
      }
      rec.diff_seconds += stats.seconds;
      rec.backward_passes += stats.total_passes;

      // full Newton step; backtrack only while the trial configuration is
      // infeasible (inverted elements) - transient residual growth is normal
      double alpha = 1.0;
      bool accepted = false;
      std::vector<double> u_try(u_.size());
      for (int cut = 0; cut < 12 && !accepted; ++cut, alpha *= 0.5) {
        for (std::size_t i = 0; i < u_.size(); ++i) u_try[i] = u_[i] + alpha * delta[i];
        try {
          std::vector<double> r_try = residual(u_try, load_scale);
          u_ = u_try;
          r = std::move(r_try);
          rnorm_prev = norm(r);
          accepted = true;
        } catch (const DomainError&) {
          // inverted trial configuration: shorten the step
        }
      }
      if (!accepted)
        throw NonConvergenceError("Newton stalled at step " + std::to_string(step_counter_),
                                  rec.rel_residuals);

      const double rel = rnorm_prev / r0;
      rec.rel_residuals.push_back(rel);
      rec.iterations = it;
      if (rel <= options.tol) {
        rec.seconds = elapsed(t_start);
        if (options.total_lagrangian) {
          u_warm_ = u_;
        } else {
          prev_by_node_.assign(static_cast<std::size_t>(grid.node_count()) * D, 0.0);
          for (int d = 0; d < dofs_.n_dofs; ++d)
            prev_by_node_[static_cast<std::size_t>(dofs_.node_of[d]) * D + dofs_.field_of[d]] =
                u_[d];
        }
        return rec;
      }
    }
    throw NonConvergenceError(
        "Newton did not reach tol " + std::to_string(options.tol) + " in " +
            std::to_string(options.max_iterations) + " iterations at step " +
            std::to_string(step_counter_),
        rec.rel_residuals);
  }

  // G2P + particle update from the converged nodal displacements, then grid
  // reset (connectivity is rebuilt at the next begin_step).
  void commit_step() {
    const Lame<double> lame{material.elastic.lambda(), material.elastic.mu()};
    for (std::size_t pi = 0; pi < particles.size(); ++pi) {
      auto& p = particles[pi];
      const Support& sup = supports_[pi];

      Vec<double, D> du{};
      Mat<double, D> G{};
      for (int k = 0; k < sup.count; ++k) {
        for (int c = 0; c < D; ++c) {
          const std::int32_t dof = dofs_.dof(sup.node[k], c);
          const double uv = dof >= 0 ? u_[dof] : 0.0;
          du[c] += sup.w[k] * uv;
          for (int a = 0; a < D; ++a) G(c, a) += uv * sup.grad[k][a];
        }
      }
      Mat<double, D> f_inc = G;
      for (int a = 0; a < D; ++a) f_inc(a, a) += 1.0;
      if (!(det(f_inc) > 0.0))
        throw DomainError("inverted element at particle " + std::to_string(pi) +
                          ": det(I + grad du) <= 0");

      Mat<double, D> F_new =
          options.total_lagrangian ? f_inc : matmul(f_inc, p.F);
      const StressUpdate<double> su = update_stress<double>(F_new, f_inc, p, lame);

      if (options.total_lagrangian) {
        for (int a = 0; a < D; ++a) p.x[a] = p.X[a] + du[a];
      } else {
        p.x += du;
      }
      p.F = F_new;
      p.V = value_of(su.J) * p.V0;
      p.sigma = su.sigma;
      if (material.kind == MaterialKind::hencky_j2) {
        p.B_e = su.B_e;
        p.alpha += su.dgamma;
      }
      if (!options.total_lagrangian) p.lp = update_particle_domain<D>(p.F, p.lp0, grid.h);
    }
    if (!options.total_lagrangian) step_built_ = false;  // grid reset
  }

  StepRecord step(double load_scale) {
    begin_step();
    StepRecord rec = newton_solve(load_scale);
    commit_step();
    return rec;
  }

  const std::vector<double>& nodal_solution() const { return u_; }
  void set_nodal_solution(std::vector<double> u) { u_ = std::move(u); }
  const ad::Tape& tape() const { return tape_; }

  // Interpolated displacement of one particle for a given nodal vector.
  Vec<double, D> interpolate_displacement(std::size_t pi, std::span<const double> u) const {
    const Support& sup = supports_[pi];
    Vec<double, D> du{};
    for (int k = 0; k < sup.count; ++k)
      for (int c = 0; c < D; ++c) {
        const std::int32_t dof = dofs_.dof(sup.node[k], c);
        if (dof >= 0) du[c] += sup.w[k] * u[dof];
      }
    return du;
  }

  // Adds factor * w_k to `out` at the DOFs interpolating `component` of
  // particle pi; used to build linear response gauges.
  void add_interpolation_weights(std::size_t pi, int component, double factor,
                                 std::span<double> out) const {
    const Support& sup = supports_[pi];
    for (int k = 0; k < sup.count; ++k) {
      const std::int32_t dof = dofs_.dof(sup.node[k], component);
      if (dof >= 0) out[dof] += factor * sup.w[k];
    }
  }

 private:
  struct Support {
    int count = 0;
    std::array<std::int32_t, kMaxSupport> node{};
    std::array<double, kMaxSupport> w{};
    std::array<Vec<double, D>, kMaxSupport> grad{};
  };

  template <class T>
  StressUpdate<T> update_stress(const Mat<T, D>& F_new, const Mat<T, D>& f_inc,
                                const Particle<D>& p, const Lame<T>& lame) const {
    if (material.kind == MaterialKind::neo_hookean) return neo_hookean_update<T, D>(F_new, lame);
    if constexpr (D <= 2) {
      if (material.kind == MaterialKind::hencky) return hencky_update<T, D>(F_new, lame);
      if (material.kind == MaterialKind::hencky_j2)
        return j2_update<T, D>(f_inc, p.B_e, lame, material.kappa);
    }
    throw ConfigError("material kind not available in " + std::to_string(D) + "D");
  }

  static double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  }

  static double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  std::vector<Support> supports_;
  std::vector<double> node_mass_;
  std::vector<std::uint8_t> active_;
  DofMap dofs_;
  JacobianAssembler<D> assembler_;
  std::vector<double> u_;
  std::vector<double> u_warm_;
  std::vector<double> prev_by_node_;
  ad::Tape tape_;
  mutable std::size_t tape_hint_ = 0;
  bool step_built_ = false;
  int step_counter_ = 0;
};

}  // namespace impm
