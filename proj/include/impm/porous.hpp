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
#include "impm/mpm_solver.hpp"
#include "impm/particle.hpp"
#include "impm/sparse.hpp"
#include "impm/tape.hpp"

namespace impm {

struct PoroParams {
  double lambda;  // Lame lambda [Pa]
  double mu;      // Lame mu [Pa]
  double k;       // intrinsic permeability [m^2]
  double mu_f;    // fluid dynamic viscosity [Pa s]
  double rho_f;   // fluid density [kg/m^3]

  double mobility() const { return k / mu_f; }
  double consolidation_coefficient() const { return k * (lambda + 2.0 * mu) / mu_f; }

  void validate() const {
    if (!(k > 0.0)) throw ConfigError("permeability must be positive");
    if (!(mu_f > 0.0)) throw ConfigError("fluid viscosity must be positive");
    if (!(mu > 0.0) || !(lambda + 2.0 * mu > 0.0))
      throw ConfigError("solid moduli must give a positive constrained modulus");
  }
};

// Terzaghi series solution: excess pressure ratio p/p0 at depth ratio
// z_over_H below the drained boundary and time factor Tv, truncated sum.
double terzaghi_pressure_ratio(double z_over_H, double Tv, int terms = 200);

// Coupled u-p formulation at small strain on a fixed reference grid:
// equal-order GIMP interpolation for displacement increments and pressure,
// backward-Euler fluid mass balance with Darcy flux, incompressible
// constituents. Unknowns per step: [du dofs; p dofs].
class CoupledSim {
 public:
  Grid<2> grid;
  std::vector<Particle<2>> particles;
  PoroParams poro;
  Vec2d gravity{};
  SolverOptions options;
  std::vector<std::uint8_t> fixed_u;  // [node * 2 + comp]
  std::vector<std::uint8_t> fixed_p;  // [node]

  CoupledSim(Grid<2> g, std::vector<Particle<2>> parts, PoroParams pp, SolverOptions opt = {});

  template <class Pred>
  void fix_displacement(Pred&& predicate, int component = -1) {
    for (int n = 0; n < grid.node_count(); ++n) {
      if (!predicate(grid.node_pos(n))) continue;
      for (int c = 0; c < 2; ++c)
        if (component < 0 || component == c) fixed_u[static_cast<std::size_t>(n) * 2 + c] = 1;
    }
  }
  template <class Pred>
  void fix_pressure(Pred&& predicate) {
    for (int n = 0; n < grid.node_count(); ++n)
      if (predicate(grid.node_pos(n))) fixed_p[n] = 1;
  }

  // builds transfer weights (reference configuration, reused for all steps),
  // active set and DOF numbering; fields: 0,1 displacement, 2 pressure
  void initialize();

  int n_dofs() const { return dofs_.n_dofs; }
  const DofMap& dofs() const { return dofs_; }
  const JacobianAssembler<2>& assembler() const { return assembler_; }
  const std::vector<double>& nodal_pressure() const { return p_nodes_; }
  double time() const { return time_; }

  template <class T>
  void assemble(std::span<const T> x, double dt, std::vector<T>& r) const;

  std::vector<double> residual(std::span<const double> x, double dt) const;
  void record_residual(std::span<const double> x, double dt, ad::Tape& tape) const;

  // one backward-Euler step of length dt under the current surface load
  StepRecord step(double dt);

  // particle pore pressure and settlement probes
  double top_settlement() const;
  // nodal pressures on one grid column, keyed by depth below surface_y
  std::vector<std::pair<double, double>> pressure_profile(int x_index, double surface_y) const;

 private:
  struct Support {
    int count = 0;
    std::array<std::int32_t, 9> node{};
    std::array<double, 9> w{};
    std::array<Vec2d, 9> grad{};
  };

  static double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  }

  std::vector<Support> supports_;
  std::vector<double> node_mass_;
  std::vector<std::uint8_t> active_;
  DofMap dofs_;
  JacobianAssembler<2> assembler_;
  std::vector<double> p_nodes_;     // committed nodal pressure (initial guess)
  std::vector<double> u_total_y_;   // accumulated vertical displacement per particle
  ad::Tape tape_;
  double r_scale_ = 0.0;
  double time_ = 0.0;
  int step_counter_ = 0;
  double surface_y_ = 0.0;
  bool initialized_ = false;
};

template <class T>
void CoupledSim::assemble(std::span<const T> x, double dt, std::vector<T>& r) const {
  if (!(dt > 0.0)) throw ConfigError("coupled step requires dt > 0");
  r.assign(dofs_.n_dofs, T(0.0));
  const Lame<T> lame{T(poro.lambda), T(poro.mu)};
  const double mob = poro.mobility();

  for (std::size_t pi = 0; pi < particles.size(); ++pi) {
    const auto& p = particles[pi];
    const Support& sup = supports_[pi];

    Mat<T, 2> G{};
    T p_w(0.0);
    Vec<T, 2> grad_pw{};
    for (int k = 0; k < sup.count; ++k) {
      const int node = sup.node[k];
      for (int c = 0; c < 2; ++c) {
        const std::int32_t dof = dofs_.dof(node, c);
        if (dof < 0) continue;
        for (int a = 0; a < 2; ++a) G(c, a) += x[dof] * sup.grad[k][a];
      }
      const std::int32_t pdof = dofs_.dof(node, 2);
      if (pdof >= 0) {
        p_w += sup.w[k] * x[pdof];
        for (int a = 0; a < 2; ++a) grad_pw[a] += x[pdof] * sup.grad[k][a];
      }
    }
    Mat<T, 2> f_inc = G;
    for (int a = 0; a < 2; ++a) f_inc(a, a) += 1.0;
    Mat<T, 2> Fn;
    for (int i = 0; i < 4; ++i) Fn.e[i] = T(p.F.e[i]);
    const Mat<T, 2> F_new = matmul(f_inc, Fn);
    if (!(value_of(det(F_new)) > 0.0))
      throw DomainError("non-positive det(F) at particle " + std::to_string(pi));

    const StressUpdate<T> su = neo_hookean_update<T, 2>(F_new, lame);
    const T dEv = G(0, 0) + G(1, 1);  // volumetric strain increment

    for (int k = 0; k < sup.count; ++k) {
      const int node = sup.node[k];
      for (int c = 0; c < 2; ++c) {
        const std::int32_t dof = dofs_.dof(node, c);
        if (dof < 0) continue;
        // effective stress minus pore pressure: sigma_total = sigma' - p_w I
        T fint = sup.grad[k][0] * su.sigma(c, 0) + sup.grad[k][1] * su.sigma(c, 1);
        fint -= sup.grad[k][c] * p_w;
        fint = fint * p.V0;
        const double fext =
            sup.w[k] * (p.m * gravity[c] + p.traction_force[c] + p.point_load[c]);
        r[dof] += fint - fext;
      }
      const std::int32_t pdof = dofs_.dof(node, 2);
      if (pdof >= 0) {
        T flux = sup.grad[k][0] * (mob * grad_pw[0]) + sup.grad[k][1] * (mob * grad_pw[1]);
        flux -= mob * poro.rho_f * (sup.grad[k][0] * gravity[0] + sup.grad[k][1] * gravity[1]);
        r[pdof] += (sup.w[k] * dEv + dt * flux) * p.V0;
      }
    }
  }
}

}  // namespace impm
