#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "impm/errors.hpp"
#include "impm/small_math.hpp"
#include "impm/sparse.hpp"
#include "impm/tape.hpp"

namespace impm {

// Critical-state plasticity for sand with a curved yield surface
// f(p, q) = q + eta(p, p_i) p and an image-pressure hardening variable.
// Compression-negative sign convention: p < 0 in compression, q >= 0.
struct NorSandParams {
  double M;             // critical state line slope in p-q space
  double N;             // yield surface curvature parameter, 0 <= N < 1
  double h_mod;         // plastic hardening modulus
  double lambda_tilde;  // elastic compressibility
  double v_c0;          // reference specific volume of the CSL
  double v0;            // initial specific volume
  double p_i0;          // initial image pressure [Pa], negative
  double K0;            // lateral earth pressure coefficient
  double p0;            // initial mean effective stress [Pa], negative

  void validate() const {
    if (!(M > 0.0)) throw ConfigError("Nor-Sand: M must be positive");
    if (!(N >= 0.0 && N < 1.0)) throw ConfigError("Nor-Sand: N must lie in [0, 1)");
    if (!(h_mod > 0.0)) throw ConfigError("Nor-Sand: hardening modulus must be positive");
    if (!(lambda_tilde > 0.0)) throw ConfigError("Nor-Sand: lambda_tilde must be positive");
    if (!(p_i0 < 0.0 && p0 < 0.0))
      throw ConfigError("Nor-Sand: initial pressures must be negative (compression)");
    if (!(v0 > 1.0) || !(v_c0 > 1.0)) throw ConfigError("Nor-Sand: specific volumes must exceed 1");
    if (!(K0 > 0.0)) throw ConfigError("Nor-Sand: K0 must be positive");
  }
};

// Constants of the elasticity/hardening closure (the cited constitutive
// reference does not pin them; values give textbook sand behavior and are
// validated against the qualitative response shapes, not point values).
// The CSL is v_c(p) = v_c0 - lambda_tilde ln(-p / 1 Pa); with the published
// v_c0 = 1.8911 this classifies the loose specimen as looser than critical
// and the dense one as denser, as their initial image pressures require.
namespace norsand_detail {
constexpr double kShearRatio = 0.75;    // mu = kShearRatio * (-p) / lambda_tilde
constexpr double kStateCoupling = 3.0;  // image target p_i_bar = p exp(-chi psi_i / M)
constexpr double kFabric = 0.35;        // initial fabric amplification of the image target
constexpr double kFabricDecay = 8.0;    // fabric decay rate per unit plastic shear strain
}  // namespace norsand_detail

struct NorSandState {
  Vec3d eps_e{};      // principal elastic strain (volumetric part anchored at p0)
  double p_i = 0.0;   // image pressure
  double v = 0.0;     // specific volume
  double dgamma_acc = 0.0;

  // K0-consolidated initial state: principal stresses (axial, radial, radial).
  static NorSandState initial(const NorSandParams& prm);
};

template <class T>
struct NorSandResult {
  Vec<T, 3> sigma;  // principal Cauchy stress
  T p;
  T q;
  NorSandState committed;  // state after the update (double-valued)
  int iterations = 0;
  T f_value;  // yield function at the returned state
};

namespace norsand_detail {

template <class T>
T pressure(const T& eps_v_e, const NorSandParams& prm) {
  using std::exp;
  return prm.p0 * exp(-eps_v_e / prm.lambda_tilde);
}

template <class T>
T shear_modulus(const T& p, const NorSandParams& prm) {
  return (kShearRatio / prm.lambda_tilde) * (-1.0 * p);
}

template <class T>
T eta_bar(const T& p, const T& p_i, const NorSandParams& prm) {
  using std::log;
  using std::pow;
  if (prm.N < 1e-12) return prm.M * (1.0 + log(p_i / p));
  const T x = pow(p / p_i, prm.N / (1.0 - prm.N));
  return (prm.M / prm.N) * (1.0 - (1.0 - prm.N) * x);
}

// Nonassociated volumetric flow from the stress-dilatancy relation
// D = M - eta: contraction (negative increment) below the critical stress
// ratio, dilation above, zero at the image condition.
template <class T>
T flow_volumetric(const T& p, const T& q, const NorSandParams& prm) {
  return -q / p - prm.M;  // eta - M with eta = q / (-p)
}

// CSL specific volume at the image pressure and the state-dependent image
// target the hardening law drives p_i toward.
// The fabric factor amplifies the target while the initial grain structure is
// intact and decays with accumulated plastic shear; with it, a loose specimen
// mobilizes strength early and sheds it again without ever crossing the
// critical stress ratio.
template <class T>
T image_target(const T& p, const T& p_i, const T& v, const T& eps_s_p,
               const NorSandParams& prm) {
  using std::exp;
  using std::log;
  const T v_csl = prm.v_c0 - prm.lambda_tilde * log(-1.0 * p_i);  // -p_i in Pa
  const T psi_i = v - v_csl;
  const T fabric = 1.0 + kFabric * exp(-kFabricDecay * eps_s_p);
  return p * exp(-kStateCoupling * psi_i / prm.M) * fabric;
}

// Scaled return-map residual; unknowns x = (eps_v_e, eps_s_e, dgamma,
// p_i / p_scale). Strain equations stay in strain units, the hardening and
// yield equations are divided by p_scale.
template <class T>
std::array<T, 4> residuals(const std::array<T, 4>& x, const T& eps_v_tr, const T& eps_s_tr,
                           const T& v_new, double p_i_n, double eps_s_p_n, double p_scale,
                           const NorSandParams& prm) {
  const T& eps_v_e = x[0];
  const T& eps_s_e = x[1];
  const T& dgamma = x[2];
  const T p_i = x[3] * p_scale;
  const T p = pressure(eps_v_e, prm);
  const T q = 3.0 * shear_modulus(p, prm) * eps_s_e;
  const T target = image_target(p, p_i, v_new, T(eps_s_p_n) + dgamma, prm);
  std::array<T, 4> R;
  R[0] = eps_v_e - eps_v_tr + dgamma * flow_volumetric(p, q, prm);
  R[1] = eps_s_e - eps_s_tr + dgamma;
  R[2] = (p_i - p_i_n - prm.h_mod * (target - p_i) * dgamma) / p_scale;
  R[3] = (q + eta_bar(p, p_i, prm) * p) / p_scale;
  return R;
}

// Plain-double Newton solve of the return map; returns the converged
// unknowns. Throws NonConvergenceError after max_iter iterations.
std::array<double, 4> solve_return_map(double eps_v_tr, double eps_s_tr, double v_new,
                                       double p_i_n, double eps_s_p_n, double p_scale,
                                       const NorSandParams& prm, int& iterations,
                                       int max_iter = 50);

// Inverse of the 4x4 return-map Jacobian at the converged point (plain
// doubles; entries enter the tape as constants).
DenseMatrix return_map_jacobian_inverse(const std::array<double, 4>& x, double eps_v_tr,
                                        double eps_s_tr, double v_new, double p_i_n,
                                        double eps_s_p_n, double p_scale,
                                        const NorSandParams& prm);

}  // namespace norsand_detail

// Implicit stress update for a principal (triaxial) strain increment `de`.
// With T = ad::Var the converged return map is re-linearized as one
// implicit-function correction step on the tape, so the recorded graph
// carries the exact consistent tangent of the converged map.
template <class T>
NorSandResult<T> norsand_update(const Vec<T, 3>& de, const NorSandState& state,
                                const NorSandParams& prm) {
  using std::exp;
  using std::sqrt;
  namespace nd = norsand_detail;

  // trial elastic strain and invariants
  Vec<T, 3> eps_tr;
  for (int k = 0; k < 3; ++k) eps_tr[k] = state.eps_e[k] + de[k];
  const T eps_v_tr = eps_tr[0] + eps_tr[1] + eps_tr[2];
  Vec<T, 3> dev;
  for (int k = 0; k < 3; ++k) dev[k] = eps_tr[k] - eps_v_tr * (1.0 / 3.0);
  const T dev_norm2 = dev[0] * dev[0] + dev[1] * dev[1] + dev[2] * dev[2];
  const T dev_norm = sqrt(dev_norm2 + 1e-300);
  const T eps_s_tr = sqrt(2.0 / 3.0) * dev_norm;

  const T dv_total = de[0] + de[1] + de[2];
  const T v_new = state.v * exp(dv_total);  // specific volume tracks det(F)
  const double p_scale = std::abs(prm.p_i0);

  const T p_tr = nd::pressure(eps_v_tr, prm);
  const T q_tr = 3.0 * nd::shear_modulus(p_tr, prm) * eps_s_tr;
  const T f_tr = q_tr + nd::eta_bar(p_tr, T(state.p_i), prm) * p_tr;
  const double eps_s_p_n = state.dgamma_acc;

  NorSandResult<T> out;
  out.committed = state;
  out.committed.v = value_of(v_new);

  if (value_of(f_tr) <= 0.0) {  // elastic
    out.p = p_tr;
    out.q = q_tr;
    out.f_value = f_tr;
    for (int k = 0; k < 3; ++k) {
      out.sigma[k] = p_tr + 2.0 * nd::shear_modulus(p_tr, prm) * dev[k];
      out.committed.eps_e[k] = value_of(eps_tr[k]);
    }
    out.iterations = 0;
    return out;
  }

  // plastic: converge the return map on values
  int iters = 0;
  const std::array<double, 4> xc =
      nd::solve_return_map(value_of(eps_v_tr), value_of(eps_s_tr), value_of(v_new), state.p_i,
                           eps_s_p_n, p_scale, prm, iters);
  out.iterations = iters;

  std::array<T, 4> x{T(xc[0]), T(xc[1]), T(xc[2]), T(xc[3])};
  if constexpr (std::is_same_v<T, ad::Var>) {
    // frozen-Jacobian Newton steps from the converged point: the recorded
    // graph then carries the implicit-function derivative of the map
    const DenseMatrix A =
        nd::return_map_jacobian_inverse(xc, value_of(eps_v_tr), value_of(eps_s_tr),
                                        value_of(v_new), state.p_i, eps_s_p_n, p_scale, prm);
    for (int pass = 0; pass < 2; ++pass) {
      const std::array<T, 4> R =
          nd::residuals<T>(x, eps_v_tr, eps_s_tr, v_new, state.p_i, eps_s_p_n, p_scale, prm);
      for (int i = 0; i < 4; ++i) {
        T dx(0.0);
        for (int j = 0; j < 4; ++j) dx += A(i, j) * R[j];
        x[i] -= dx;
      }
    }
  }

  const T p = nd::pressure(x[0], prm);
  const T q = 3.0 * nd::shear_modulus(p, prm) * x[1];
  const T p_i = x[3] * p_scale;
  out.p = p;
  out.q = q;
  out.f_value = q + nd::eta_bar(p, p_i, prm) * p;

  // coaxial return: deviatoric direction of the trial strain
  Vec<T, 3> nhat;
  for (int k = 0; k < 3; ++k) nhat[k] = dev[k] / dev_norm;
  const T dev_mag = sqrt(3.0 / 2.0) * x[1];  // ||dev eps_e|| from eps_s_e
  for (int k = 0; k < 3; ++k) {
    out.sigma[k] = p + 2.0 * nd::shear_modulus(p, prm) * dev_mag * nhat[k];
    out.committed.eps_e[k] = value_of(x[0]) / 3.0 + value_of(dev_mag) * value_of(nhat[k]);
  }
  out.committed.p_i = value_of(p_i);
  out.committed.dgamma_acc = state.dgamma_acc + value_of(x[2]);
  return out;
}

}  // namespace impm
