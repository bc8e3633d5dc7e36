#pragma once

#include <cmath>
#include <string>

#include "impm/errors.hpp"
#include "impm/small_math.hpp"
#include "impm/tape.hpp"

namespace impm {

struct ElasticParams {
  double E;   // Young's modulus [Pa]
  double nu;  // Poisson's ratio

  double lambda() const { return E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)); }
  double mu() const { return E / (2.0 * (1.0 + nu)); }

  void validate() const {
    if (!(E > 0.0)) throw ConfigError("Young's modulus must be positive");
    if (!(nu > -1.0 && nu < 0.5)) throw ConfigError("Poisson's ratio must lie in (-1, 0.5)");
  }
};

struct J2Params {
  ElasticParams elastic;
  double kappa;  // yield strength [Pa], f = sqrt(2 J2) - kappa

  void validate() const {
    elastic.validate();
    if (!(kappa > 0.0)) throw ConfigError("yield strength must be positive");
  }
};

// Lame pair over the AD scalar, so a modulus can itself be a tape input.
template <class T>
struct Lame {
  T lambda;
  T mu;
};

template <class T>
Lame<T> make_lame(const T& E, double nu) {
  return {E * (nu / ((1.0 + nu) * (1.0 - 2.0 * nu))), E * (0.5 / (1.0 + nu))};
}

enum class MaterialKind { hencky, hencky_j2, neo_hookean };

// Plane-strain / uniaxial-strain embedding of a D-dimensional deformation
// gradient into 3x3 (out-of-plane stretch 1).
template <class T, int D>
Mat<T, 3> embed_F(const Mat<T, D>& F) {
  Mat<T, 3> out = Mat<T, 3>::identity();
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) out(i, j) = F(i, j);
  return out;
}

// Logarithm of an embedded symmetric positive-definite tensor whose only
// off-diagonal coupling lies in the leading DxD block (D <= 2).
template <class T, int D>
Mat<T, 3> embedded_sym_log(const Mat<T, 3>& b) {
  static_assert(D <= 2, "embedded closed forms cover D <= 2; use the 3x3 spectral path");
  using std::log;
  Mat<T, 3> out{};
  if constexpr (D == 1) {
    out(0, 0) = log(b(0, 0));
  } else {
    Mat<T, 2> blk;
    blk(0, 0) = b(0, 0);
    blk(0, 1) = b(0, 1);
    blk(1, 0) = b(1, 0);
    blk(1, 1) = b(1, 1);
    const Mat<T, 2> l = sym_log_2x2(blk);
    out(0, 0) = l(0, 0);
    out(0, 1) = l(0, 1);
    out(1, 0) = l(1, 0);
    out(1, 1) = l(1, 1);
  }
  for (int i = D; i < 3; ++i) out(i, i) = log(b(i, i));
  return out;
}

template <class T, int D>
Mat<T, 3> embedded_sym_exp(const Mat<T, 3>& eps) {
  static_assert(D <= 2);
  using std::exp;
  Mat<T, 3> out{};
  if constexpr (D == 1) {
    out(0, 0) = exp(eps(0, 0));
  } else {
    Mat<T, 2> blk;
    blk(0, 0) = eps(0, 0);
    blk(0, 1) = eps(0, 1);
    blk(1, 0) = eps(1, 0);
    blk(1, 1) = eps(1, 1);
    const Mat<T, 2> e = sym_exp_2x2(blk);
    out(0, 0) = e(0, 0);
    out(0, 1) = e(0, 1);
    out(1, 0) = e(1, 0);
    out(1, 1) = e(1, 1);
  }
  for (int i = D; i < 3; ++i) out(i, i) = exp(eps(i, i));
  return out;
}

template <class T>
struct StressUpdate {
  Mat<T, 3> sigma;  // Cauchy stress, embedded 3x3
  T J;              // volume ratio det(F)
  Mat<T, 3> B_e;    // updated elastic left Cauchy-Green tensor (plastic models)
  T dgamma;         // plastic multiplier increment
};

// Hencky elasticity: eps = 1/2 ln(F F^T), tau = lambda tr(eps) 1 + 2 mu eps,
// sigma = tau / J.
template <class T, int D>
StressUpdate<T> hencky_update(const Mat<T, D>& F, const Lame<T>& lame) {
  using std::exp;
  const Mat<T, 3> F3 = embed_F<T, D>(F);
  const Mat<T, 3> b = matmul(F3, transpose(F3));
  const Mat<T, 3> eps = 0.5 * embedded_sym_log<T, D>(b);
  const T tr = trace(eps);
  const T J = exp(tr);  // det F = exp(tr ln V)
  StressUpdate<T> out;
  out.J = J;
  out.B_e = b;
  out.dgamma = T(0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      T tau = 2.0 * lame.mu * eps(i, j);
      if (i == j) tau += lame.lambda * tr;
      out.sigma(i, j) = tau / J;
    }
  return out;
}

// Neo-Hookean: tau = mu (F F^T - 1) + lambda ln(J) 1, sigma = tau / J.
template <class T, int D>
StressUpdate<T> neo_hookean_update(const Mat<T, D>& F, const Lame<T>& lame) {
  using std::log;
  const T J = det(F);
  if (!(value_of(J) > 0.0)) throw DomainError("neo-Hookean update: det F <= 0");
  const Mat<T, 3> F3 = embed_F<T, D>(F);
  const Mat<T, 3> b = matmul(F3, transpose(F3));
  const T lnJ = log(J);
  StressUpdate<T> out;
  out.J = J;
  out.B_e = b;
  out.dgamma = T(0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      T tau = lame.mu * (b(i, j) - (i == j ? T(1.0) : T(0.0)));
      if (i == j) tau += lame.lambda * lnJ;
      out.sigma(i, j) = tau / J;
    }
  return out;
}

// J2 elastoplasticity on Hencky elastic strain with radial return in
// deviatoric strain space. f_incr is the incremental deformation over the
// step; B_e_n the committed elastic left Cauchy-Green tensor. The yield
// check sqrt(2 J2) = ||dev tau|| <= kappa branches on values, so the tape
// records the active branch (consistent-tangent semantics).
template <class T, int D>
StressUpdate<T> j2_update(const Mat<T, D>& f_incr, const Mat<double, 3>& B_e_n,
                          const Lame<T>& lame, double kappa) {
  using std::exp;
  using std::sqrt;
  const Mat<T, 3> f3 = embed_F<T, D>(f_incr);
  Mat<T, 3> Ben;
  for (int i = 0; i < 9; ++i) Ben.e[i] = T(B_e_n.e[i]);
  const Mat<T, 3> b_tr = matmul(matmul(f3, Ben), transpose(f3));
  const Mat<T, 3> eps_tr = 0.5 * embedded_sym_log<T, D>(b_tr);
  const T tr_eps = trace(eps_tr);
  const T J = exp(tr_eps);  // plastic flow is isochoric, so J = det F_e

  Mat<T, 3> dev_eps = eps_tr;
  for (int i = 0; i < 3; ++i) dev_eps(i, i) -= tr_eps * (1.0 / 3.0);

  T s2 = T(0.0);  // ||dev tau||^2 = (2 mu)^2 ||dev eps||^2
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s2 += dev_eps(i, j) * dev_eps(i, j);
  const T two_mu = 2.0 * lame.mu;
  const T s_norm = two_mu * sqrt(s2 + 1e-300);  // keep sqrt off exact zero
  const T p_tau = lame.lambda * tr_eps + two_mu * tr_eps * (1.0 / 3.0);

  StressUpdate<T> out;
  out.J = J;
  if (value_of(s_norm) <= kappa) {
    out.B_e = b_tr;
    out.dgamma = T(0.0);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        T tau = two_mu * dev_eps(i, j);
        if (i == j) tau += p_tau;
        out.sigma(i, j) = tau / J;
      }
    return out;
  }

  // Radial return: scale the deviatoric stress back to radius kappa.
  const T scale = T(kappa) / s_norm;
  out.dgamma = (s_norm - kappa) / two_mu;
  Mat<T, 3> eps_e;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      eps_e(i, j) = scale * dev_eps(i, j);
      if (i == j) eps_e(i, j) += tr_eps * (1.0 / 3.0);
    }
  out.B_e = embedded_sym_exp<T, D>(2.0 * eps_e);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      T tau = two_mu * scale * dev_eps(i, j);
      if (i == j) tau += p_tau;
      out.sigma(i, j) = tau / J;
    }
  return out;
}

// General 3x3 Hencky stress for plain doubles (spectral decomposition); used
// by objectivity checks and full-tensor queries.
Mat3d hencky_stress_3x3(const Mat3d& F, const ElasticParams& p);
Mat3d neo_hookean_stress_3x3(const Mat3d& F, const ElasticParams& p);

}  // namespace impm
