#include "impm/norsand.hpp"

#include <algorithm>
#include <cmath>

namespace impm {

NorSandState NorSandState::initial(const NorSandParams& prm) {
  prm.validate();
  NorSandState s;
  s.p_i = prm.p_i0;
  s.v = prm.v0;
  // K0 consolidation: sigma = (sigma_a, sigma_r, sigma_r), p = tr/3 = p0
  const double sigma_a = 3.0 * prm.p0 / (1.0 + 2.0 * prm.K0);
  const double sigma_r = prm.K0 * sigma_a;
  const double mu0 = norsand_detail::shear_modulus(prm.p0, prm);
  s.eps_e[0] = (sigma_a - prm.p0) / (2.0 * mu0);
  s.eps_e[1] = (sigma_r - prm.p0) / (2.0 * mu0);
  s.eps_e[2] = s.eps_e[1];
  // volumetric elastic strain measured from the p0 anchor
  return s;
}

namespace norsand_detail {

namespace {

// 4x4 Jacobian of the scaled residual via a local tape.
DenseMatrix residual_jacobian(const std::array<double, 4>& x, double eps_v_tr, double eps_s_tr,
                              double v_new, double p_i_n, double eps_s_p_n, double p_scale,
                              const NorSandParams& prm) {
  using ad::Tape;
  using ad::Var;
  Tape tape;
  std::array<Var, 4> xv;
  for (int i = 0; i < 4; ++i) xv[i] = tape.input(x[i]);
  const auto R =
      residuals<Var>(xv, Var(eps_v_tr), Var(eps_s_tr), Var(v_new), p_i_n, eps_s_p_n, p_scale, prm);
  tape.set_outputs(std::vector<Var>(R.begin(), R.end()));
  DenseMatrix J(4, 4);
  std::vector<double> seed(4, 0.0);
  for (int i = 0; i < 4; ++i) {
    seed[i] = 1.0;
    const auto row = tape.backward(seed);
    for (int j = 0; j < 4; ++j) J(i, j) = row[j];
    seed[i] = 0.0;
  }
  return J;
}

DenseMatrix invert4(DenseMatrix a) {
  DenseMatrix inv(4, 4);
  for (int i = 0; i < 4; ++i) inv(i, i) = 1.0;
  for (int k = 0; k < 4; ++k) {
    int piv = k;
    for (int i = k + 1; i < 4; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (a(piv, k) == 0.0) throw NonConvergenceError("singular return-map Jacobian", {});
    if (piv != k)
      for (int j = 0; j < 4; ++j) {
        std::swap(a(k, j), a(piv, j));
        std::swap(inv(k, j), inv(piv, j));
      }
    const double d = a(k, k);
    for (int j = 0; j < 4; ++j) {
      a(k, j) /= d;
      inv(k, j) /= d;
    }
    for (int i = 0; i < 4; ++i) {
      if (i == k) continue;
      const double f = a(i, k);
      if (f == 0.0) continue;
      for (int j = 0; j < 4; ++j) {
        a(i, j) -= f * a(k, j);
        inv(i, j) -= f * inv(k, j);
      }
    }
  }
  return inv;
}

double residual_norm(const std::array<double, 4>& R) {
  return std::sqrt(R[0] * R[0] + R[1] * R[1] + R[2] * R[2] + R[3] * R[3]);
}

}  // namespace

std::array<double, 4> solve_return_map(double eps_v_tr, double eps_s_tr, double v_new,
                                       double p_i_n, double eps_s_p_n, double p_scale,
                                       const NorSandParams& prm, int& iterations, int max_iter) {
  std::array<double, 4> x{eps_v_tr, eps_s_tr, 0.0, p_i_n / p_scale};
  auto R = residuals<double>(x, eps_v_tr, eps_s_tr, v_new, p_i_n, eps_s_p_n, p_scale, prm);
  double rnorm = residual_norm(R);
  std::vector<double> history{rnorm};
  constexpr double tol = 1e-13;

  for (iterations = 0; iterations < max_iter; ++iterations) {
    if (rnorm <= tol) return x;
    const DenseMatrix J =
        residual_jacobian(x, eps_v_tr, eps_s_tr, v_new, p_i_n, eps_s_p_n, p_scale, prm);
    const DenseMatrix Jinv = invert4(J);
    std::array<double, 4> dx{};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) dx[i] += Jinv(i, j) * R[j];

    // damped update: backtrack while the residual does not decrease or the
    // iterate leaves the admissible region (p_i negative, eps_s_e nonnegative)
    double step = 1.0;
    bool accepted = false;
    for (int cut = 0; cut < 16 && !accepted; ++cut, step *= 0.5) {
      std::array<double, 4> x_new{};
      for (int i = 0; i < 4; ++i) x_new[i] = x[i] - step * dx[i];
      if (!(x_new[3] * p_scale < 0.0) || !(x_new[1] >= 0.0)) continue;
      std::array<double, 4> R_new{};
      try {
        R_new = residuals<double>(x_new, eps_v_tr, eps_s_tr, v_new, p_i_n, eps_s_p_n, p_scale, prm);
      } catch (const DomainError&) {
        continue;
      }
      const double rnorm_new = residual_norm(R_new);
      if (rnorm_new < rnorm || rnorm <= 1e-10) {
        x = x_new;
        R = R_new;
        rnorm = rnorm_new;
        accepted = true;
      }
    }
    if (!accepted)
      throw NonConvergenceError("Nor-Sand return mapping stalled (scaled residual " +
                                    std::to_string(rnorm) + ")",
                                history);
    history.push_back(rnorm);
  }
  if (rnorm <= 1e-9) return x;  // accepted: scaled residual ~ 1e-9 * |p_i0|
  throw NonConvergenceError("Nor-Sand return mapping did not converge after " +
                                std::to_string(max_iter) + " iterations (scaled residual " +
                                std::to_string(rnorm) + ")",
                            history);
}

DenseMatrix return_map_jacobian_inverse(const std::array<double, 4>& x, double eps_v_tr,
                                        double eps_s_tr, double v_new, double p_i_n,
                                        double eps_s_p_n, double p_scale,
                                        const NorSandParams& prm) {
  return invert4(residual_jacobian(x, eps_v_tr, eps_s_tr, v_new, p_i_n, eps_s_p_n, p_scale, prm));
}

}  // namespace norsand_detail
}  // namespace impm
