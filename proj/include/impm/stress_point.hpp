#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "impm/errors.hpp"
#include "impm/materials.hpp"
#include "impm/norsand.hpp"
#include "impm/small_math.hpp"
#include "impm/tape.hpp"

namespace impm {

enum class ControlKind { strain, stress };

struct AxisControl {
  ControlKind kind = ControlKind::strain;
  double value = 0.0;  // strain increment, or stress target [Pa]
};

using ControlStep = std::array<AxisControl, 3>;

struct DriveOptions {
  double tol = 1e-10;  // relative residual on the controlled stresses
  int max_iterations = 30;
};

struct CurvePoint {
  int step = 0;
  double eps_axial = 0.0;
  double eps_v = 0.0;
  double p = 0.0;
  double q = 0.0;
  int iterations = 0;
  std::vector<double> rel_residuals;
};

// p-q invariants of a principal stress vector.
template <class T>
void pq_invariants(const Vec<T, 3>& sigma, T& p, T& q) {
  using std::sqrt;
  p = (sigma[0] + sigma[1] + sigma[2]) * (1.0 / 3.0);
  T s2(0.0);
  for (int k = 0; k < 3; ++k) {
    const T d = sigma[k] - p;
    s2 += d * d;
  }
  q = sqrt(1.5 * s2 + 1e-300);
}

// Hencky elasticity as a stress-point model over principal log strain.
struct HenckyPointModel {
  ElasticParams params;
  Vec3d eps{};  // committed total principal log strain

  template <class T>
  Vec<T, 3> stress(const Vec<T, 3>& de) const {
    using std::exp;
    Vec<T, 3> e;
    for (int k = 0; k < 3; ++k) e[k] = eps[k] + de[k];
    const T tr = e[0] + e[1] + e[2];
    const T J = exp(tr);
    const double lambda = params.lambda();
    const double mu = params.mu();
    Vec<T, 3> sigma;
    for (int k = 0; k < 3; ++k) sigma[k] = (lambda * tr + 2.0 * mu * e[k]) / J;
    return sigma;
  }

  void commit(const Vec3d& de) {
    for (int k = 0; k < 3; ++k) eps[k] += de[k];
  }
  double eps_axial() const { return eps[0]; }
  double eps_v() const { return eps[0] + eps[1] + eps[2]; }
  int last_inner_iterations() const { return 0; }
};

struct NorSandPointModel {
  NorSandParams params;
  NorSandState state;
  Vec3d eps{};

  static NorSandPointModel make(const NorSandParams& prm) {
    NorSandPointModel m;
    m.params = prm;
    m.state = NorSandState::initial(prm);
    return m;
  }

  template <class T>
  Vec<T, 3> stress(const Vec<T, 3>& de) const {
    return norsand_update<T>(de, state, params).sigma;
  }

  void commit(const Vec3d& de) {
    Vec<double, 3> dv{{de[0], de[1], de[2]}};
    auto res = norsand_update<double>(dv, state, params);
    state = res.committed;
    inner_iterations_ = res.iterations;
    for (int k = 0; k < 3; ++k) eps[k] += de[k];
  }
  double eps_axial() const { return eps[0]; }
  double eps_v() const { return eps[0] + eps[1] + eps[2]; }
  int last_inner_iterations() const { return inner_iterations_; }

 private:
  int inner_iterations_ = 0;
};

// Mixed stress/strain-controlled increment driver. Strain-controlled axes
// advance by the given increments; stress-controlled axes are solved by
// Newton iteration with the consistent tangent taken from the recorded
// stress update.
template <class Model>
std::vector<CurvePoint> stress_point_drive(Model& model, const std::vector<ControlStep>& path,
                                           DriveOptions opt = {}) {
  using ad::Tape;
  using ad::Var;
  std::vector<CurvePoint> curve;
  curve.reserve(path.size());
  Vec3d warm{};  // previous increment of the stress-controlled axes

  for (std::size_t inc = 0; inc < path.size(); ++inc) {
    const ControlStep& ctl = path[inc];
    std::vector<int> unknown;
    for (int k = 0; k < 3; ++k)
      if (ctl[k].kind == ControlKind::stress) unknown.push_back(k);
    const int m = static_cast<int>(unknown.size());

    Vec3d de{};
    for (int k = 0; k < 3; ++k)
      de[k] = ctl[k].kind == ControlKind::strain ? ctl[k].value : warm[k];

    double scale = 1.0;
    for (int k : unknown) scale = std::max(scale, std::abs(ctl[k].value));
    {
      Vec<double, 3> d0{{de[0], de[1], de[2]}};
      const auto s0 = model.template stress<double>(d0);
      for (int k = 0; k < 3; ++k) scale = std::max(scale, std::abs(s0[k]));
    }

    CurvePoint pt;
    pt.step = static_cast<int>(inc) + 1;
    bool converged = m == 0;

    for (int it = 1; it <= opt.max_iterations && !converged; ++it) {
      // record the update to get stress values and the consistent tangent
      Tape tape;
      std::array<Var, 3> dv;
      for (int k = 0; k < 3; ++k) dv[k] = tape.input(de[k]);
      Vec<Var, 3> devar{{dv[0], dv[1], dv[2]}};
      const auto sv = model.template stress<Var>(devar);
      tape.set_outputs(std::vector<Var>{sv[0], sv[1], sv[2]});

      std::vector<double> g(m);
      double gnorm = 0.0;
      for (int i = 0; i < m; ++i) {
        g[i] = value_of(sv[unknown[i]]) - ctl[unknown[i]].value;
        gnorm += g[i] * g[i];
      }
      gnorm = std::sqrt(gnorm);
      pt.rel_residuals.push_back(gnorm / scale);
      pt.iterations = it;
      if (gnorm / scale <= opt.tol) {
        converged = true;
        break;
      }

      // tangent rows of the controlled axes
      DenseMatrix K(m, m);
      std::vector<double> seed(3, 0.0);
      for (int i = 0; i < m; ++i) {
        seed[unknown[i]] = 1.0;
        const auto row = tape.backward(seed);
        for (int j = 0; j < m; ++j) K(i, j) = row[unknown[j]];
        seed[unknown[i]] = 0.0;
      }
      // solve K d = -g (m <= 3)
      std::array<double, 3> d{};
      {
        std::array<std::array<double, 4>, 3> A{};
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < m; ++j) A[i][j] = K(i, j);
          A[i][m] = -g[i];
        }
        for (int k = 0; k < m; ++k) {
          int piv = k;
          for (int i = k + 1; i < m; ++i)
            if (std::abs(A[i][k]) > std::abs(A[piv][k])) piv = i;
          std::swap(A[k], A[piv]);
          if (A[k][k] == 0.0)
            throw NonConvergenceError("singular stress-point tangent", pt.rel_residuals);
          for (int i = k + 1; i < m; ++i) {
            const double f = A[i][k] / A[k][k];
            for (int j = k; j <= m; ++j) A[i][j] -= f * A[k][j];
          }
        }
        for (int i = m - 1; i >= 0; --i) {
          double s = A[i][m];
          for (int j = i + 1; j < m; ++j) s -= A[i][j] * d[j];
          d[i] = s / A[i][i];
        }
      }
      for (int i = 0; i < m; ++i) de[unknown[i]] += d[i];
    }

    if (!converged)
      throw NonConvergenceError("stress-point Newton did not converge at increment " +
                                    std::to_string(inc + 1),
                                pt.rel_residuals);
    if (pt.iterations == 0) pt.iterations = 1;

    model.commit(de);
    for (int k : unknown) warm[k] = de[k];

    Vec<double, 3> dz{};
    const auto sig = model.template stress<double>(dz);
    double p, q;
    pq_invariants(sig, p, q);
    pt.eps_axial = model.eps_axial();
    pt.eps_v = model.eps_v();
    pt.p = p;
    pt.q = q;
    curve.push_back(std::move(pt));
  }
  return curve;
}

// Drained triaxial path from a K0 state: axial strain driven, radial stresses
// held at their initial value.
std::vector<ControlStep> drained_triaxial_path(const NorSandParams& prm, double axial_strain,
                                               int increments);

// Convergence-order estimate over the final iterations,
// log(r_k+1 / r_k) / log(r_k / r_k-1), ignoring roundoff-floored entries.
double final_convergence_order(const std::vector<double>& residuals, double floor = 1e-12);

}  // namespace impm
