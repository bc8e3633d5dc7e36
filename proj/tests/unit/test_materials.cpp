#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "impm/materials.hpp"
#include "impm/tape.hpp"

using impm::ElasticParams;
using impm::Lame;
using impm::Mat;
using impm::Mat3d;
using impm::ad::Var;

namespace {

Mat3d rotation(double angle, double ax, double ay, double az) {
  const double n = std::sqrt(ax * ax + ay * ay + az * az);
  ax /= n;
  ay /= n;
  az /= n;
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  Mat3d R;
  R(0, 0) = t * ax * ax + c;
  R(0, 1) = t * ax * ay - s * az;
  R(0, 2) = t * ax * az + s * ay;
  R(1, 0) = t * ax * ay + s * az;
  R(1, 1) = t * ay * ay + c;
  R(1, 2) = t * ay * az - s * ax;
  R(2, 0) = t * ax * az - s * ay;
  R(2, 1) = t * ay * az + s * ax;
  R(2, 2) = t * az * az + c;
  return R;
}

double max_abs(const Mat3d& m) {
  double v = 0.0;
  for (double x : m.e) v = std::max(v, std::abs(x));
  return v;
}

// dsigma/dF for a 2D-embedded stress update, by recording F entries as inputs.
template <class Update>
void check_tangent_vs_fd(Update&& update, Mat<double, 2> F0, double tol) {
  impm::ad::Tape tape;
  std::vector<Var> in;
  for (double f : F0.e) in.push_back(tape.input(f));
  Mat<Var, 2> Fv;
  for (int i = 0; i < 4; ++i) Fv.e[i] = in[i];
  const auto res = update(Fv);
  std::vector<Var> outs;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) outs.push_back(res.sigma(i, j));
  tape.set_outputs(outs);

  for (std::size_t r = 0; r < outs.size(); ++r) {
    std::vector<double> seed(outs.size(), 0.0);
    seed[r] = 1.0;
    const auto row = tape.backward(seed);
    double best = 1e300;
    for (double h : {1e-5, 1e-6, 1e-7}) {
      double worst = 0.0;
      for (int c = 0; c < 4; ++c) {
        Mat<double, 2> Fp = F0, Fm = F0;
        Fp.e[c] += h;
        Fm.e[c] -= h;
        const auto sp = update(Fp);
        const auto sm = update(Fm);
        const double fd = (sp.sigma(r / 2, r % 2) - sm.sigma(r / 2, r % 2)) / (2.0 * h);
        const double scale = std::max({std::abs(fd), std::abs(row[c]), 1e-6});
        worst = std::max(worst, std::abs(fd - row[c]) / scale);
      }
      best = std::min(best, worst);
    }
    CHECK(best <= tol);
  }
}

}  // namespace

TEST_CASE("undeformed state carries zero stress") {
  const ElasticParams p{10e3, 0.2};
  const auto lame = impm::make_lame(p.E, p.nu);
  const auto I2 = Mat<double, 2>::identity();
  CHECK(max_abs(impm::hencky_update<double, 2>(I2, lame).sigma) == 0.0);
  CHECK(max_abs(impm::neo_hookean_update<double, 2>(I2, lame).sigma) == 0.0);
}

TEST_CASE("Hencky uniaxial closed form (nu = 0)") {
  const ElasticParams p{10e3, 0.0};
  const auto lame = impm::make_lame(p.E, p.nu);
  for (double stretch : {0.4, 0.75, 1.3}) {
    Mat<double, 2> F = Mat<double, 2>::identity();
    F(0, 0) = stretch;
    const auto r = impm::hencky_update<double, 2>(F, lame);
    CHECK(r.sigma(0, 0) ==
          doctest::Approx(p.E * std::log(stretch) / stretch).epsilon(1e-12));
    CHECK(std::abs(r.sigma(1, 1)) <= 1e-12 * p.E);
    CHECK(std::abs(r.sigma(2, 2)) <= 1e-12 * p.E);
    CHECK(r.J == doctest::Approx(stretch).epsilon(1e-12));
  }
}

TEST_CASE("objectivity: sigma(R F) = R sigma(F) R^T") {
  const ElasticParams p{12e6, 0.2};
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 8; ++trial) {
    Mat3d F = Mat3d::identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) F(i, j) += 0.25 * u(rng);
    if (det(F) <= 0.1) continue;
    const Mat3d R = rotation(2.0 * u(rng), u(rng) + 1.5, u(rng), u(rng));
    for (int model = 0; model < 2; ++model) {
      auto stress = [&](const Mat3d& f) {
        return model == 0 ? impm::hencky_stress_3x3(f, p) : impm::neo_hookean_stress_3x3(f, p);
      };
      const Mat3d lhs = stress(matmul(R, F));
      const Mat3d rhs = matmul(matmul(R, stress(F)), impm::transpose(R));
      const double scale = std::max(max_abs(rhs), 1.0);
      CHECK(max_abs(lhs - rhs) / scale <= 1e-10);
      // pure rotation carries zero stress
      CHECK(max_abs(stress(R)) <= 1e-10 * p.E);
    }
  }
}

TEST_CASE("embedded and spectral Hencky paths agree") {
  const ElasticParams p{10e3, 0.25};
  const auto lame = impm::make_lame(p.E, p.nu);
  Mat<double, 2> F{{1.2, 0.31, -0.05, 0.8}};
  const auto emb = impm::hencky_update<double, 2>(F, lame);
  const Mat3d full = impm::hencky_stress_3x3(impm::embed_F<double, 2>(F), p);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(emb.sigma(i, j) == doctest::Approx(full(i, j)).epsilon(1e-10));
}

TEST_CASE("small-strain consistency with linear elasticity") {
  const ElasticParams p{10e3, 0.2};
  const auto lame = impm::make_lame(p.E, p.nu);
  const double delta = 1e-5;
  Mat<double, 2> grad{{0.31, -0.22, 0.11, -0.43}};
  Mat<double, 2> F = Mat<double, 2>::identity();
  for (int i = 0; i < 4; ++i) F.e[i] += delta * grad.e[i];
  // linear elasticity on the symmetric small-strain tensor
  Mat<double, 2> eps;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) eps(i, j) = 0.5 * delta * (grad(i, j) + grad(j, i));
  const double tr = eps(0, 0) + eps(1, 1);
  auto linear = [&](int i, int j) {
    return p.lambda() * tr * (i == j ? 1.0 : 0.0) + 2.0 * p.mu() * eps(i, j);
  };
  for (auto* update : {+[](const Mat<double, 2>& f, const Lame<double>& l) {
                         return impm::hencky_update<double, 2>(f, l);
                       },
                       +[](const Mat<double, 2>& f, const Lame<double>& l) {
                         return impm::neo_hookean_update<double, 2>(f, l);
                       }}) {
    const auto r = update(F, lame);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        CHECK(std::abs(r.sigma(i, j) - linear(i, j)) <= 1e-8 * p.E * delta / 1e-5);
  }
}

TEST_CASE("J2 return map") {
  const ElasticParams el{10e3, 0.0};
  const auto lame = impm::make_lame(el.E, el.nu);
  const double kappa = 5e3;
  const Mat3d Be0 = Mat3d::identity();

  SUBCASE("inside yield keeps the trial state") {
    // simple shear small enough to stay elastic
    Mat<double, 2> f = Mat<double, 2>::identity();
    f(0, 1) = 0.05;
    const auto r = impm::j2_update<double, 2>(f, Be0, lame, kappa);
    const auto trial = impm::hencky_update<double, 2>(f, lame);
    CHECK(r.dgamma == 0.0);
    for (int i = 0; i < 9; ++i) CHECK(r.sigma.e[i] == doctest::Approx(trial.sigma.e[i]));
  }

  SUBCASE("radial return scales the deviator and keeps the pressure") {
    Mat<double, 2> f = Mat<double, 2>::identity();
    f(0, 1) = 1.5;  // large shear: sqrt(2 J2) well beyond kappa
    const auto trial = impm::hencky_update<double, 2>(f, lame);
    Mat3d tau_trial;
    for (int i = 0; i < 9; ++i) tau_trial.e[i] = trial.sigma.e[i] * impm::value_of(trial.J);
    const double p_tr = (tau_trial(0, 0) + tau_trial(1, 1) + tau_trial(2, 2)) / 3.0;
    double snorm = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double dev = tau_trial(i, j) - (i == j ? p_tr : 0.0);
        snorm += dev * dev;
      }
    snorm = std::sqrt(snorm);
    REQUIRE(snorm > kappa);

    const auto r = impm::j2_update<double, 2>(f, Be0, lame, kappa);
    Mat3d tau;
    for (int i = 0; i < 9; ++i) tau.e[i] = r.sigma.e[i] * r.J;
    const double p_new = (tau(0, 0) + tau(1, 1) + tau(2, 2)) / 3.0;
    CHECK(p_new == doctest::Approx(p_tr).epsilon(1e-12));
    double snorm_new = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double dev = tau(i, j) - (i == j ? p_new : 0.0);
        snorm_new += dev * dev;
        // deviator direction preserved: dev_new = (kappa/snorm) dev_trial
        const double dev_tr = tau_trial(i, j) - (i == j ? p_tr : 0.0);
        CHECK(dev == doctest::Approx(dev_tr * kappa / snorm).epsilon(1e-10));
      }
    // yield admissibility: f = ||dev tau|| - kappa <= 1e-8 * stress scale
    CHECK(std::sqrt(snorm_new) - kappa <= 1e-8 * kappa);
    CHECK(r.dgamma > 0.0);
  }

  SUBCASE("load-unload below yield accumulates no plastic flow") {
    Mat3d Be = Be0;
    double dgamma_total = 0.0;
    Mat<double, 2> f = Mat<double, 2>::identity();
    for (double g : {0.04, -0.04, 0.04, -0.04}) {
      f(0, 1) = g;
      const auto r = impm::j2_update<double, 2>(f, Be, lame, kappa);
      for (int i = 0; i < 9; ++i) Be.e[i] = r.B_e.e[i];
      dgamma_total += r.dgamma;
      f = Mat<double, 2>::identity();
    }
    CHECK(dgamma_total == 0.0);
  }
}

TEST_CASE("AD tangents match finite differences") {
  const ElasticParams el{10e3, 0.2};
  SUBCASE("Hencky") {
    check_tangent_vs_fd(
        [&](const auto& F) {
          return impm::hencky_update<std::decay_t<decltype(F(0, 0))>, 2>(
              F, impm::make_lame(std::decay_t<decltype(F(0, 0))>(el.E), el.nu));
        },
        Mat<double, 2>{{1.1, 0.2, -0.1, 0.85}}, 1e-6);
  }
  SUBCASE("neo-Hookean") {
    check_tangent_vs_fd(
        [&](const auto& F) {
          return impm::neo_hookean_update<std::decay_t<decltype(F(0, 0))>, 2>(
              F, impm::make_lame(std::decay_t<decltype(F(0, 0))>(el.E), el.nu));
        },
        Mat<double, 2>{{1.1, 0.2, -0.1, 0.85}}, 1e-6);
  }
  SUBCASE("J2, plastic branch") {
    const Mat3d Be0 = Mat3d::identity();
    check_tangent_vs_fd(
        [&](const auto& F) {
          using T = std::decay_t<decltype(F(0, 0))>;
          return impm::j2_update<T, 2>(F, Be0, impm::make_lame(T(el.E), el.nu), 2e3);
        },
        Mat<double, 2>{{1.0, 0.9, 0.0, 1.0}}, 1e-5);
  }
  SUBCASE("J2, elastic branch") {
    const Mat3d Be0 = Mat3d::identity();
    check_tangent_vs_fd(
        [&](const auto& F) {
          using T = std::decay_t<decltype(F(0, 0))>;
          return impm::j2_update<T, 2>(F, Be0, impm::make_lame(T(el.E), el.nu), 2e9);
        },
        Mat<double, 2>{{1.0, 0.9, 0.0, 1.0}}, 1e-6);
  }
}
