#include <doctest.h>

#include <cmath>
#include <vector>

#include "impm/norsand.hpp"
#include "impm/stress_point.hpp"

using impm::NorSandParams;
using impm::NorSandPointModel;
using impm::NorSandState;
using impm::Vec;
using impm::Vec3d;
using impm::ad::Tape;
using impm::ad::Var;

namespace {

NorSandParams loose_params() {
  return {1.27, 0.4, 70.0, 0.02, 1.8911, 1.75, -332.30e3, 0.45, -390.0e3};
}
NorSandParams dense_params() {
  return {1.27, 0.4, 120.0, 0.02, 1.8911, 1.57, -534.47e3, 0.38, -425.0e3};
}

// Records the update and returns sigma rows' gradients w.r.t. de.
std::vector<std::vector<double>> ad_tangent(const Vec3d& de, const NorSandState& st,
                                            const NorSandParams& prm) {
  Tape tape;
  Vec<Var, 3> dv;
  for (int k = 0; k < 3; ++k) dv[k] = tape.input(de[k]);
  const auto res = impm::norsand_update<Var>(dv, st, prm);
  tape.set_outputs(std::vector<Var>{res.sigma[0], res.sigma[1], res.sigma[2]});
  std::vector<std::vector<double>> J(3);
  std::vector<double> seed(3, 0.0);
  for (int i = 0; i < 3; ++i) {
    seed[i] = 1.0;
    J[i] = tape.backward(seed);
    seed[i] = 0.0;
  }
  return J;
}

double fd_tangent_error(const Vec3d& de, const NorSandState& st, const NorSandParams& prm) {
  const auto J = ad_tangent(de, st, prm);
  double best = 1e300;
  for (double h : {1e-7, 1e-8, 1e-9}) {
    double worst = 0.0;
    for (int c = 0; c < 3; ++c) {
      Vec3d dp = de, dm = de;
      dp[c] += h;
      dm[c] -= h;
      const auto sp = impm::norsand_update<double>(dp, st, prm).sigma;
      const auto sm = impm::norsand_update<double>(dm, st, prm).sigma;
      for (int r = 0; r < 3; ++r) {
        const double fd = (sp[r] - sm[r]) / (2.0 * h);
        const double scale = std::max({std::abs(fd), std::abs(J[r][c]), 1.0});
        worst = std::max(worst, std::abs(fd - J[r][c]) / scale);
      }
    }
    best = std::min(best, worst);
  }
  return best;
}

}  // namespace

TEST_CASE("zero strain increment leaves the state unchanged") {
  const auto prm = loose_params();
  const auto st = NorSandState::initial(prm);
  Vec3d zero{};
  const auto res = impm::norsand_update<double>(zero, st, prm);
  CHECK(res.committed.p_i == st.p_i);
  CHECK(res.committed.v == doctest::Approx(st.v).epsilon(1e-14));
  for (int k = 0; k < 3; ++k)
    CHECK(res.committed.eps_e[k] == doctest::Approx(st.eps_e[k]).epsilon(1e-14));
  CHECK(res.p == doctest::Approx(prm.p0).epsilon(1e-12));
  CHECK(res.iterations == 0);
}

TEST_CASE("initial state reproduces the K0 stress") {
  const auto prm = dense_params();
  const auto st = NorSandState::initial(prm);
  Vec3d zero{};
  const auto res = impm::norsand_update<double>(zero, st, prm);
  const double sigma_a = 3.0 * prm.p0 / (1.0 + 2.0 * prm.K0);
  CHECK(res.sigma[0] == doctest::Approx(sigma_a).epsilon(1e-10));
  CHECK(res.sigma[1] == doctest::Approx(prm.K0 * sigma_a).epsilon(1e-10));
  CHECK(impm::value_of(res.f_value) <= 0.0);  // starts inside the surface
}

TEST_CASE("return-map gradients match finite differences (step sweep)") {
  const auto prm = loose_params();
  auto st = NorSandState::initial(prm);
  // drive a few increments so the state is well inside the plastic regime
  Vec3d de{{-4e-3, 1.2e-3, 1.2e-3}};
  for (int i = 0; i < 5; ++i) st = impm::norsand_update<double>(de, st, prm).committed;

  SUBCASE("plastic state") {
    const auto probe = impm::norsand_update<double>(de, st, prm);
    REQUIRE(probe.iterations > 0);  // plastic
    CHECK(fd_tangent_error(de, st, prm) <= 1e-5);
  }
  SUBCASE("elastic state (small unloading increment)") {
    Vec3d unload{{5e-6, -2e-6, -2e-6}};
    const auto probe = impm::norsand_update<double>(unload, st, prm);
    REQUIRE(probe.iterations == 0);  // elastic
    CHECK(fd_tangent_error(unload, st, prm) <= 1e-6);
  }
}

TEST_CASE("yield admissibility after every plastic update") {
  const auto prm = dense_params();
  auto st = NorSandState::initial(prm);
  Vec3d de{{-2.5e-3, 0.8e-3, 0.8e-3}};
  for (int i = 0; i < 60; ++i) {
    const auto res = impm::norsand_update<double>(de, st, prm);
    if (res.iterations > 0) CHECK(std::abs(res.f_value) <= 1e-8 * std::abs(res.p));
    st = res.committed;
  }
}

TEST_CASE("drained triaxial response shapes") {
  SUBCASE("loose: peak then softening, contraction throughout") {
    const auto prm = loose_params();
    auto model = NorSandPointModel::make(prm);
    const auto path = impm::drained_triaxial_path(prm, -0.25, 200);
    const auto curve = impm::stress_point_drive(model, path);
    double q_peak = 0.0;
    std::size_t peak_idx = 0;
    int max_iters = 0;
    double prev_ev = 0.0;
    bool monotone = true;
    for (std::size_t i = 0; i < curve.size(); ++i) {
      if (curve[i].q > q_peak) {
        q_peak = curve[i].q;
        peak_idx = i;
      }
      if (curve[i].eps_v > prev_ev + 1e-9) monotone = false;
      prev_ev = curve[i].eps_v;
      max_iters = std::max(max_iters, curve[i].iterations);
    }
    CHECK(q_peak > 1.05 * curve.back().q);          // softens toward residual
    CHECK(peak_idx < curve.size() / 2);             // peak well before the end
    CHECK(peak_idx > 10);                           // and after a rising branch
    CHECK(monotone);                                // contractive throughout
    CHECK(curve.back().eps_v < 0.0);
    CHECK(max_iters <= 6);
  }
  SUBCASE("dense: higher peak and net dilation") {
    const auto loose = loose_params();
    auto lm = NorSandPointModel::make(loose);
    const auto lcurve = impm::stress_point_drive(lm, impm::drained_triaxial_path(loose, -0.25, 200));
    double loose_peak = 0.0;
    for (const auto& c : lcurve) loose_peak = std::max(loose_peak, c.q);

    const auto prm = dense_params();
    auto model = NorSandPointModel::make(prm);
    const auto curve = impm::stress_point_drive(model, impm::drained_triaxial_path(prm, -0.25, 200));
    double q_peak = 0.0;
    int max_iters = 0;
    for (const auto& c : curve) {
      q_peak = std::max(q_peak, c.q);
      max_iters = std::max(max_iters, c.iterations);
    }
    CHECK(q_peak > loose_peak);
    CHECK(curve.back().eps_v > 0.0);  // net dilation at large strain
    CHECK(q_peak > 1.1 * curve.back().q);
    CHECK(max_iters <= 6);
  }
}

TEST_CASE("stress-control Newton shows a quadratic tail") {
  const auto prm = loose_params();
  auto model = NorSandPointModel::make(prm);
  const auto curve = impm::stress_point_drive(model, impm::drained_triaxial_path(prm, -0.25, 100));
  int measured = 0;
  for (const auto& c : curve) {
    if (c.rel_residuals.size() >= 3) {
      CHECK(impm::final_convergence_order(c.rel_residuals) >= 1.8);
      ++measured;
    }
  }
  CHECK(measured > 0);
}

TEST_CASE("Hencky stress-point driver reproduces the uniaxial closed form") {
  impm::HenckyPointModel model;
  model.params = {10e3, 0.0};
  std::vector<impm::ControlStep> path(20);
  for (auto& s : path) {
    s[0] = {impm::ControlKind::strain, -0.01};
    s[1] = {impm::ControlKind::stress, 0.0};
    s[2] = {impm::ControlKind::stress, 0.0};
  }
  const auto curve = impm::stress_point_drive(model, path);
  for (const auto& c : curve) {
    // nu = 0 and zero radial stress: radial strains stay zero
    CHECK(std::abs(c.eps_v - c.eps_axial) <= 1e-12);
  }
  const double eps_a = curve.back().eps_axial;
  const double stretch = std::exp(eps_a);
  Vec3d zero{};
  const auto sigma = model.stress<double>(zero);
  CHECK(sigma[0] == doctest::Approx(10e3 * std::log(stretch) / stretch).epsilon(1e-10));
  CHECK(std::abs(sigma[1]) <= 1e-9);
}
