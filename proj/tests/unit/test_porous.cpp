#include <doctest.h>

#include <cmath>
#include <vector>

#include "impm/porous.hpp"

using impm::CoupledSim;
using impm::Grid;
using impm::PoroParams;
using impm::Vec2d;

namespace {

CoupledSim make_column(int cells, double H, double t_hat, PoroParams pp,
                       impm::SolverOptions opt = {}) {
  const double h = H / cells;
  Grid<2> grid;
  grid.h = h;
  grid.origin = Vec2d{{-h, -h}};
  grid.nodes = {4, cells + 3};
  auto parts = impm::seed_box<2>(grid, Vec2d{{0.0, 0.0}}, Vec2d{{h, H}}, 2, 2000.0);
  opt.tol = 1e-10;
  CoupledSim sim(grid, std::move(parts), pp, opt);
  sim.fix_displacement([](const Vec2d&) { return true; }, 0);
  sim.fix_displacement([](const Vec2d& x) { return x[1] <= 1e-12; });
  sim.fix_pressure([H](const Vec2d& x) { return x[1] >= H - 1e-9; });
  double top_y = -1e300;
  for (const auto& p : sim.particles) top_y = std::max(top_y, p.X[1]);
  std::vector<std::size_t> top;
  for (std::size_t pi = 0; pi < sim.particles.size(); ++pi)
    if (sim.particles[pi].X[1] >= top_y - 1e-9) top.push_back(pi);
  for (std::size_t pi : top)
    sim.particles[pi].traction_force = Vec2d{{0.0, -t_hat * h / top.size()}};
  sim.initialize();
  return sim;
}

PoroParams paper_params() { return {600e3, 600e3, 1e-12, 0.1, 1000.0}; }

}  // namespace

TEST_CASE("consolidation coefficient from the configured mobility") {
  const PoroParams pp = paper_params();
  CHECK(pp.consolidation_coefficient() == doctest::Approx(1.8e-5).epsilon(1e-12));
}

TEST_CASE("zero load, zero pressure: zero residual") {
  auto sim = make_column(10, 10.0, 0.0, paper_params());
  std::vector<double> x(sim.n_dofs(), 0.0);
  const auto r = sim.residual(x, 100.0);
  for (double v : r) CHECK(v == 0.0);
}

TEST_CASE("dt <= 0 is rejected") {
  auto sim = make_column(4, 4.0, 1e3, paper_params());
  std::vector<double> x(sim.n_dofs(), 0.0);
  CHECK_THROWS_AS((void)sim.residual(x, 0.0), impm::ConfigError);
}

TEST_CASE("undrained instant load produces uniform excess pressure") {
  // smallest stable step for equal-order interpolation at this spacing
  // (h = 0.5 m): diffusion must reach past a node per step
  auto sim = make_column(20, 10.0, 1e3, paper_params());
  sim.step(3000.0);
  const auto profile = sim.pressure_profile(1, 10.0);
  REQUIRE(profile.size() > 5);
  for (const auto& [depth, p] : profile) {
    if (depth < 1.0) continue;  // outside the early drainage front
    CHECK(p == doctest::Approx(1e3).epsilon(0.02));
  }
}

TEST_CASE("excess pressure dissipates toward zero") {
  auto sim = make_column(10, 10.0, 1e3, paper_params());
  const double c_v = sim.poro.consolidation_coefficient();
  double prev_max = 1e300;
  double dt = 10000.0;  // stable for h = 1 m equal-order interpolation
  for (int k = 0; k < 45; ++k) {
    sim.step(std::min(dt, 2.0e6));
    dt *= 1.2;
    double pmax = 0.0;
    for (const auto& [depth, p] : sim.pressure_profile(1, 10.0)) pmax = std::max(pmax, p);
    // nonincreasing up to the coarse-grid interpolation wiggle
    CHECK(pmax <= prev_max * (1.0 + 2e-3));
    prev_max = pmax;
  }
  CHECK(prev_max <= 0.01e3);
  CHECK(sim.time() * c_v / 100.0 > 2.0);
}

TEST_CASE("coarse column tracks the series solution") {
  auto sim = make_column(20, 10.0, 1e3, paper_params());
  const double c_v = sim.poro.consolidation_coefficient();
  const double t_target = 0.5 * 100.0 / c_v;  // Tv = 0.5
  double dt = 500.0;
  while (sim.time() < t_target - 1e-9) {
    dt = std::min(dt * 1.05, t_target - sim.time());
    sim.step(dt);
  }
  double num = 0.0, den = 0.0;
  for (const auto& [depth, p] : sim.pressure_profile(1, 10.0)) {
    const double pa = 1e3 * impm::terzaghi_pressure_ratio(depth / 10.0, 0.5);
    num += (p - pa) * (p - pa);
    den += pa * pa;
  }
  CHECK(std::sqrt(num / den) <= 0.05);  // coarse-grid bound
}

TEST_CASE("coupled record matches evaluation bit for bit") {
  auto sim = make_column(8, 4.0, 1e3, paper_params());
  std::vector<double> x(sim.n_dofs());
  for (int d = 0; d < sim.n_dofs(); ++d)
    x[d] = sim.dofs().field_of[d] == 2 ? 500.0 * std::sin(0.1 * d) : 1e-5 * std::cos(0.2 * d);
  const auto r = sim.residual(x, 100.0);
  impm::ad::Tape tape;
  sim.record_residual(x, 100.0, tape);
  const auto rv = tape.output_values();
  REQUIRE(rv.size() == r.size());
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(rv[i] == r[i]);
}

TEST_CASE("coupled Jacobian: AD matches finite differences") {
  auto sim = make_column(5, 2.5, 1e3, paper_params());
  std::vector<double> x(sim.n_dofs());
  for (int d = 0; d < sim.n_dofs(); ++d)
    x[d] = sim.dofs().field_of[d] == 2 ? 300.0 * std::cos(0.3 * d) : 2e-6 * d;
  const double dt = 100.0;
  impm::ad::Tape tape;
  sim.record_residual(x, dt, tape);
  const impm::DenseMatrix J = sim.assembler().dense(tape);

  double worst = 0.0, scale = 0.0;
  for (int i = 0; i < J.rows; ++i)
    for (int j = 0; j < J.cols; ++j) scale = std::max(scale, std::abs(J(i, j)));
  for (int j = 0; j < sim.n_dofs(); ++j) {
    const double h = sim.dofs().field_of[j] == 2 ? 1e-2 : 1e-9;
    auto xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const auto rp = sim.residual(xp, dt);
    const auto rm = sim.residual(xm, dt);
    for (int i = 0; i < sim.n_dofs(); ++i)
      worst = std::max(worst, std::abs((rp[i] - rm[i]) / (2.0 * h) - J(i, j)));
  }
  CHECK(worst / scale <= 1e-6);
}
