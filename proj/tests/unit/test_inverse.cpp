#include <doctest.h>

#include <cmath>

#include "impm/inverse.hpp"

using impm::ForwardRun;
using impm::InverseOptions;
using impm::InverseProblem;

namespace {

InverseOptions small_options() {
  InverseOptions opt;
  opt.E_true = 1.0e6;
  opt.nu = 0.2;
  opt.width = 4.0;
  opt.height = 4.0;
  opt.h = 1.0;  // coarse for unit-test speed
  opt.ppc = 2;
  opt.t_hat = 40e3;
  opt.levels = 6;
  return opt;
}

}  // namespace

TEST_CASE("quadratic toy adjoint: r(u; theta) = theta u - f, L = (u - u*)^2") {
  // closed form: u = f / theta, dL/dtheta = -2 (u - u*) f / theta^2
  const double f = 3.0, u_star = 0.7, theta = 2.0;
  const double u = f / theta;
  const double dL_du = 2.0 * (u - u_star);
  // adjoint: J = theta, lambda = dL_du / theta, dL/dtheta = -lambda * dr/dtheta = -lambda u
  const double lambda = dL_du / theta;
  const double adjoint = -lambda * u;
  const double closed = -2.0 * (u - u_star) * f / (theta * theta);
  CHECK(adjoint == doctest::Approx(closed).epsilon(1e-14));
}

TEST_CASE("reference self-consistency: zero loss and zero gradient at E_true") {
  InverseProblem problem(small_options());
  problem.generate_reference();
  const double theta_true = std::log(1.0e6);
  const auto run = problem.simulate(theta_true);
  const double L0 = problem.loss(run);
  CHECK(L0 == 0.0);  // bitwise-identical forward runs
  const double g = problem.gradient(theta_true, run);
  // scale reference: loss at the 0.1 E_true initial guess
  const auto run0 = problem.simulate(std::log(1.0e5));
  CHECK(std::abs(g) <= 1e-10 * problem.loss(run0));
}

TEST_CASE("determinism: identical parameters give identical losses") {
  InverseProblem problem(small_options());
  problem.generate_reference();
  const auto a = problem.simulate(std::log(4.2e5));
  const auto b = problem.simulate(std::log(4.2e5));
  CHECK(problem.loss(a) == problem.loss(b));
}

TEST_CASE("softer stiffness gives a visibly softer response") {
  InverseProblem problem(small_options());
  problem.generate_reference();
  const auto soft = problem.simulate(std::log(1.0e5));
  const double s_soft = InverseProblem::fd_slope(soft.displacement, soft.force);
  const double s_ref = InverseProblem::fd_slope(problem.reference().displacement,
                                                problem.reference().force);
  CHECK(s_soft < 0.2 * s_ref);
}

TEST_CASE("adjoint gradient matches finite differences away from the optimum") {
  InverseProblem problem(small_options());
  problem.generate_reference();
  for (double E : {2.0e5, 7.0e5}) {
    const double theta = std::log(E);
    const auto run = problem.simulate(theta);
    const double g = problem.gradient(theta, run);
    const double h = 1e-5;
    const double Lp = problem.loss(problem.simulate(theta + h));
    const double Lm = problem.loss(problem.simulate(theta - h));
    const double fd = (Lp - Lm) / (2.0 * h);
    CHECK(std::abs(g - fd) / std::max(std::abs(fd), 1e-12) <= 1e-4);
  }
}

TEST_CASE("gradient descent recovers the stiffness") {
  InverseOptions opt = small_options();
  InverseProblem problem(opt);
  const auto trajectory = problem.gradient_descent(0.1 * opt.E_true);
  REQUIRE(!trajectory.empty());
  CHECK(trajectory.size() <= 20);
  CHECK(std::abs(trajectory.back().E - opt.E_true) / opt.E_true <= 0.01);
  // loss drops sharply within a few iterations
  CHECK(trajectory[4].loss <= 0.1 * trajectory[0].loss);
}

TEST_CASE("divergence guard flags an unstable learning rate") {
  InverseOptions opt = small_options();
  opt.lr = 25.0;  // far beyond the stability bound
  opt.max_gd_iterations = 50;
  InverseProblem problem(opt);
  CHECK_THROWS_AS((void)problem.gradient_descent(0.1 * opt.E_true),
                  impm::NonConvergenceError);
}
