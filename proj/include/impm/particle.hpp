#pragma once

#include <vector>

#include "impm/grid.hpp"
#include "impm/small_math.hpp"

namespace impm {

template <int D>
struct Particle {
  Vec<double, D> X{};   // reference position
  Vec<double, D> x{};   // current position
  double m = 0.0;       // mass (constant)
  double V0 = 0.0;      // initial volume
  double V = 0.0;       // current volume = det(F) V0
  Mat<double, D> F = Mat<double, D>::identity();
  Mat3d sigma{};        // committed Cauchy stress (embedded 3x3)
  Vec<double, D> lp0{};  // initial GIMP half-widths
  Vec<double, D> lp{};   // current GIMP half-widths

  // J2 history
  Mat3d B_e = Mat3d::identity();
  double alpha = 0.0;  // accumulated plastic multiplier

  // external loads at unit schedule scale
  Vec<double, D> traction_force{};  // surface traction times carried area
  Vec<double, D> point_load{};
};

// Fills an axis-aligned box with ppc^D equally spaced particles per cell.
template <int D>
std::vector<Particle<D>> seed_box(const Grid<D>& grid, const Vec<double, D>& lo,
                                  const Vec<double, D>& hi, int ppc, double density) {
  std::array<int, D> cells{};
  for (int a = 0; a < D; ++a)
    cells[a] = static_cast<int>(std::round((hi[a] - lo[a]) / grid.h));

  const double spacing = grid.h / ppc;
  double vol = 1.0;
  for (int a = 0; a < D; ++a) vol *= spacing;

  std::vector<Particle<D>> out;
  std::array<int, D> sub{};
  for (int a = 0; a < D; ++a) sub[a] = cells[a] * ppc;
  int total = 1;
  for (int a = 0; a < D; ++a) total *= sub[a];
  out.reserve(total);
  for (int k = 0; k < total; ++k) {
    std::array<int, D> idx{};
    int rem = k;
    for (int a = D - 1; a >= 0; --a) {
      idx[a] = rem % sub[a];
      rem /= sub[a];
    }
    Particle<D> p;
    for (int a = 0; a < D; ++a) {
      p.X[a] = lo[a] + (idx[a] + 0.5) * spacing;
      p.lp0[a] = 0.5 * spacing;
    }
    p.x = p.X;
    p.lp = p.lp0;
    p.V0 = vol;
    p.V = vol;
    p.m = density * vol;
    out.push_back(p);
  }
  return out;
}

}  // namespace impm
