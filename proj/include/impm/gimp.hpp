#pragma once

#include <array>
#include <string>

#include "impm/errors.hpp"
#include "impm/small_math.hpp"

namespace impm {

enum class ShapeFunctionKind { linear, gimp, quadratic_bspline, cubic_bspline };

// Width (in grid nodes per axis) of the largest coupled neighborhood a node
// sees through the transfer, which fixes the seeding block size.
int block_size(ShapeFunctionKind kind);

const char* shape_function_name(ShapeFunctionKind kind);

struct WeightValue {
  double w;   // weight
  double dw;  // derivative w.r.t. the particle coordinate
};

// One-dimensional GIMP weight: the linear hat function averaged over the
// particle domain [xi - lp, xi + lp]. xi is the signed particle-to-node
// distance, lp the particle half-width, h the grid spacing. Branch intervals
// are half-open in |xi| so every point maps to exactly one branch.
WeightValue gimp_weight_1d(double xi, double lp, double h);

// Tensor-product weight and gradient for a particle/node pair.
template <int D>
struct WeightGrad {
  double w;
  Vec<double, D> grad;
};

template <int D>
WeightGrad<D> gimp_weight(const Vec<double, D>& particle, const Vec<double, D>& lp,
                          const Vec<double, D>& node, double h) {
  std::array<WeightValue, D> axis;
  for (int a = 0; a < D; ++a) axis[a] = gimp_weight_1d(particle[a] - node[a], lp[a], h);
  WeightGrad<D> out;
  out.w = 1.0;
  for (int a = 0; a < D; ++a) out.w *= axis[a].w;
  for (int a = 0; a < D; ++a) {
    double g = axis[a].dw;
    for (int b = 0; b < D; ++b)
      if (b != a) g *= axis[b].w;
    out.grad[a] = g;
  }
  return out;
}

// Nodes with possibly nonzero weight along one axis: consecutive indices
// [first, first + count), count <= 3 for lp < h/2.
struct SupportRange {
  int first;
  int count;
};

SupportRange gimp_support_1d(double x, double lp, double origin, double h);

// cpGIMP particle-domain update: half-widths stretch with the diagonal of the
// deformation gradient. Throws when the domain grows past half a cell.
template <int D>
Vec<double, D> update_particle_domain(const Mat<double, D>& F, const Vec<double, D>& lp0,
                                      double h) {
  Vec<double, D> lp;
  for (int a = 0; a < D; ++a) {
    lp[a] = lp0[a] * F(a, a);
    if (!(lp[a] > 0.0) || lp[a] >= 0.5 * h)
      throw DomainError("particle domain half-width " + std::to_string(lp[a]) +
                        " reached half the grid spacing " + std::to_string(h) +
                        "; use finer particles or a capped domain update");
  }
  return lp;
}

}  // namespace impm
