#include "impm/gimp.hpp"

#include <cmath>

namespace impm {

int block_size(ShapeFunctionKind kind) {
  switch (kind) {
    case ShapeFunctionKind::linear: return 3;
    case ShapeFunctionKind::gimp: return 5;
    case ShapeFunctionKind::quadratic_bspline: return 5;
    case ShapeFunctionKind::cubic_bspline: return 7;
  }
  throw ConfigError("unregistered shape function kind");
}

const char* shape_function_name(ShapeFunctionKind kind) {
  switch (kind) {
    case ShapeFunctionKind::linear: return "linear";
    case ShapeFunctionKind::gimp: return "gimp";
    case ShapeFunctionKind::quadratic_bspline: return "quadratic-bspline";
    case ShapeFunctionKind::cubic_bspline: return "cubic-bspline";
  }
  return "?";
}

WeightValue gimp_weight_1d(double xi, double lp, double h) {
  if (!(lp > 0.0) || lp >= 0.5 * h)
    throw ConfigError("GIMP requires 0 < lp < h/2 (lp = " + std::to_string(lp) +
                      ", h = " + std::to_string(h) + ")");
  const double ax = std::abs(xi);
  const double sgn = xi >= 0.0 ? 1.0 : -1.0;
  if (ax < lp) {
    return {1.0 - (xi * xi + lp * lp) / (2.0 * h * lp), -xi / (h * lp)};
  }
  if (ax < h - lp) {
    return {1.0 - ax / h, -sgn / h};
  }
  if (ax < h + lp) {
    const double t = h + lp - ax;
    return {t * t / (4.0 * h * lp), -sgn * t / (2.0 * h * lp)};
  }
  return {0.0, 0.0};
}

SupportRange gimp_support_1d(double x, double lp, double origin, double h) {
  // nonzero weight for nodes with |x - x_i| < h + lp
  const double lo = (x - origin - (h + lp)) / h;
  const double hi = (x - origin + (h + lp)) / h;
  int first = static_cast<int>(std::floor(lo)) + 1;
  int last = static_cast<int>(std::ceil(hi)) - 1;
  return {first, last - first + 1};
}

}  // namespace impm
