#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include "impm/tape.hpp"

namespace impm {

// Fixed-size vector/matrix over a generic scalar (double or ad::Var).

template <class T, int N>
struct Vec {
  std::array<T, N> e{};

  T& operator[](int i) { return e[i]; }
  const T& operator[](int i) const { return e[i]; }

  Vec& operator+=(const Vec& o) {
    for (int i = 0; i < N; ++i) e[i] += o.e[i];
    return *this;
  }
  Vec& operator-=(const Vec& o) {
    for (int i = 0; i < N; ++i) e[i] -= o.e[i];
    return *this;
  }

  friend Vec operator+(Vec a, const Vec& b) { return a += b; }
  friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
  friend Vec operator*(const T& s, Vec a) {
    for (int i = 0; i < N; ++i) a.e[i] = s * a.e[i];
    return a;
  }
  friend Vec operator*(Vec a, const T& s) { return s * a; }
};

template <class T, int N>
T dot(const Vec<T, N>& a, const Vec<T, N>& b) {
  T s = a.e[0] * b.e[0];
  for (int i = 1; i < N; ++i) s += a.e[i] * b.e[i];
  return s;
}

template <class T, int R, int C = R>
struct Mat {
  std::array<T, static_cast<std::size_t>(R) * C> e{};

  T& operator()(int i, int j) { return e[static_cast<std::size_t>(i) * C + j]; }
  const T& operator()(int i, int j) const { return e[static_cast<std::size_t>(i) * C + j]; }

  static Mat identity() {
    static_assert(R == C);
    Mat m;
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < C; ++j) m(i, j) = T(i == j ? 1.0 : 0.0);
    return m;
  }

  Mat& operator+=(const Mat& o) {
    for (std::size_t i = 0; i < e.size(); ++i) e[i] += o.e[i];
    return *this;
  }
  Mat& operator-=(const Mat& o) {
    for (std::size_t i = 0; i < e.size(); ++i) e[i] -= o.e[i];
    return *this;
  }
  friend Mat operator+(Mat a, const Mat& b) { return a += b; }
  friend Mat operator-(Mat a, const Mat& b) { return a -= b; }
  friend Mat operator*(const T& s, Mat a) {
    for (auto& x : a.e) x = s * x;
    return a;
  }
};

template <class T, int R, int K, int C>
Mat<T, R, C> matmul(const Mat<T, R, K>& a, const Mat<T, K, C>& b) {
  Mat<T, R, C> m;
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j) {
      T s = a(i, 0) * b(0, j);
      for (int k = 1; k < K; ++k) s += a(i, k) * b(k, j);
      m(i, j) = s;
    }
  return m;
}

template <class T, int R, int C>
Vec<T, R> matvec(const Mat<T, R, C>& a, const Vec<T, C>& x) {
  Vec<T, R> y;
  for (int i = 0; i < R; ++i) {
    T s = a(i, 0) * x[0];
    for (int k = 1; k < C; ++k) s += a(i, k) * x[k];
    y[i] = s;
  }
  return y;
}

template <class T, int N>
Mat<T, N> transpose(const Mat<T, N>& a) {
  Mat<T, N> m;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) m(i, j) = a(j, i);
  return m;
}

template <class T, int N>
Mat<T, N> outer(const Vec<T, N>& a, const Vec<T, N>& b) {
  Mat<T, N> m;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) m(i, j) = a[i] * b[j];
  return m;
}

template <class T, int N>
T trace(const Mat<T, N>& a) {
  T s = a(0, 0);
  for (int i = 1; i < N; ++i) s += a(i, i);
  return s;
}

template <class T>
T det(const Mat<T, 1>& a) {
  return a(0, 0);
}

template <class T>
T det(const Mat<T, 2>& a) {
  return a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
}

template <class T>
T det(const Mat<T, 3>& a) {
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
         a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

template <class T>
Mat<T, 1> inverse(const Mat<T, 1>& a) {
  Mat<T, 1> m;
  m(0, 0) = 1.0 / a(0, 0);
  return m;
}

template <class T>
Mat<T, 2> inverse(const Mat<T, 2>& a) {
  const T d = det(a);
  Mat<T, 2> m;
  m(0, 0) = a(1, 1) / d;
  m(0, 1) = (-1.0) * a(0, 1) / d;
  m(1, 0) = (-1.0) * a(1, 0) / d;
  m(1, 1) = a(0, 0) / d;
  return m;
}

template <class T>
Mat<T, 3> inverse(const Mat<T, 3>& a) {
  const T d = det(a);
  Mat<T, 3> m;
  m(0, 0) = (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) / d;
  m(0, 1) = (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) / d;
  m(0, 2) = (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) / d;
  m(1, 0) = (a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2)) / d;
  m(1, 1) = (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) / d;
  m(1, 2) = (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) / d;
  m(2, 0) = (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0)) / d;
  m(2, 1) = (a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1)) / d;
  m(2, 2) = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) / d;
  return m;
}

using Vec1d = Vec<double, 1>;
using Vec2d = Vec<double, 2>;
using Vec3d = Vec<double, 3>;
using Mat1d = Mat<double, 1>;
using Mat2d = Mat<double, 2>;
using Mat3d = Mat<double, 3>;

// Logarithm of a symmetric positive-definite 2x2 matrix, in closed form via
// its invariants (no trig, so the expression stays on the elementary op set).
// The eigenvalue-difference quotient switches to a series in (r/m)^2 near the
// isotropic state, where the explicit form would cancel; the series is fed by
// r^2 directly so no gradient path runs through sqrt at zero.
template <class T>
Mat<T, 2> sym_log_2x2(const Mat<T, 2>& a) {
  using std::log;
  using std::sqrt;
  const T m = 0.5 * (a(0, 0) + a(1, 1));
  const T h = 0.5 * (a(0, 0) - a(1, 1));
  const T r2 = h * h + a(0, 1) * a(1, 0);
  T p, q;
  if (value_of(r2) < 1e-8 * value_of(m) * value_of(m)) {
    const T s = r2 / (m * m);
    p = log(m) - 0.5 * s * (1.0 + 0.5 * s);
    q = (1.0 + s * (1.0 / 3.0 + s * (1.0 / 5.0))) / m;
  } else {
    const T r = sqrt(r2);
    const T log_hi = log(m + r);
    const T log_lo = log(m - r);
    p = 0.5 * (log_hi + log_lo);
    q = (log_hi - log_lo) / (2.0 * r);
  }
  Mat<T, 2> out;
  out(0, 0) = p + q * h;
  out(1, 1) = p - q * h;
  out(0, 1) = q * a(0, 1);
  out(1, 0) = q * a(1, 0);
  return out;
}

// Exponential of a symmetric 2x2 matrix by the same invariant split.
template <class T>
Mat<T, 2> sym_exp_2x2(const Mat<T, 2>& a) {
  using std::exp;
  using std::sqrt;
  const T m = 0.5 * (a(0, 0) + a(1, 1));
  const T h = 0.5 * (a(0, 0) - a(1, 1));
  const T r2 = h * h + a(0, 1) * a(1, 0);
  T p, q;
  if (value_of(r2) < 1e-8) {
    p = exp(m) * (1.0 + 0.5 * r2 * (1.0 + r2 * (1.0 / 12.0)));
    q = exp(m) * (1.0 + r2 * (1.0 / 6.0 + r2 * (1.0 / 120.0)));
  } else {
    const T r = sqrt(r2);
    const T exp_hi = exp(m + r);
    const T exp_lo = exp(m - r);
    p = 0.5 * (exp_hi + exp_lo);
    q = (exp_hi - exp_lo) / (2.0 * r);
  }
  Mat<T, 2> out;
  out(0, 0) = p + q * h;
  out(1, 1) = p - q * h;
  out(0, 1) = q * a(0, 1);
  out(1, 0) = q * a(1, 0);
  return out;
}

}  // namespace impm
