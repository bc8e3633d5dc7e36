#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "impm/errors.hpp"

namespace impm {

// Compressed sparse row matrix; column indices are sorted and unique per row.
struct CsrMatrix {
  int n = 0;
  std::vector<std::int64_t> row_ptr;  // size n + 1
  std::vector<std::int32_t> cols;
  std::vector<double> vals;

  static CsrMatrix from_pattern(int n, const std::vector<std::vector<std::int32_t>>& pattern);

  double& at(int row, int col);        // existing entry only
  double get(int row, int col) const;  // 0 outside the pattern
  void zero_values();

  std::vector<double> multiply(std::span<const double> x) const;
  CsrMatrix transposed() const;
  double max_abs() const;
};

struct DenseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> vals;  // row-major

  DenseMatrix() = default;
  DenseMatrix(int r, int c) : rows(r), cols(c), vals(static_cast<std::size_t>(r) * c, 0.0) {}
  double& operator()(int i, int j) { return vals[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return vals[static_cast<std::size_t>(i) * cols + j]; }
};

// Direct sparse solve of A x = b (LU with pivoting, row equilibration and
// iterative refinement). Throws LinearSolverError on singular factorization
// or when the normwise backward error |Ax-b|/(|A||x|+|b|) exceeds 1e-10.
std::vector<double> sparse_lu_solve(const CsrMatrix& A, std::span<const double> b);

}  // namespace impm
