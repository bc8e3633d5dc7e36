#include <Eigen/Sparse>
#include <cstdio>
#include <Eigen/SparseLU>
#include <cmath>
#include <string>

#include "impm/sparse.hpp"

namespace impm {

std::vector<double> sparse_lu_solve(const CsrMatrix& A, std::span<const double> b) {
  if (A.n == 0) return {};
  if (static_cast<int>(b.size()) != A.n)
    throw LinearSolverError("right-hand side size does not match the matrix dimension");

  // row equilibration: grid nodes at the support fringe carry tiny transfer
  // weights and produce rows orders of magnitude below the bulk
  std::vector<double> row_scale(A.n, 0.0);
  for (int i = 0; i < A.n; ++i) {
    for (std::int64_t k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
      row_scale[i] = std::max(row_scale[i], std::abs(A.vals[k]));
    if (row_scale[i] == 0.0) throw LinearSolverError("empty matrix row " + std::to_string(i));
  }

  Eigen::SparseMatrix<double> M(A.n, A.n);
  Eigen::SparseMatrix<double> Ms(A.n, A.n);
  {
    std::vector<Eigen::Triplet<double>> trip, trip_s;
    trip.reserve(A.vals.size());
    trip_s.reserve(A.vals.size());
    for (int i = 0; i < A.n; ++i)
      for (std::int64_t k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k) {
        trip.emplace_back(i, A.cols[k], A.vals[k]);
        trip_s.emplace_back(i, A.cols[k], A.vals[k] / row_scale[i]);
      }
    M.setFromTriplets(trip.begin(), trip.end());
    Ms.setFromTriplets(trip_s.begin(), trip_s.end());
  }
  M.makeCompressed();
  Ms.makeCompressed();

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(Ms);
  lu.factorize(Ms);
  if (lu.info() != Eigen::Success)
    throw LinearSolverError("singular factorization: " + lu.lastErrorMessage());

  Eigen::VectorXd rhs(A.n);
  for (int i = 0; i < A.n; ++i) rhs[i] = b[i];
  Eigen::VectorXd rhs_s(A.n);
  for (int i = 0; i < A.n; ++i) rhs_s[i] = b[i] / row_scale[i];
  Eigen::VectorXd x = lu.solve(rhs_s);
  if (lu.info() != Eigen::Success) throw LinearSolverError("sparse LU solve failed");

  const double rhs_norm = rhs.norm();
  if (rhs_norm > 0.0) {
    // Solution quality as normwise backward error |Ax-b| / (|A||x| + |b|);
    // the plain residual over |b| is unattainable once |A||x| >> |b|, which
    // is the normal situation for a nearly converged Newton increment.
    double mat_norm = 0.0;
    for (int i = 0; i < A.n; ++i) {
      double row = 0.0;
      for (std::int64_t k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k) row += std::abs(A.vals[k]);
      mat_norm = std::max(mat_norm, row);
    }
    auto backward_error = [&](const Eigen::VectorXd& sol) {
      return (M * sol - rhs).norm() /
             (mat_norm * sol.lpNorm<Eigen::Infinity>() + rhs_norm);
    };
    double res = backward_error(x);
    for (int sweep = 0; sweep < 2 && res > 1e-14; ++sweep) {
      Eigen::VectorXd rs = rhs - M * x;
      for (int i = 0; i < A.n; ++i) rs[i] /= row_scale[i];
      const Eigen::VectorXd corr = lu.solve(rs);
      if (lu.info() != Eigen::Success) break;
      x += corr;
      res = backward_error(x);
    }
    if (!(res <= 1e-10)) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3e", res);
      throw LinearSolverError("solution backward error " + std::string(buf) +
                              " exceeds 1e-10; matrix is ill-conditioned or singular");
    }
  }

  return std::vector<double>(x.data(), x.data() + A.n);
}

}  // namespace impm
