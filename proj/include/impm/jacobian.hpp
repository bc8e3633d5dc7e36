#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "impm/errors.hpp"
#include "impm/gimp.hpp"
#include "impm/grid.hpp"
#include "impm/sparse.hpp"
#include "impm/tape.hpp"

namespace impm {

enum class JacobianStrategy { dense, sparse };

enum class InterferenceCheck { off, sampled, always };

struct JacobianStats {
  int total_passes = 0;
  int passes_per_field = 0;
  double seconds = 0.0;  // backward passes + scatter
};

// Extracts the Newton Jacobian J = dr/du from a recorded residual tape, either
// row by row (dense) or with one seed per non-overlapping grid block so each
// backward pass yields many non-interfering rows (sparse).
template <int D>
class JacobianAssembler {
 public:
  JacobianAssembler() = default;

  JacobianAssembler(const Grid<D>& grid, const DofMap& dofs, ShapeFunctionKind kind)
      : grid_(&grid), dofs_(&dofs), b_(block_size(kind)) {
    const int reach = (b_ - 1) / 2;  // coupled node neighborhood per axis
    pattern_.assign(dofs.n_dofs, {});
    for (int d = 0; d < dofs.n_dofs; ++d) {
      const auto center = grid.unflat(dofs.node_of[d]);
      std::array<int, D> idx{};
      std::array<int, D> lo{}, hi{};
      for (int a = 0; a < D; ++a) {
        lo[a] = std::max(0, center[a] - reach);
        hi[a] = std::min(grid.nodes[a] - 1, center[a] + reach);
        idx[a] = lo[a];
      }
      while (true) {
        const int node = grid.flat(idx);
        for (int f = 0; f < dofs.n_fields; ++f) {
          const std::int32_t c = dofs.dof(node, f);
          if (c >= 0) pattern_[d].push_back(c);
        }
        int a = D - 1;
        for (; a >= 0; --a) {
          if (++idx[a] <= hi[a]) break;
          idx[a] = lo[a];
        }
        if (a < 0) break;
      }
      std::sort(pattern_[d].begin(), pattern_[d].end());
    }
    csr_template_ = CsrMatrix::from_pattern(dofs.n_dofs, pattern_);
  }

  int block_size_nodes() const { return b_; }
  const std::vector<std::vector<std::int32_t>>& pattern() const { return pattern_; }

  // Algorithm: one seed per DOF, one backward pass per row.
  DenseMatrix dense(const ad::Tape& tape, JacobianStats* stats = nullptr) const {
    const int n = dofs_->n_dofs;
    DenseMatrix J(n, n);
    std::vector<double> seed(n, 0.0);
    std::vector<double> grad(n, 0.0);
    std::vector<double> adjoint;
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < n; ++i) {
      seed[i] = 1.0;
      tape.backward(seed, std::span<double>(grad.data(), n), adjoint);
      for (int c = 0; c < n; ++c) J(i, c) = grad[c];
      seed[i] = 0.0;
    }
    if (stats) {
      stats->total_passes = n;
      stats->passes_per_field = n;
      stats->seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    return J;
  }

  // Block-seeded extraction: for every (field, block offset) combination one
  // backward pass covers all blocks at once; b^D passes per scalar field.
  CsrMatrix sparse(const ad::Tape& tape, JacobianStats* stats = nullptr,
                   InterferenceCheck check = InterferenceCheck::off) const {
    const int n = dofs_->n_dofs;
    CsrMatrix J = csr_template_;
    J.zero_values();

    // group dofs by (field, local offset)
    const int n_offsets = ipow(b_, D);
    std::vector<std::vector<std::int32_t>> groups(
        static_cast<std::size_t>(dofs_->n_fields) * n_offsets);
    for (int d = 0; d < n; ++d) {
      const auto idx = grid_->unflat(dofs_->node_of[d]);
      int off = idx[0] % b_;
      for (int a = 1; a < D; ++a) off = off * b_ + idx[a] % b_;
      groups[static_cast<std::size_t>(dofs_->field_of[d]) * n_offsets + off].push_back(d);
    }

    std::vector<double> seed(n, 0.0);
    std::vector<double> grad(n, 0.0);
    std::vector<double> adjoint;
    int pass = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& group : groups) {
      for (std::int32_t d : group) seed[d] = 1.0;
      tape.backward(seed, std::span<double>(grad.data(), n), adjoint);
      for (std::int32_t d : group) {
        for (std::int64_t k = J.row_ptr[d]; k < J.row_ptr[d + 1]; ++k)
          J.vals[k] = grad[J.cols[k]];
        seed[d] = 0.0;
      }
      ++pass;
      if (check == InterferenceCheck::always ||
          (check == InterferenceCheck::sampled && pass % 8 == 1))
        verify_no_interference(group, grad);
    }
    if (stats) {
      stats->total_passes = pass;
      stats->passes_per_field = n_offsets;
      stats->seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    return J;
  }

  // Fills the CSR pattern from a densely extracted Jacobian (used when the
  // dense strategy feeds the linear solver).
  CsrMatrix to_csr(const DenseMatrix& J) const {
    CsrMatrix out = csr_template_;
    for (int i = 0; i < out.n; ++i)
      for (std::int64_t k = out.row_ptr[i]; k < out.row_ptr[i + 1]; ++k)
        out.vals[k] = J(i, out.cols[k]);
    return out;
  }

  // Largest dense entry outside the block-sparsity pattern (should be zero).
  double max_outside_pattern(const DenseMatrix& J) const {
    double worst = 0.0;
    for (int i = 0; i < J.rows; ++i) {
      std::size_t k = static_cast<std::size_t>(csr_template_.row_ptr[i]);
      const std::size_t end = static_cast<std::size_t>(csr_template_.row_ptr[i + 1]);
      for (int c = 0; c < J.cols; ++c) {
        if (k < end && csr_template_.cols[k] == c) {
          ++k;
          continue;
        }
        worst = std::max(worst, std::abs(J(i, c)));
      }
    }
    return worst;
  }

 private:
  void verify_no_interference(const std::vector<std::int32_t>& group,
                              const std::vector<double>& grad) const {
    mark_.assign(grad.size(), 0);
    double scale = 0.0;
    for (double g : grad) scale = std::max(scale, std::abs(g));
    for (std::int32_t d : group)
      for (std::int32_t c : pattern_[d]) mark_[c] = 1;
    for (std::size_t c = 0; c < grad.size(); ++c) {
      if (mark_[c] || std::abs(grad[c]) <= 1e-12 * scale) continue;
      const auto idx = grid_->unflat(dofs_->node_of[c]);
      std::string blk;
      for (int a = 0; a < D; ++a) blk += (a ? "," : "") + std::to_string(idx[a] / b_);
      throw SeedingFault("backward pass touched dof " + std::to_string(c) + " in block (" +
                         blk + ") outside every seeded pattern of its group");
    }
  }

  const Grid<D>* grid_ = nullptr;
  const DofMap* dofs_ = nullptr;
  int b_ = 5;
  std::vector<std::vector<std::int32_t>> pattern_;
  CsrMatrix csr_template_;
  mutable std::vector<std::uint8_t> mark_;
};

}  // namespace impm
