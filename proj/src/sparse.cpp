#include "impm/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace impm {

CsrMatrix CsrMatrix::from_pattern(int n, const std::vector<std::vector<std::int32_t>>& pattern) {
  CsrMatrix m;
  m.n = n;
  m.row_ptr.resize(n + 1, 0);
  std::size_t nnz = 0;
  for (int i = 0; i < n; ++i) {
    nnz += pattern[i].size();
    m.row_ptr[i + 1] = static_cast<std::int64_t>(nnz);
  }
  m.cols.reserve(nnz);
  for (int i = 0; i < n; ++i) m.cols.insert(m.cols.end(), pattern[i].begin(), pattern[i].end());
  m.vals.assign(nnz, 0.0);
  return m;
}

double& CsrMatrix::at(int row, int col) {
  const auto begin = cols.begin() + row_ptr[row];
  const auto end = cols.begin() + row_ptr[row + 1];
  const auto it = std::lower_bound(begin, end, col);
  if (it == end || *it != col)
    throw Error("CSR entry (" + std::to_string(row) + ", " + std::to_string(col) +
                ") is outside the pattern");
  return vals[static_cast<std::size_t>(it - cols.begin())];
}

double CsrMatrix::get(int row, int col) const {
  const auto begin = cols.begin() + row_ptr[row];
  const auto end = cols.begin() + row_ptr[row + 1];
  const auto it = std::lower_bound(begin, end, col);
  if (it == end || *it != col) return 0.0;
  return vals[static_cast<std::size_t>(it - cols.begin())];
}

void CsrMatrix::zero_values() { std::fill(vals.begin(), vals.end(), 0.0); }

std::vector<double> CsrMatrix::multiply(std::span<const double> x) const {
  std::vector<double> y(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += vals[k] * x[cols[k]];
    y[i] = s;
  }
  return y;
}

CsrMatrix CsrMatrix::transposed() const {
  CsrMatrix t;
  t.n = n;
  t.row_ptr.assign(n + 1, 0);
  for (std::int32_t c : cols) ++t.row_ptr[c + 1];
  for (int i = 0; i < n; ++i) t.row_ptr[i + 1] += t.row_ptr[i];
  t.cols.resize(cols.size());
  t.vals.resize(vals.size());
  std::vector<std::int64_t> next(t.row_ptr.begin(), t.row_ptr.end() - 1);
  for (int i = 0; i < n; ++i)
    for (std::int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
      const std::int64_t slot = next[cols[k]]++;
      t.cols[slot] = i;
      t.vals[slot] = vals[k];
    }
  return t;
}

double CsrMatrix::max_abs() const {
  double v = 0.0;
  for (double x : vals) v = std::max(v, std::abs(x));
  return v;
}

}  // namespace impm
