#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "impm/small_math.hpp"

namespace impm {

constexpr int ipow(int base, int exp) {
  int v = 1;
  for (int i = 0; i < exp; ++i) v *= base;
  return v;
}

// Structured background grid: nodes at origin + index * h per axis.
template <int D>
struct Grid {
  Vec<double, D> origin{};
  double h = 1.0;
  std::array<int, D> nodes{};  // node count per axis

  int node_count() const {
    int n = 1;
    for (int a = 0; a < D; ++a) n *= nodes[a];
    return n;
  }

  int flat(const std::array<int, D>& idx) const {
    int f = idx[0];
    for (int a = 1; a < D; ++a) f = f * nodes[a] + idx[a];
    return f;
  }

  std::array<int, D> unflat(int f) const {
    std::array<int, D> idx{};
    for (int a = D - 1; a > 0; --a) {
      idx[a] = f % nodes[a];
      f /= nodes[a];
    }
    idx[0] = f;
    return idx;
  }

  Vec<double, D> node_pos(int f) const {
    const auto idx = unflat(f);
    Vec<double, D> x;
    for (int a = 0; a < D; ++a) x[a] = origin[a] + idx[a] * h;
    return x;
  }

  bool in_range(const std::array<int, D>& idx) const {
    for (int a = 0; a < D; ++a)
      if (idx[a] < 0 || idx[a] >= nodes[a]) return false;
    return true;
  }
};

// Free-DOF numbering over active, unconstrained (node, field) pairs. Fields
// 0..D-1 are displacement components; a coupled formulation appends extras.
struct DofMap {
  int n_fields = 0;
  int n_dofs = 0;
  std::vector<std::int32_t> dof_of;    // [node * n_fields + field] -> dof or -1
  std::vector<std::int32_t> node_of;   // dof -> flat node
  std::vector<std::int32_t> field_of;  // dof -> field

  void build(int node_count, int fields, const std::vector<std::uint8_t>& active,
             const std::vector<std::uint8_t>& fixed /* node*fields+field */) {
    n_fields = fields;
    dof_of.assign(static_cast<std::size_t>(node_count) * fields, -1);
    node_of.clear();
    field_of.clear();
    n_dofs = 0;
    for (int n = 0; n < node_count; ++n) {
      if (!active[n]) continue;
      for (int f = 0; f < fields; ++f) {
        if (fixed[static_cast<std::size_t>(n) * fields + f]) continue;
        dof_of[static_cast<std::size_t>(n) * fields + f] = n_dofs;
        node_of.push_back(n);
        field_of.push_back(f);
        ++n_dofs;
      }
    }
  }

  std::int32_t dof(int node, int field) const {
    return dof_of[static_cast<std::size_t>(node) * n_fields + field];
  }
};

}  // namespace impm
