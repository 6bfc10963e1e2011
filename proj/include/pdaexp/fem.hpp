#pragma once

// Uniform-mesh finite element matrices: P1 on [0, 1] and Q1 on the unit square.

#include <array>
#include <vector>

#include "pdaexp/linalg.hpp"

namespace pdaexp::fem {

/// P1 mass and stiffness on [0, 1] with N elements, restricted to nodes
/// x_i = i/N for i = 1..N (homogeneous Dirichlet at x = 0).
struct P1Interval {
  SparseMatrix mass;
  SparseMatrix stiffness;
};

inline P1Interval p1_left_dirichlet(Index n_elems) {
  const double h = 1.0 / static_cast<double>(n_elems);
  std::vector<Triplet> m, k;
  // Element e spans nodes e and e + 1; node i maps to unknown i - 1.
  for (Index e = 0; e < n_elems; ++e) {
    const Index nodes[2] = {e, e + 1};
    for (int a = 0; a < 2; ++a) {
      if (nodes[a] == 0) continue;
      for (int b = 0; b < 2; ++b) {
        if (nodes[b] == 0) continue;
        m.emplace_back(nodes[a] - 1, nodes[b] - 1, h / 6.0 * (a == b ? 2.0 : 1.0));
        k.emplace_back(nodes[a] - 1, nodes[b] - 1, (a == b ? 1.0 : -1.0) / h);
      }
    }
  }
  return {sparse_from_triplets(n_elems, n_elems, m), sparse_from_triplets(n_elems, n_elems, k)};
}

/// P1 mass on [0, 1] with N elements restricted to the interior nodes i = 1..N-1.
inline SparseMatrix p1_interior_mass(Index n_elems) {
  const double h = 1.0 / static_cast<double>(n_elems);
  std::vector<Triplet> m;
  for (Index e = 0; e < n_elems; ++e) {
    const Index nodes[2] = {e, e + 1};
    for (int a = 0; a < 2; ++a) {
      if (nodes[a] == 0 || nodes[a] == n_elems) continue;
      for (int b = 0; b < 2; ++b) {
        if (nodes[b] == 0 || nodes[b] == n_elems) continue;
        m.emplace_back(nodes[a] - 1, nodes[b] - 1, h / 6.0 * (a == b ? 2.0 : 1.0));
      }
    }
  }
  return sparse_from_triplets(n_elems - 1, n_elems - 1, m);
}

/// Q1 mass and stiffness on an N x N grid of the unit square. `index(i, j)`
/// returns the unknown of node (i/N, j/N) or -1 for an eliminated Dirichlet node.
template <class NodeIndex>
P1Interval q1_square(Index n_elems, Index n_unknowns, NodeIndex index) {
  const double h = 1.0 / static_cast<double>(n_elems);
  // Local nodes counter-clockwise from the lower-left corner.
  static constexpr std::array<std::array<double, 4>, 4> k_ref = {{
      {4.0, -1.0, -2.0, -1.0},
      {-1.0, 4.0, -1.0, -2.0},
      {-2.0, -1.0, 4.0, -1.0},
      {-1.0, -2.0, -1.0, 4.0},
  }};
  static constexpr std::array<std::array<double, 4>, 4> m_ref = {{
      {4.0, 2.0, 1.0, 2.0},
      {2.0, 4.0, 2.0, 1.0},
      {1.0, 2.0, 4.0, 2.0},
      {2.0, 1.0, 2.0, 4.0},
  }};
  std::vector<Triplet> m, k;
  for (Index ey = 0; ey < n_elems; ++ey) {
    for (Index ex = 0; ex < n_elems; ++ex) {
      const std::array<Index, 4> dofs = {index(ex, ey), index(ex + 1, ey), index(ex + 1, ey + 1), index(ex, ey + 1)};
      for (int a = 0; a < 4; ++a) {
        if (dofs[a] < 0) continue;
        for (int b = 0; b < 4; ++b) {
          if (dofs[b] < 0) continue;
          m.emplace_back(dofs[a], dofs[b], h * h / 36.0 * m_ref[a][b]);
          k.emplace_back(dofs[a], dofs[b], k_ref[a][b] / 6.0);
        }
      }
    }
  }
  return {sparse_from_triplets(n_unknowns, n_unknowns, m), sparse_from_triplets(n_unknowns, n_unknowns, k)};
}

}  // namespace pdaexp::fem
