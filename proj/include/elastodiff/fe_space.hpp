#pragma once

#include <elastodiff/basis.hpp>
#include <elastodiff/mesh.hpp>

#include <array>
#include <vector>

namespace elastodiff {

/// Node numbering and Dirichlet reduction for a P1 or P2 solution space on
/// a triangle mesh. Vertex nodes come first (node id == vertex id); P2
/// appends one midpoint node per mesh edge. DOF layout is interleaved:
/// dof = 2*node + component.
struct FESpace {
  int order = 1;
  int n_nodes = 0;
  BasisSet basis;
  Eigen::MatrixXi element_nodes;                   // n_tri x (3 or 6)
  std::vector<std::array<int, 2>> midpoint_edges;  // per midpoint node: (va, vb)
  std::vector<std::array<int, 3>> bedge_nodes;     // per boundary edge: v0, v1, mid (-1 for P1)
  std::vector<int> node_body;

  // Dirichlet reduction (filled by set_dirichlet_dofs)
  std::vector<char> dof_is_dirichlet;  // size 2*n_nodes
  std::vector<int> full_to_free;
  std::vector<int> free_to_full;
  int n_free = 0;

  int n_dofs() const { return 2 * n_nodes; }
  int dof(int node, int comp) const { return 2 * node + comp; }

  static FESpace build(const Mesh& mesh, int order);

  void set_dirichlet_dofs(const std::vector<char>& dof_mask);

  /// Node positions for a given shape (midpoints are edge averages).
  MatX2 node_positions(const MatX2& shape) const;

  VecX restrict_free(const VecX& full) const;
  /// Scatters a free vector into a full one; Dirichlet entries get `fill`.
  VecX prolong_free(const VecX& free, double fill = 0.0) const;
};

}  // namespace elastodiff
