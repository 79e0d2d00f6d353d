#pragma once

#include <elastodiff/types.hpp>

namespace elastodiff {

/// Lagrange basis on the reference triangle. Order 1 (3 nodes at the
/// vertices) or order 2 (6 nodes: vertices then edge midpoints in the
/// order m01, m12, m20). The geometric map always uses order 1.
struct BasisSet {
  int order = 1;
  int nodes_per_element = 3;
  MatX2 ref_nodes;

  static BasisSet lagrange(int order);

  /// Values and reference-space gradients of all basis functions at a
  /// reference point. Partition of unity holds; gradients sum to zero.
  void eval(const Vec2& local, VecX& values, MatX2& gradients) const;
};

/// 1D Lagrange basis on [0,1] for boundary-edge restrictions: 2 nodes for
/// order 1; order 2 adds the midpoint as third node.
void edge_basis(int order, double s, VecX& values, VecX& derivs);

}  // namespace elastodiff
