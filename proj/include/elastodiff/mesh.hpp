#pragma once

#include <elastodiff/types.hpp>

#include <vector>

namespace elastodiff {

/// Oriented boundary edge: (v0, v1) runs counterclockwise around the body,
/// so the outward normal is (t.y, -t.x).
struct BoundaryEdge {
  int v0 = -1;
  int v1 = -1;
  int tri = -1;    // unique incident triangle
  int region = 0;  // boundary region tag
};

/// 2D triangle mesh of one or more disjoint bodies in the rest
/// configuration. Immutable topology after build; rest vertex positions
/// are the shape parameters and may be replaced wholesale.
struct Mesh {
  MatX2 rest_vertices;
  MatX3i triangles;
  std::vector<int> body_id;  // per triangle

  std::vector<BoundaryEdge> boundary_edges;
  std::vector<int> vertex_body;                        // per vertex
  std::vector<char> is_boundary_vertex;                // per vertex
  std::vector<std::vector<int>> vertex_boundary_edges; // per vertex, incident boundary edge ids

  int n_vertices() const { return static_cast<int>(rest_vertices.rows()); }
  int n_triangles() const { return static_cast<int>(triangles.rows()); }
  int n_bodies() const;

  double signed_area(int tri, const MatX2& shape) const;
  double signed_area(int tri) const { return signed_area(tri, rest_vertices); }

  /// Triangles sharing an edge, per triangle (used by material smoothing).
  std::vector<std::vector<int>> triangle_adjacency() const;
};

/// Validates orientation and manifoldness, extracts tagged boundary loops.
/// Throws InvertedRestElement / NonManifold.
Mesh build_mesh(const MatX2& vertices, const MatX3i& triangles,
                const std::vector<int>& body_id = {});

/// Evaluate the piecewise-linear geometric map of one element.
/// Returns the physical point, the (constant) reference-to-physical
/// jacobian, and its determinant. Throws DegenerateElement if the
/// determinant drops below 1e-12 of the rest area scale.
struct GeometricMapEval {
  Vec2 x;
  Mat2 jacobian;
  double det;
};
GeometricMapEval geometric_map(const Mesh& mesh, const MatX2& shape, int elem,
                               const Vec2& local);

/// Scaled-Jacobian element quality in [-1, 1]: 1 for equilateral, 0 for
/// degenerate, negative for inverted elements.
VecX scaled_jacobian_quality(const Mesh& mesh, const MatX2& shape);
inline VecX scaled_jacobian_quality(const Mesh& mesh) {
  return scaled_jacobian_quality(mesh, mesh.rest_vertices);
}

}  // namespace elastodiff
