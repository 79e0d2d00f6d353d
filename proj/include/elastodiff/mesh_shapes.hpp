#pragma once

#include <elastodiff/mesh.hpp>

namespace elastodiff {

/// Structured box mesh: nx-by-ny cells, each split into two triangles.
Mesh box_mesh(const Vec2& origin, const Vec2& size, int nx, int ny);

/// Hexagonal disk triangulation: ring k holds 6k vertices, 6R^2 triangles.
Mesh disk_mesh(const Vec2& center, double radius, int rings);

/// Rigid transform of all rest vertices (rotation in radians about the
/// vertex barycenter, then translation).
void transform_mesh(Mesh& mesh, double rotate, const Vec2& translate);

/// Concatenates bodies into a single mesh; body ids are renumbered
/// consecutively in argument order.
Mesh merge_meshes(const std::vector<Mesh>& parts);

}  // namespace elastodiff
