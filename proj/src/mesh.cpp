#include <elastodiff/errors.hpp>
#include <elastodiff/mesh.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>

namespace elastodiff {

int Mesh::n_bodies() const {
  int m = -1;
  for (int b : body_id) m = std::max(m, b);
  return m + 1;
}

double Mesh::signed_area(int tri, const MatX2& shape) const {
  const Vec2 a = shape.row(triangles(tri, 0));
  const Vec2 b = shape.row(triangles(tri, 1));
  const Vec2 c = shape.row(triangles(tri, 2));
  return 0.5 * cross2(b - a, c - a);
}

std::vector<std::vector<int>> Mesh::triangle_adjacency() const {
  std::map<std::pair<int, int>, std::vector<int>> edge_tris;
  for (int t = 0; t < n_triangles(); ++t) {
    for (int k = 0; k < 3; ++k) {
      int a = triangles(t, k), b = triangles(t, (k + 1) % 3);
      edge_tris[{std::min(a, b), std::max(a, b)}].push_back(t);
    }
  }
  std::vector<std::vector<int>> adj(n_triangles());
  for (const auto& [e, ts] : edge_tris) {
    if (ts.size() == 2) {
      adj[ts[0]].push_back(ts[1]);
      adj[ts[1]].push_back(ts[0]);
    }
  }
  return adj;
}

Mesh build_mesh(const MatX2& vertices, const MatX3i& triangles,
                const std::vector<int>& body_id) {
  Mesh mesh;
  mesh.rest_vertices = vertices;
  mesh.triangles = triangles;
  const int nv = mesh.n_vertices();
  const int nt = mesh.n_triangles();

  mesh.body_id = body_id.empty() ? std::vector<int>(nt, 0) : body_id;
  if (static_cast<int>(mesh.body_id.size()) != nt)
    throw Error("body_id size does not match triangle count");

  std::set<std::array<int, 3>> seen;
  for (int t = 0; t < nt; ++t) {
    std::array<int, 3> tri{triangles(t, 0), triangles(t, 1), triangles(t, 2)};
    for (int v : tri)
      if (v < 0 || v >= nv) throw Error("triangle vertex index out of range");
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw Error("triangle with repeated vertex");
    std::array<int, 3> key = tri;
    std::sort(key.begin(), key.end());
    if (!seen.insert(key).second) throw Error("duplicate triangle");
    if (mesh.signed_area(t) <= 0.0)
      throw InvertedRestElement("triangle " + std::to_string(t) +
                                " has non-positive signed area");
  }

  // Directed half-edges; an interior edge must appear exactly once in each
  // direction, a boundary edge exactly once total.
  std::map<std::pair<int, int>, int> halfedge_tri;
  for (int t = 0; t < nt; ++t) {
    for (int k = 0; k < 3; ++k) {
      int a = triangles(t, k), b = triangles(t, (k + 1) % 3);
      if (!halfedge_tri.emplace(std::make_pair(a, b), t).second)
        throw NonManifold("directed edge (" + std::to_string(a) + "," +
                          std::to_string(b) + ") appears twice");
    }
  }
  for (const auto& [he, t] : halfedge_tri) {
    auto rev = halfedge_tri.find({he.second, he.first});
    if (rev == halfedge_tri.end()) {
      BoundaryEdge be;
      be.v0 = he.first;
      be.v1 = he.second;
      be.tri = t;
      mesh.boundary_edges.push_back(be);
    }
  }

  mesh.vertex_body.assign(nv, -1);
  for (int t = 0; t < nt; ++t) {
    for (int k = 0; k < 3; ++k) {
      int v = triangles(t, k);
      if (mesh.vertex_body[v] >= 0 && mesh.vertex_body[v] != mesh.body_id[t])
        throw Error("vertex " + std::to_string(v) + " shared between bodies");
      mesh.vertex_body[v] = mesh.body_id[t];
    }
  }
  for (int v = 0; v < nv; ++v)
    if (mesh.vertex_body[v] < 0) throw Error("unreferenced vertex " + std::to_string(v));

  mesh.is_boundary_vertex.assign(nv, 0);
  mesh.vertex_boundary_edges.assign(nv, {});
  std::vector<int> out_degree(nv, 0), in_degree(nv, 0);
  for (int e = 0; e < static_cast<int>(mesh.boundary_edges.size()); ++e) {
    const auto& be = mesh.boundary_edges[e];
    mesh.is_boundary_vertex[be.v0] = mesh.is_boundary_vertex[be.v1] = 1;
    mesh.vertex_boundary_edges[be.v0].push_back(e);
    mesh.vertex_boundary_edges[be.v1].push_back(e);
    out_degree[be.v0]++;
    in_degree[be.v1]++;
  }
  for (int v = 0; v < nv; ++v) {
    if (out_degree[v] != in_degree[v] || out_degree[v] > 1)
      throw NonManifold("boundary is not a set of closed loops at vertex " +
                        std::to_string(v));
  }
  return mesh;
}

GeometricMapEval geometric_map(const Mesh& mesh, const MatX2& shape, int elem,
                               const Vec2& local) {
  GeometricMapEval out;
  const Vec2 a = shape.row(mesh.triangles(elem, 0));
  const Vec2 b = shape.row(mesh.triangles(elem, 1));
  const Vec2 c = shape.row(mesh.triangles(elem, 2));
  out.jacobian.col(0) = b - a;
  out.jacobian.col(1) = c - a;
  out.det = out.jacobian.determinant();
  out.x = a + local.x() * (b - a) + local.y() * (c - a);
  const double scale = 2.0 * std::abs(mesh.signed_area(elem));
  if (out.det <= 1e-12 * std::max(scale, 1e-30))
    throw DegenerateElement("element " + std::to_string(elem));
  return out;
}

VecX scaled_jacobian_quality(const Mesh& mesh, const MatX2& shape) {
  const double norm = 2.0 / std::sqrt(3.0);
  VecX q(mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const Vec2 p0 = shape.row(mesh.triangles(t, 0));
    const Vec2 p1 = shape.row(mesh.triangles(t, 1));
    const Vec2 p2 = shape.row(mesh.triangles(t, 2));
    const double twice_area = cross2(p1 - p0, p2 - p0);
    const double l01 = (p1 - p0).norm(), l12 = (p2 - p1).norm(), l20 = (p0 - p2).norm();
    const double eps = 1e-300;
    double m = twice_area / std::max(l01 * l20, eps);
    m = std::min(m, twice_area / std::max(l01 * l12, eps));
    m = std::min(m, twice_area / std::max(l12 * l20, eps));
    q(t) = norm * m;
  }
  return q;
}

}  // namespace elastodiff
