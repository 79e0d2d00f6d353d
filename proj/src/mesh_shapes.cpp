#include <elastodiff/mesh_shapes.hpp>

#include <cmath>
#include <numbers>

namespace elastodiff {

Mesh box_mesh(const Vec2& origin, const Vec2& size, int nx, int ny) {
  const int nvx = nx + 1, nvy = ny + 1;
  MatX2 verts(nvx * nvy, 2);
  for (int j = 0; j < nvy; ++j)
    for (int i = 0; i < nvx; ++i)
      verts.row(j * nvx + i) = origin + Vec2(size.x() * i / nx, size.y() * j / ny);

  MatX3i tris(2 * nx * ny, 3);
  int t = 0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int v00 = j * nvx + i, v10 = v00 + 1;
      const int v01 = v00 + nvx, v11 = v01 + 1;
      tris.row(t++) << v00, v10, v11;
      tris.row(t++) << v00, v11, v01;
    }
  }
  return build_mesh(verts, tris);
}

Mesh disk_mesh(const Vec2& center, double radius, int rings) {
  const int R = rings;
  const int nv = 1 + 3 * R * (R + 1);
  MatX2 verts(nv, 2);
  verts.row(0) = center;
  std::vector<int> ring_start(R + 1, 0);
  int idx = 1;
  for (int k = 1; k <= R; ++k) {
    ring_start[k] = idx;
    const int m = 6 * k;
    const double r = radius * k / R;
    for (int j = 0; j < m; ++j) {
      const double a = 2.0 * std::numbers::pi * j / m;
      verts.row(idx++) = center + r * Vec2(std::cos(a), std::sin(a));
    }
  }

  std::vector<Eigen::Vector3i> tris;
  // innermost fan
  for (int j = 0; j < 6; ++j)
    tris.emplace_back(0, ring_start[1] + j, ring_start[1] + (j + 1) % 6);
  // ring k-1 -> ring k: per sector, merge the two vertex sequences by angle
  for (int k = 2; k <= R; ++k) {
    const int mo = 6 * k, mi = 6 * (k - 1);
    auto outer = [&](int t) { return ring_start[k] + ((t % mo) + mo) % mo; };
    auto inner = [&](int t) { return ring_start[k - 1] + ((t % mi) + mi) % mi; };
    for (int s = 0; s < 6; ++s) {
      const int ob = s * k, ib = s * (k - 1);
      int io = 0, ii = 0;
      while (io < k || ii < k - 1) {
        bool advance_outer;
        if (io == k)
          advance_outer = false;
        else if (ii == k - 1)
          advance_outer = true;
        else
          advance_outer = (io + 1) * (k - 1) <= (ii + 1) * k;
        if (advance_outer) {
          tris.emplace_back(outer(ob + io), outer(ob + io + 1), inner(ib + ii));
          ++io;
        } else {
          tris.emplace_back(inner(ib + ii + 1), inner(ib + ii), outer(ob + io));
          ++ii;
        }
      }
    }
  }
  MatX3i T(static_cast<int>(tris.size()), 3);
  for (int i = 0; i < T.rows(); ++i) T.row(i) = tris[i];
  return build_mesh(verts, T);
}

void transform_mesh(Mesh& mesh, double rotate, const Vec2& translate) {
  const Vec2 c = mesh.rest_vertices.colwise().mean();
  Mat2 rot;
  rot << std::cos(rotate), -std::sin(rotate), std::sin(rotate), std::cos(rotate);
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    const Vec2 p = mesh.rest_vertices.row(v);
    mesh.rest_vertices.row(v) = (c + rot * (p - c) + translate).transpose();
  }
}

Mesh merge_meshes(const std::vector<Mesh>& parts) {
  int nv = 0, nt = 0;
  for (const auto& m : parts) {
    nv += m.n_vertices();
    nt += m.n_triangles();
  }
  MatX2 verts(nv, 2);
  MatX3i tris(nt, 3);
  std::vector<int> body(nt);
  int vo = 0, to = 0, next_body = 0;
  for (const auto& m : parts) {
    verts.middleRows(vo, m.n_vertices()) = m.rest_vertices;
    const int nb = m.n_bodies();
    for (int t = 0; t < m.n_triangles(); ++t) {
      tris.row(to) = m.triangles.row(t).array() + vo;
      body[to] = next_body + m.body_id[t];
      ++to;
    }
    vo += m.n_vertices();
    next_body += nb;
  }
  return build_mesh(verts, tris, body);
}

}  // namespace elastodiff
