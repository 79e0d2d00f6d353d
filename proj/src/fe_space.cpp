#include <elastodiff/errors.hpp>
#include <elastodiff/fe_space.hpp>

#include <map>

namespace elastodiff {

FESpace FESpace::build(const Mesh& mesh, int order) {
  FESpace s;
  s.order = order;
  s.basis = BasisSet::lagrange(order);
  const int nv = mesh.n_vertices();
  const int nt = mesh.n_triangles();
  const int npe = s.basis.nodes_per_element;
  s.element_nodes.resize(nt, npe);

  std::map<std::pair<int, int>, int> edge_node;
  auto midpoint = [&](int a, int b) {
    auto key = std::minmax(a, b);
    auto it = edge_node.find(key);
    if (it != edge_node.end()) return it->second;
    const int id = nv + static_cast<int>(s.midpoint_edges.size());
    s.midpoint_edges.push_back({key.first, key.second});
    edge_node.emplace(key, id);
    return id;
  };

  for (int t = 0; t < nt; ++t) {
    for (int k = 0; k < 3; ++k) s.element_nodes(t, k) = mesh.triangles(t, k);
    if (order == 2) {
      s.element_nodes(t, 3) = midpoint(mesh.triangles(t, 0), mesh.triangles(t, 1));
      s.element_nodes(t, 4) = midpoint(mesh.triangles(t, 1), mesh.triangles(t, 2));
      s.element_nodes(t, 5) = midpoint(mesh.triangles(t, 2), mesh.triangles(t, 0));
    }
  }
  s.n_nodes = nv + static_cast<int>(s.midpoint_edges.size());

  s.bedge_nodes.resize(mesh.boundary_edges.size());
  for (size_t e = 0; e < mesh.boundary_edges.size(); ++e) {
    const auto& be = mesh.boundary_edges[e];
    int mid = -1;
    if (order == 2) mid = edge_node.at(std::minmax(be.v0, be.v1));
    s.bedge_nodes[e] = {be.v0, be.v1, mid};
  }

  s.node_body.resize(s.n_nodes);
  for (int v = 0; v < nv; ++v) s.node_body[v] = mesh.vertex_body[v];
  for (size_t m = 0; m < s.midpoint_edges.size(); ++m)
    s.node_body[nv + m] = mesh.vertex_body[s.midpoint_edges[m][0]];

  s.set_dirichlet_dofs(std::vector<char>(s.n_dofs(), 0));
  return s;
}

void FESpace::set_dirichlet_dofs(const std::vector<char>& dof_mask) {
  if (static_cast<int>(dof_mask.size()) != n_dofs())
    throw Error("dirichlet mask size mismatch");
  dof_is_dirichlet = dof_mask;
  full_to_free.assign(n_dofs(), -1);
  free_to_full.clear();
  for (int d = 0; d < n_dofs(); ++d) {
    if (!dof_is_dirichlet[d]) {
      full_to_free[d] = static_cast<int>(free_to_full.size());
      free_to_full.push_back(d);
    }
  }
  n_free = static_cast<int>(free_to_full.size());
}

MatX2 FESpace::node_positions(const MatX2& shape) const {
  MatX2 pos(n_nodes, 2);
  pos.topRows(shape.rows()) = shape;
  for (size_t m = 0; m < midpoint_edges.size(); ++m) {
    pos.row(shape.rows() + m) =
        0.5 * (shape.row(midpoint_edges[m][0]) + shape.row(midpoint_edges[m][1]));
  }
  return pos;
}

VecX FESpace::restrict_free(const VecX& full) const {
  VecX out(n_free);
  for (int i = 0; i < n_free; ++i) out(i) = full(free_to_full[i]);
  return out;
}

VecX FESpace::prolong_free(const VecX& free, double fill) const {
  VecX out = VecX::Constant(n_dofs(), fill);
  for (int i = 0; i < n_free; ++i) out(free_to_full[i]) = free(i);
  return out;
}

}  // namespace elastodiff
