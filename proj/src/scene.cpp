#include <elastodiff/errors.hpp>
#include <elastodiff/scene.hpp>

#include <algorithm>
#include <cmath>

namespace elastodiff {

double LinearTable::operator()(double t) const {
  if (samples.empty()) return 0.0;
  if (t <= samples.front().first) return samples.front().second;
  if (t >= samples.back().first) return samples.back().second;
  for (size_t i = 1; i < samples.size(); ++i) {
    if (t <= samples[i].first) {
      const auto& [t0, v0] = samples[i - 1];
      const auto& [t1, v1] = samples[i];
      const double s = (t - t0) / (t1 - t0);
      return v0 + s * (v1 - v0);
    }
  }
  return samples.back().second;
}

void Scene::finalize() {
  space = FESpace::build(mesh, order);

  const int nt = mesh.n_triangles();
  if (material.lambda.size() != nt || material.mu.size() != nt ||
      material.rho.size() != nt)
    throw Error("material field size mismatch");
  for (int t = 0; t < nt; ++t) {
    if (material.mu(t) <= 0.0) throw Error("mu must be positive");
    if (material.lambda(t) < 0.0) throw Error("lambda must be non-negative");
    if (material.rho(t) <= 0.0) throw Error("rho must be positive");
  }
  if (damping.alpha < 0.0 || damping.beta < 0.0)
    throw Error("damping coefficients must be non-negative");
  if (contact_enabled && (barrier.dhat <= 0.0 || barrier.kappa <= 0.0))
    throw Error("contact requires dhat > 0 and kappa > 0");
  if (friction.eta <= 0.0) throw Error("friction eta must be positive");
  if (transient() && dt <= 0.0) throw Error("dt must be positive");
  if (bdf_order < 1 || bdf_order > 3) throw Error("bdf_order must be 1, 2 or 3");

  // Dirichlet mask: obstacle bodies pin everything; tagged BCs pin components.
  std::vector<char> mask(space.n_dofs(), 0);
  for (int n = 0; n < space.n_nodes; ++n) {
    if (obstacle_bodies.count(space.node_body[n])) {
      mask[2 * n] = mask[2 * n + 1] = 1;
    }
  }
  std::set<int> known_tags;
  for (const auto& be : mesh.boundary_edges) known_tags.insert(be.region);
  for (const auto& bc : dirichlet) {
    if (!known_tags.count(bc.tag))
      throw DanglingReference("dirichlet tag " + std::to_string(bc.tag) +
                              " not present on any boundary edge");
    for (size_t e = 0; e < mesh.boundary_edges.size(); ++e) {
      if (mesh.boundary_edges[e].region != bc.tag) continue;
      for (int n : space.bedge_nodes[e]) {
        if (n < 0) continue;
        for (int c = 0; c < 2; ++c)
          if (bc.comp[c]) mask[2 * n + c] = 1;
      }
    }
  }
  for (const auto& bc : neumann) {
    if (!known_tags.count(bc.tag))
      throw DanglingReference("neumann tag " + std::to_string(bc.tag) +
                              " not present on any boundary edge");
  }
  space.set_dirichlet_dofs(mask);

  if (u0.size() == 0) u0 = VecX::Zero(space.n_dofs());
  if (v0.size() == 0) v0 = VecX::Zero(space.n_dofs());
  if (u0.size() != space.n_dofs() || v0.size() != space.n_dofs())
    throw Error("initial condition size mismatch");
  apply_dirichlet(u0, 0.0);
}

AssemblyCache Scene::build_cache() const {
  return build_assembly_cache(mesh, space, mesh.rest_vertices);
}

void Scene::apply_dirichlet(VecX& u_full, double t) const {
  for (int n = 0; n < space.n_nodes; ++n) {
    if (obstacle_bodies.count(space.node_body[n])) {
      u_full(2 * n) = 0.0;
      u_full(2 * n + 1) = 0.0;
    }
  }
  for (const auto& bc : dirichlet) {
    for (size_t e = 0; e < mesh.boundary_edges.size(); ++e) {
      if (mesh.boundary_edges[e].region != bc.tag) continue;
      for (int n : space.bedge_nodes[e]) {
        if (n < 0) continue;
        for (int c = 0; c < 2; ++c)
          if (bc.comp[c]) u_full(2 * n + c) = bc.value[c](t);
      }
    }
  }
}

VecX Scene::neumann_force(double t) const {
  VecX out = VecX::Zero(space.n_dofs());
  const Quadrature rule = Quadrature::segment(5);
  VecX vals, ders;
  for (const auto& bc : neumann) {
    const double s = bc.scale(t);
    for (size_t e = 0; e < mesh.boundary_edges.size(); ++e) {
      if (mesh.boundary_edges[e].region != bc.tag) continue;
      const auto& nodes = space.bedge_nodes[e];
      const Vec2 a = mesh.rest_vertices.row(nodes[0]);
      const Vec2 b = mesh.rest_vertices.row(nodes[1]);
      const double len = (b - a).norm();
      const int nn = order == 1 ? 2 : 3;
      for (int q = 0; q < rule.size(); ++q) {
        edge_basis(order, rule.points(q, 0), vals, ders);
        for (int k = 0; k < nn; ++k)
          for (int d = 0; d < 2; ++d)
            out(2 * nodes[k] + d) += rule.weights(q) * len * s * bc.traction(d) * vals(k);
      }
    }
  }
  return out;
}

VecX Scene::neumann_shape_product(double t, const VecX& p_full) const {
  VecX out = VecX::Zero(2 * mesh.n_vertices());
  const Quadrature rule = Quadrature::segment(5);
  VecX vals, ders;
  for (const auto& bc : neumann) {
    const double s = bc.scale(t);
    for (size_t e = 0; e < mesh.boundary_edges.size(); ++e) {
      if (mesh.boundary_edges[e].region != bc.tag) continue;
      const auto& nodes = space.bedge_nodes[e];
      const Vec2 a = mesh.rest_vertices.row(nodes[0]);
      const Vec2 b = mesh.rest_vertices.row(nodes[1]);
      const Vec2 tangent = (b - a).normalized();
      const int nn = order == 1 ? 2 : 3;
      double tp_int = 0.0;  // integral of traction . p over the unit parameter
      for (int q = 0; q < rule.size(); ++q) {
        edge_basis(order, rule.points(q, 0), vals, ders);
        Vec2 p = Vec2::Zero();
        for (int k = 0; k < nn; ++k)
          p += vals(k) * Vec2(p_full(2 * nodes[k]), p_full(2 * nodes[k] + 1));
        tp_int += rule.weights(q) * s * bc.traction.dot(p);
      }
      for (int d = 0; d < 2; ++d) {
        out(2 * nodes[0] + d) -= tangent(d) * tp_int;
        out(2 * nodes[1] + d) += tangent(d) * tp_int;
      }
    }
  }
  return out;
}

std::vector<int> Scene::optimizable_elements() const {
  std::vector<int> out;
  for (int t = 0; t < mesh.n_triangles(); ++t)
    if (!obstacle_bodies.count(mesh.body_id[t])) out.push_back(t);
  return out;
}

bool Scene::node_is_obstacle(int node) const {
  return obstacle_bodies.count(space.node_body[node]) > 0;
}

// ---------------- parameter packing ----------------

const char* param_block_name(ParamBlock b) {
  switch (b) {
    case ParamBlock::Shape: return "shape";
    case ParamBlock::Lambda: return "lambda";
    case ParamBlock::Mu: return "mu";
    case ParamBlock::Gamma: return "gamma";
    case ParamBlock::Alpha: return "alpha";
    case ParamBlock::Beta: return "beta";
    case ParamBlock::U0: return "u0";
    case ParamBlock::V0: return "v0";
  }
  return "?";
}

std::optional<ParamBlock> param_block_from_name(const std::string& name) {
  for (ParamBlock b : {ParamBlock::Shape, ParamBlock::Lambda, ParamBlock::Mu,
                       ParamBlock::Gamma, ParamBlock::Alpha, ParamBlock::Beta,
                       ParamBlock::U0, ParamBlock::V0})
    if (name == param_block_name(b)) return b;
  return std::nullopt;
}

ParamLayout ParamLayout::from(const Scene& scene) {
  ParamLayout l;
  l.n_vertices = scene.mesh.n_vertices();
  l.n_elements = scene.mesh.n_triangles();
  l.n_gamma = scene.friction.n_pairs();
  if (scene.ic_mode == ICParameterization::PerNode) {
    l.n_ic = 2 * scene.space.n_nodes;
  } else {
    std::set<int> bodies;
    for (int b = 0; b < scene.mesh.n_bodies(); ++b)
      if (!scene.obstacle_bodies.count(b)) bodies.insert(b);
    l.ic_bodies.assign(bodies.begin(), bodies.end());
    l.n_ic = 2 * static_cast<int>(l.ic_bodies.size());
  }
  return l;
}

int ParamLayout::block_size(ParamBlock b) const {
  switch (b) {
    case ParamBlock::Shape: return 2 * n_vertices;
    case ParamBlock::Lambda: return n_elements;
    case ParamBlock::Mu: return n_elements;
    case ParamBlock::Gamma: return n_gamma;
    case ParamBlock::Alpha: return 1;
    case ParamBlock::Beta: return 1;
    case ParamBlock::U0: return n_ic;
    case ParamBlock::V0: return n_ic;
  }
  return 0;
}

int ParamLayout::offset(ParamBlock b) const {
  int off = 0;
  for (ParamBlock x : {ParamBlock::Shape, ParamBlock::Lambda, ParamBlock::Mu,
                       ParamBlock::Gamma, ParamBlock::Alpha, ParamBlock::Beta,
                       ParamBlock::U0, ParamBlock::V0}) {
    if (x == b) return off;
    off += block_size(x);
  }
  return off;
}

int ParamLayout::size() const {
  return offset(ParamBlock::V0) + block_size(ParamBlock::V0);
}

Eigen::VectorBlock<VecX> ParamLayout::block(VecX& x, ParamBlock b) const {
  return x.segment(offset(b), block_size(b));
}
Eigen::VectorBlock<const VecX> ParamLayout::block(const VecX& x, ParamBlock b) const {
  return x.segment(offset(b), block_size(b));
}

VecX pack_parameters(const Scene& scene, const ParamLayout& layout) {
  VecX x = VecX::Zero(layout.size());
  auto shape = layout.block(x, ParamBlock::Shape);
  for (int v = 0; v < layout.n_vertices; ++v) {
    shape(2 * v) = scene.mesh.rest_vertices(v, 0);
    shape(2 * v + 1) = scene.mesh.rest_vertices(v, 1);
  }
  layout.block(x, ParamBlock::Lambda) = scene.material.lambda;
  layout.block(x, ParamBlock::Mu) = scene.material.mu;
  auto gamma = layout.block(x, ParamBlock::Gamma);
  for (int i = 0; i < layout.n_gamma; ++i) gamma(i) = std::get<2>(scene.friction.pairs[i]);
  layout.block(x, ParamBlock::Alpha)(0) = scene.damping.alpha;
  layout.block(x, ParamBlock::Beta)(0) = scene.damping.beta;

  auto u0b = layout.block(x, ParamBlock::U0);
  auto v0b = layout.block(x, ParamBlock::V0);
  if (scene.ic_mode == ICParameterization::PerNode) {
    u0b = scene.u0;
    v0b = scene.v0;
  } else {
    for (size_t i = 0; i < layout.ic_bodies.size(); ++i) {
      // representative node: first node of the body (fields are uniform per body)
      for (int n = 0; n < scene.space.n_nodes; ++n) {
        if (scene.space.node_body[n] == layout.ic_bodies[i]) {
          u0b(2 * i) = scene.u0(2 * n);
          u0b(2 * i + 1) = scene.u0(2 * n + 1);
          v0b(2 * i) = scene.v0(2 * n);
          v0b(2 * i + 1) = scene.v0(2 * n + 1);
          break;
        }
      }
    }
  }
  return x;
}

VecX expand_ic_parameters(const Scene& scene, const ParamLayout& layout,
                          const Eigen::Ref<const VecX>& block) {
  if (scene.ic_mode == ICParameterization::PerNode) return block;
  VecX full = VecX::Zero(scene.space.n_dofs());
  for (size_t i = 0; i < layout.ic_bodies.size(); ++i) {
    for (int n = 0; n < scene.space.n_nodes; ++n) {
      if (scene.space.node_body[n] == layout.ic_bodies[i]) {
        full(2 * n) = block(2 * i);
        full(2 * n + 1) = block(2 * i + 1);
      }
    }
  }
  return full;
}

void accumulate_ic_gradient(const Scene& scene, const ParamLayout& layout,
                            const VecX& full_grad, Eigen::VectorBlock<VecX> block) {
  if (scene.ic_mode == ICParameterization::PerNode) {
    block += full_grad;
    return;
  }
  for (size_t i = 0; i < layout.ic_bodies.size(); ++i) {
    for (int n = 0; n < scene.space.n_nodes; ++n) {
      if (scene.space.node_body[n] == layout.ic_bodies[i]) {
        block(2 * i) += full_grad(2 * n);
        block(2 * i + 1) += full_grad(2 * n + 1);
      }
    }
  }
}

void unpack_parameters(Scene& scene, const ParamLayout& layout, const VecX& x) {
  auto shape = layout.block(x, ParamBlock::Shape);
  for (int v = 0; v < layout.n_vertices; ++v) {
    scene.mesh.rest_vertices(v, 0) = shape(2 * v);
    scene.mesh.rest_vertices(v, 1) = shape(2 * v + 1);
  }
  scene.material.lambda = layout.block(x, ParamBlock::Lambda);
  scene.material.mu = layout.block(x, ParamBlock::Mu);
  auto gamma = layout.block(x, ParamBlock::Gamma);
  for (int i = 0; i < layout.n_gamma; ++i) std::get<2>(scene.friction.pairs[i]) = gamma(i);
  scene.damping.alpha = layout.block(x, ParamBlock::Alpha)(0);
  scene.damping.beta = layout.block(x, ParamBlock::Beta)(0);
  scene.u0 = expand_ic_parameters(scene, layout, layout.block(x, ParamBlock::U0));
  scene.v0 = expand_ic_parameters(scene, layout, layout.block(x, ParamBlock::V0));
  scene.apply_dirichlet(scene.u0, 0.0);
}

}  // namespace elastodiff
