#include <elastodiff/errors.hpp>
#include <elastodiff/objectives.hpp>

#include <cmath>

namespace elastodiff {

namespace {

constexpr double kTiny = 1e-300;

bool element_selected(const Scene& scene, const ObjectiveTerm& term, int elem) {
  const int body = scene.mesh.body_id[elem];
  if (term.body >= 0) return body == term.body;
  return !scene.obstacle_bodies.count(body);
}

bool vertex_selected(const Scene& scene, const ObjectiveTerm& term, int v) {
  const int body = scene.mesh.vertex_body[v];
  if (term.body >= 0) return body == term.body;
  return !scene.obstacle_bodies.count(body);
}

const MatX2& step_target(const ObjectiveTerm& term, int step) {
  if (!term.target_steps.empty()) {
    const int i = std::min<int>(std::max(step, 0),
                                static_cast<int>(term.target_steps.size()) - 1);
    return term.target_steps[i];
  }
  return term.target;
}

Vec2 step_com_target(const ObjectiveTerm& term, int step) {
  if (term.com_targets.empty()) throw Error("com objective without targets");
  const int i =
      std::min<int>(std::max(step, 0), static_cast<int>(term.com_targets.size()) - 1);
  return term.com_targets[i];
}

double node_weight(const ObjectiveTerm& term, const VecX& phi,
                   const std::array<int, 6>& nodes, int nn) {
  if (term.node_weights.size() == 0) return 1.0;
  double w = 0.0;
  for (int k = 0; k < nn; ++k) w += phi(k) * term.node_weights(nodes[k]);
  return w;
}

// ---- stress norms -------------------------------------------------------

struct StressAccum {
  double integral = 0.0;  // int |sigma|^p  or  int phi(|sigma| - s_t)
};

double phi_penalty(double z) { return z > 0.0 ? z * z : 0.0; }
double phi_penalty_d(double z) { return z > 0.0 ? 2.0 * z : 0.0; }

// Evaluates integrand and its derivative scale factors per quadrature point.
// For StressLp: j = |s|^p, dj/dsigma = p |s|^{p-2} sigma.
// For StressBound: j = phi(|s|-s_t), dj/dsigma = phi' sigma/|s|.
void stress_integrand(const ObjectiveTerm& term, const Mat2& sigma, double& j,
                      Mat2& dj_dsigma) {
  const double ns = std::sqrt(std::max(ddot(sigma, sigma), 0.0));
  if (term.kind == ObjectiveKind::StressLp) {
    j = std::pow(ns, term.p);
    dj_dsigma = ns < kTiny ? Mat2::Zero().eval()
                           : (term.p * std::pow(ns, term.p - 2.0) * sigma).eval();
  } else {
    j = phi_penalty(ns - term.stress_target);
    const double dphi = phi_penalty_d(ns - term.stress_target);
    dj_dsigma = (ns < kTiny || dphi == 0.0) ? Mat2::Zero().eval()
                                            : (dphi / ns * sigma).eval();
  }
}

double stress_outer_chain(const ObjectiveTerm& term, double integral, double& value) {
  // Returns d(value)/d(integral).
  if (term.kind == ObjectiveKind::StressBound) {
    value = integral;
    return 1.0;
  }
  if (integral < kTiny) {
    value = 0.0;
    return 0.0;
  }
  value = std::pow(integral, 1.0 / term.p);
  return (1.0 / term.p) * std::pow(integral, 1.0 / term.p - 1.0);
}

double stress_integral(const Scene& scene, const AssemblyCache& cache,
                       const ObjectiveTerm& term, const VecX& u_full) {
  double total = 0.0;
  for (size_t t = 0; t < cache.elems.size(); ++t) {
    if (!element_selected(scene, term, static_cast<int>(t))) continue;
    const auto& e = cache.elems[t];
    for (size_t q = 0; q < e.w.size(); ++q) {
      const Mat2 gu = element_grad(e, u_full, q);
      const auto s = eval_stress(scene.material.model, gu, scene.material.lambda(t),
                                 scene.material.mu(t));
      double j;
      Mat2 dj;
      stress_integrand(term, s.f, j, dj);
      total += e.w[q] * j;
    }
  }
  return total;
}

// ---- center of mass -----------------------------------------------------

struct ComEval {
  double m0 = 0.0;
  Vec2 m1 = Vec2::Zero();
  Vec2 center() const { return m1 / m0; }
};

ComEval com_moments(const Scene& scene, const AssemblyCache& cache,
                    const ObjectiveTerm& term, const VecX& u_full) {
  ComEval out;
  for (size_t t = 0; t < cache.elems.size(); ++t) {
    if (!element_selected(scene, term, static_cast<int>(t))) continue;
    const auto& e = cache.elems[t];
    const double rho = scene.material.rho(t);
    for (size_t q = 0; q < e.w.size(); ++q) {
      const Vec2 xd = e.xq[q] + element_value(e, u_full, q);
      out.m0 += e.w[q] * rho;
      out.m1 += e.w[q] * rho * xd;
    }
  }
  if (out.m0 <= 0.0) throw Error("com objective over empty selection");
  return out;
}

// ---- boundary smoothing --------------------------------------------------

struct SmoothingVertex {
  int v;
  std::vector<int> neighbors;
};

std::vector<SmoothingVertex> smoothing_stencils(const Scene& scene,
                                                const ObjectiveTerm& term) {
  std::vector<SmoothingVertex> out;
  const auto& mesh = scene.mesh;
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (!mesh.is_boundary_vertex[v] || !vertex_selected(scene, term, v)) continue;
    SmoothingVertex sv;
    sv.v = v;
    for (int e : mesh.vertex_boundary_edges[v]) {
      const auto& be = mesh.boundary_edges[e];
      sv.neighbors.push_back(be.v0 == v ? be.v1 : be.v0);
    }
    if (sv.neighbors.size() >= 2) out.push_back(sv);
  }
  return out;
}

// ---- material smoothing --------------------------------------------------

double material_smoothing_value(const Scene& scene, const ObjectiveTerm& term) {
  const auto adj = scene.mesh.triangle_adjacency();
  const auto& lam = scene.material.lambda;
  const auto& mu = scene.material.mu;
  double total = 0.0;
  for (int t = 0; t < scene.mesh.n_triangles(); ++t) {
    if (!element_selected(scene, term, t)) continue;
    for (int t2 : adj[t]) {
      if (!element_selected(scene, term, t2)) continue;
      const double rl = 1.0 - lam(t2) / lam(t);
      const double rm = 1.0 - mu(t2) / mu(t);
      total += rl * rl + rm * rm;
    }
  }
  return total;
}

void material_smoothing_grad(const Scene& scene, const ObjectiveTerm& term,
                             double factor, GradientVector& grad) {
  const auto adj = scene.mesh.triangle_adjacency();
  const auto& lam = scene.material.lambda;
  const auto& mu = scene.material.mu;
  auto glam = grad.block(ParamBlock::Lambda);
  auto gmu = grad.block(ParamBlock::Mu);
  for (int t = 0; t < scene.mesh.n_triangles(); ++t) {
    if (!element_selected(scene, term, t)) continue;
    for (int t2 : adj[t]) {
      if (!element_selected(scene, term, t2)) continue;
      // term (t, t2): (1 - x2/x1)^2 with x1 = val(t), x2 = val(t2)
      const double rl = 1.0 - lam(t2) / lam(t);
      glam(t) += factor * 2.0 * rl * lam(t2) / (lam(t) * lam(t));
      glam(t2) += factor * 2.0 * rl * (-1.0 / lam(t));
      const double rm = 1.0 - mu(t2) / mu(t);
      gmu(t) += factor * 2.0 * rm * mu(t2) / (mu(t) * mu(t));
      gmu(t2) += factor * 2.0 * rm * (-1.0 / mu(t));
    }
  }
}

}  // namespace

ObjectiveKind objective_kind_from_name(const std::string& name) {
  if (name == "stress_lp") return ObjectiveKind::StressLp;
  if (name == "stress_bound") return ObjectiveKind::StressBound;
  if (name == "target_deformation") return ObjectiveKind::TargetDeformation;
  if (name == "com_trajectory") return ObjectiveKind::ComTrajectory;
  if (name == "com_height") return ObjectiveKind::ComHeight;
  if (name == "volume_penalty") return ObjectiveKind::VolumePenalty;
  if (name == "boundary_smoothing") return ObjectiveKind::BoundarySmoothing;
  if (name == "material_smoothing") return ObjectiveKind::MaterialSmoothing;
  throw UnknownKind("objective kind '" + name + "'");
}

const char* objective_kind_name(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::StressLp: return "stress_lp";
    case ObjectiveKind::StressBound: return "stress_bound";
    case ObjectiveKind::TargetDeformation: return "target_deformation";
    case ObjectiveKind::ComTrajectory: return "com_trajectory";
    case ObjectiveKind::ComHeight: return "com_height";
    case ObjectiveKind::VolumePenalty: return "volume_penalty";
    case ObjectiveKind::BoundarySmoothing: return "boundary_smoothing";
    case ObjectiveKind::MaterialSmoothing: return "material_smoothing";
  }
  return "?";
}

bool objective_depends_on_u(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::VolumePenalty:
    case ObjectiveKind::BoundarySmoothing:
    case ObjectiveKind::MaterialSmoothing: return false;
    default: return true;
  }
}

double term_time_weight(const ObjectiveTerm& term, const Scene& scene, int step) {
  if (!scene.transient()) return 1.0;
  if (term.time_mode == TimeWeighting::Final) return step == scene.n_steps ? 1.0 : 0.0;
  return step == 0 ? 0.0 : scene.dt;
}

double objective_term_value(const Scene& scene, const AssemblyCache& cache,
                            const ObjectiveTerm& term, const VecX& u_full, int step) {
  switch (term.kind) {
    case ObjectiveKind::StressLp:
    case ObjectiveKind::StressBound: {
      double value;
      stress_outer_chain(term, stress_integral(scene, cache, term, u_full), value);
      return value;
    }
    case ObjectiveKind::TargetDeformation: {
      const MatX2& trg = step_target(term, step);
      if (trg.rows() != scene.space.n_nodes)
        throw Error("target size does not match node count");
      double total = 0.0;
      if (!term.boundary_only) {
        for (size_t t = 0; t < cache.elems.size(); ++t) {
          if (!element_selected(scene, term, static_cast<int>(t))) continue;
          const auto& e = cache.elems[t];
          for (size_t q = 0; q < e.w.size(); ++q) {
            const Vec2 xd = e.xq[q] + element_value(e, u_full, q);
            Vec2 xt = Vec2::Zero();
            for (int k = 0; k < e.nn; ++k) xt += e.phi[q](k) * trg.row(e.nodes[k]).transpose();
            const double w = node_weight(term, e.phi[q], e.nodes, e.nn);
            total += e.w[q] * w * (xd - xt).squaredNorm();
          }
        }
        return total;
      }
      const Quadrature rule = Quadrature::segment(5);
      VecX vals, ders;
      for (size_t be = 0; be < scene.mesh.boundary_edges.size(); ++be) {
        if (!vertex_selected(scene, term, scene.mesh.boundary_edges[be].v0)) continue;
        const auto& nodes = scene.space.bedge_nodes[be];
        const int nn = scene.order == 1 ? 2 : 3;
        const Vec2 a = scene.mesh.rest_vertices.row(nodes[0]);
        const Vec2 b = scene.mesh.rest_vertices.row(nodes[1]);
        const double len = (b - a).norm();
        for (int q = 0; q < rule.size(); ++q) {
          const double s = rule.points(q, 0);
          edge_basis(scene.order, s, vals, ders);
          Vec2 xd = a + s * (b - a);
          Vec2 xt = Vec2::Zero();
          double w = term.node_weights.size() ? 0.0 : 1.0;
          for (int k = 0; k < nn; ++k) {
            xd += vals(k) * Vec2(u_full(2 * nodes[k]), u_full(2 * nodes[k] + 1));
            xt += vals(k) * trg.row(nodes[k]).transpose();
            if (term.node_weights.size()) w += vals(k) * term.node_weights(nodes[k]);
          }
          total += rule.weights(q) * len * w * (xd - xt).squaredNorm();
        }
      }
      return total;
    }
    case ObjectiveKind::ComTrajectory: {
      const auto m = com_moments(scene, cache, term, u_full);
      return (m.center() - step_com_target(term, step)).squaredNorm();
    }
    case ObjectiveKind::ComHeight: {
      const auto m = com_moments(scene, cache, term, u_full);
      return -m.center().y();
    }
    case ObjectiveKind::VolumePenalty: {
      double V = 0.0;
      for (size_t t = 0; t < cache.elems.size(); ++t) {
        if (!element_selected(scene, term, static_cast<int>(t))) continue;
        for (double w : cache.elems[t].w) V += w;
      }
      return phi_penalty(V - term.volume_target);
    }
    case ObjectiveKind::BoundarySmoothing: {
      double total = 0.0;
      for (const auto& sv : smoothing_stencils(scene, term)) {
        Vec2 num = Vec2::Zero();
        double den = 0.0;
        for (int j : sv.neighbors) {
          const Vec2 d = scene.mesh.rest_vertices.row(sv.v) - scene.mesh.rest_vertices.row(j);
          num += d;
          den += d.norm();
        }
        total += std::pow(num.norm() / den, term.p);
      }
      return total;
    }
    case ObjectiveKind::MaterialSmoothing: return material_smoothing_value(scene, term);
  }
  throw UnknownKind("objective kind");
}

VecX objective_term_du(const Scene& scene, const AssemblyCache& cache,
                       const ObjectiveTerm& term, const VecX& u_full, int step) {
  VecX out = VecX::Zero(scene.space.n_dofs());
  if (!objective_depends_on_u(term.kind)) return out;

  switch (term.kind) {
    case ObjectiveKind::StressLp:
    case ObjectiveKind::StressBound: {
      double value;
      const double chain =
          stress_outer_chain(term, stress_integral(scene, cache, term, u_full), value);
      if (chain == 0.0) return out;
      for (size_t t = 0; t < cache.elems.size(); ++t) {
        if (!element_selected(scene, term, static_cast<int>(t))) continue;
        const auto& e = cache.elems[t];
        for (size_t q = 0; q < e.w.size(); ++q) {
          const Mat2 gu = element_grad(e, u_full, q);
          const auto s = eval_stress(scene.material.model, gu, scene.material.lambda(t),
                                     scene.material.mu(t));
          double j;
          Mat2 dj;
          stress_integrand(term, s.f, j, dj);
          const Mat2 dj_dgu = s.df_dgradu.contract_left(dj);
          for (int k = 0; k < e.nn; ++k) {
            const Vec2 dphi = e.dphi[q].row(k);
            for (int d = 0; d < 2; ++d)
              out(2 * e.nodes[k] + d) += chain * e.w[q] * dj_dgu.row(d).dot(dphi);
          }
        }
      }
      return out;
    }
    case ObjectiveKind::TargetDeformation: {
      const MatX2& trg = step_target(term, step);
      if (!term.boundary_only) {
        for (size_t t = 0; t < cache.elems.size(); ++t) {
          if (!element_selected(scene, term, static_cast<int>(t))) continue;
          const auto& e = cache.elems[t];
          for (size_t q = 0; q < e.w.size(); ++q) {
            const Vec2 xd = e.xq[q] + element_value(e, u_full, q);
            Vec2 xt = Vec2::Zero();
            for (int k = 0; k < e.nn; ++k) xt += e.phi[q](k) * trg.row(e.nodes[k]).transpose();
            const double w = node_weight(term, e.phi[q], e.nodes, e.nn);
            const Vec2 r = 2.0 * w * (xd - xt);
            for (int k = 0; k < e.nn; ++k)
              for (int d = 0; d < 2; ++d)
                out(2 * e.nodes[k] + d) += e.w[q] * r(d) * e.phi[q](k);
          }
        }
        return out;
      }
      const Quadrature rule = Quadrature::segment(5);
      VecX vals, ders;
      for (size_t be = 0; be < scene.mesh.boundary_edges.size(); ++be) {
        if (!vertex_selected(scene, term, scene.mesh.boundary_edges[be].v0)) continue;
        const auto& nodes = scene.space.bedge_nodes[be];
        const int nn = scene.order == 1 ? 2 : 3;
        const Vec2 a = scene.mesh.rest_vertices.row(nodes[0]);
        const Vec2 b = scene.mesh.rest_vertices.row(nodes[1]);
        const double len = (b - a).norm();
        for (int q = 0; q < rule.size(); ++q) {
          const double s = rule.points(q, 0);
          edge_basis(scene.order, s, vals, ders);
          Vec2 xd = a + s * (b - a);
          Vec2 xt = Vec2::Zero();
          double w = term.node_weights.size() ? 0.0 : 1.0;
          for (int k = 0; k < nn; ++k) {
            xd += vals(k) * Vec2(u_full(2 * nodes[k]), u_full(2 * nodes[k] + 1));
            xt += vals(k) * trg.row(nodes[k]).transpose();
            if (term.node_weights.size()) w += vals(k) * term.node_weights(nodes[k]);
          }
          const Vec2 r = 2.0 * w * (xd - xt);
          for (int k = 0; k < nn; ++k)
            for (int d = 0; d < 2; ++d)
              out(2 * nodes[k] + d) += rule.weights(q) * len * r(d) * vals(k);
        }
      }
      return out;
    }
    case ObjectiveKind::ComTrajectory:
    case ObjectiveKind::ComHeight: {
      const auto m = com_moments(scene, cache, term, u_full);
      Vec2 lead;
      if (term.kind == ObjectiveKind::ComTrajectory)
        lead = 2.0 * (m.center() - step_com_target(term, step));
      else
        lead = Vec2(0.0, -1.0);
      for (size_t t = 0; t < cache.elems.size(); ++t) {
        if (!element_selected(scene, term, static_cast<int>(t))) continue;
        const auto& e = cache.elems[t];
        const double rho = scene.material.rho(t);
        for (size_t q = 0; q < e.w.size(); ++q)
          for (int k = 0; k < e.nn; ++k)
            for (int d = 0; d < 2; ++d)
              out(2 * e.nodes[k] + d) +=
                  e.w[q] * rho * lead(d) * e.phi[q](k) / m.m0;
      }
      return out;
    }
    default: return out;
  }
}

void objective_term_dq(const Scene& scene, const AssemblyCache& cache,
                       const ObjectiveTerm& term, const VecX& u_full, int step,
                       double factor, GradientVector& grad) {
  auto gshape = grad.block(ParamBlock::Shape);

  switch (term.kind) {
    case ObjectiveKind::StressLp:
    case ObjectiveKind::StressBound: {
      double value;
      const double chain =
          stress_outer_chain(term, stress_integral(scene, cache, term, u_full), value);
      if (chain == 0.0) return;
      auto glam = grad.block(ParamBlock::Lambda);
      auto gmu = grad.block(ParamBlock::Mu);
      for (size_t t = 0; t < cache.elems.size(); ++t) {
        if (!element_selected(scene, term, static_cast<int>(t))) continue;
        const auto& e = cache.elems[t];
        for (size_t q = 0; q < e.w.size(); ++q) {
          const Mat2 gu = element_grad(e, u_full, q);
          const auto s = eval_stress(scene.material.model, gu, scene.material.lambda(t),
                                     scene.material.mu(t));
          double j;
          Mat2 dj;
          stress_integrand(term, s.f, j, dj);
          const Mat2 dj_dgu = s.df_dgradu.contract_left(dj);
          // shape: -dj_dgu : (grad_u grad_theta) + j div(theta)
          for (int a = 0; a < 3; ++a) {
            const Vec2 gxi = e.dxi.row(a);
            for (int d = 0; d < 2; ++d) {
              const double v = -gu.col(d).dot(dj_dgu * gxi) + j * gxi(d);
              gshape(2 * e.nodes[a] + d) += factor * chain * e.w[q] * v;
            }
          }
          glam(t) += factor * chain * e.w[q] * ddot(dj, s.df_dlambda);
          gmu(t) += factor * chain * e.w[q] * ddot(dj, s.df_dmu);
        }
      }
      return;
    }
    case ObjectiveKind::TargetDeformation: {
      const MatX2& trg = step_target(term, step);
      if (!term.boundary_only) {
        for (size_t t = 0; t < cache.elems.size(); ++t) {
          if (!element_selected(scene, term, static_cast<int>(t))) continue;
          const auto& e = cache.elems[t];
          for (size_t q = 0; q < e.w.size(); ++q) {
            const Vec2 xd = e.xq[q] + element_value(e, u_full, q);
            Vec2 xt = Vec2::Zero();
            VecX phi1(3);  // P1 geometry basis values for theta
            const Vec2 local = cache.quad.points.row(q);
            phi1 << 1.0 - local.x() - local.y(), local.x(), local.y();
            for (int k = 0; k < e.nn; ++k) xt += e.phi[q](k) * trg.row(e.nodes[k]).transpose();
            const double w = node_weight(term, e.phi[q], e.nodes, e.nn);
            const Vec2 r = 2.0 * w * (xd - xt);
            const double j = w * (xd - xt).squaredNorm();
            for (int a = 0; a < 3; ++a) {
              const Vec2 gxi = e.dxi.row(a);
              for (int d = 0; d < 2; ++d)
                gshape(2 * e.nodes[a] + d) +=
                    factor * e.w[q] * (r(d) * phi1(a) + j * gxi(d));
            }
          }
        }
        return;
      }
      const Quadrature rule = Quadrature::segment(5);
      VecX vals, ders;
      for (size_t be = 0; be < scene.mesh.boundary_edges.size(); ++be) {
        if (!vertex_selected(scene, term, scene.mesh.boundary_edges[be].v0)) continue;
        const auto& nodes = scene.space.bedge_nodes[be];
        const int nn = scene.order == 1 ? 2 : 3;
        const Vec2 a = scene.mesh.rest_vertices.row(nodes[0]);
        const Vec2 b = scene.mesh.rest_vertices.row(nodes[1]);
        const double len = (b - a).norm();
        const Vec2 tangent = (b - a).normalized();
        for (int q = 0; q < rule.size(); ++q) {
          const double s = rule.points(q, 0);
          edge_basis(scene.order, s, vals, ders);
          Vec2 xd = a + s * (b - a);
          Vec2 xt = Vec2::Zero();
          double w = term.node_weights.size() ? 0.0 : 1.0;
          for (int k = 0; k < nn; ++k) {
            xd += vals(k) * Vec2(u_full(2 * nodes[k]), u_full(2 * nodes[k] + 1));
            xt += vals(k) * trg.row(nodes[k]).transpose();
            if (term.node_weights.size()) w += vals(k) * term.node_weights(nodes[k]);
          }
          const Vec2 r = 2.0 * w * (xd - xt);
          const double j = w * (xd - xt).squaredNorm();
          const double lin[2] = {1.0 - s, s};
          for (int k = 0; k < 2; ++k) {
            const double sgn = k == 0 ? -1.0 : 1.0;
            for (int d = 0; d < 2; ++d)
              gshape(2 * nodes[k] + d) +=
                  factor * rule.weights(q) *
                  (len * r(d) * lin[k] + j * sgn * tangent(d));
          }
        }
      }
      return;
    }
    case ObjectiveKind::ComTrajectory:
    case ObjectiveKind::ComHeight: {
      const auto m = com_moments(scene, cache, term, u_full);
      Vec2 lead;
      if (term.kind == ObjectiveKind::ComTrajectory)
        lead = 2.0 * (m.center() - step_com_target(term, step));
      else
        lead = Vec2(0.0, -1.0);
      // d(center)/dq theta = [m0 * int rho (theta + xd div theta) - m1 int rho div theta] / m0^2
      for (size_t t = 0; t < cache.elems.size(); ++t) {
        if (!element_selected(scene, term, static_cast<int>(t))) continue;
        const auto& e = cache.elems[t];
        const double rho = scene.material.rho(t);
        for (size_t q = 0; q < e.w.size(); ++q) {
          const Vec2 xd = e.xq[q] + element_value(e, u_full, q);
          const Vec2 local = cache.quad.points.row(q);
          const double phi1[3] = {1.0 - local.x() - local.y(), local.x(), local.y()};
          for (int a = 0; a < 3; ++a) {
            const Vec2 gxi = e.dxi.row(a);
            for (int d = 0; d < 2; ++d) {
              Vec2 dm1 = xd * gxi(d);
              dm1(d) += phi1[a];
              dm1 *= e.w[q] * rho;
              const double dm0 = e.w[q] * rho * gxi(d);
              const Vec2 dc = (m.m0 * dm1 - m.m1 * dm0) / (m.m0 * m.m0);
              gshape(2 * e.nodes[a] + d) += factor * lead.dot(dc);
            }
          }
        }
      }
      return;
    }
    case ObjectiveKind::VolumePenalty: {
      double V = 0.0;
      for (size_t t = 0; t < cache.elems.size(); ++t) {
        if (!element_selected(scene, term, static_cast<int>(t))) continue;
        for (double w : cache.elems[t].w) V += w;
      }
      const double dphi = phi_penalty_d(V - term.volume_target);
      if (dphi == 0.0) return;
      for (size_t t = 0; t < cache.elems.size(); ++t) {
        if (!element_selected(scene, term, static_cast<int>(t))) continue;
        const auto& e = cache.elems[t];
        for (size_t q = 0; q < e.w.size(); ++q)
          for (int a = 0; a < 3; ++a)
            for (int d = 0; d < 2; ++d)
              gshape(2 * e.nodes[a] + d) += factor * dphi * e.w[q] * e.dxi(a, d);
      }
      return;
    }
    case ObjectiveKind::BoundarySmoothing: {
      for (const auto& sv : smoothing_stencils(scene, term)) {
        Vec2 num = Vec2::Zero();
        double den = 0.0;
        std::vector<Vec2> units(sv.neighbors.size());
        for (size_t j = 0; j < sv.neighbors.size(); ++j) {
          const Vec2 d =
              scene.mesh.rest_vertices.row(sv.v) - scene.mesh.rest_vertices.row(sv.neighbors[j]);
          num += d;
          den += d.norm();
          units[j] = d.normalized();
        }
        const Vec2 s = num / den;
        const double sn = s.norm();
        if (sn < kTiny && term.p < 2.0 + kTiny && term.p > 2.0 - kTiny) {
          // p=2 gradient is fine at s=0 (it is 2 s^T ds = 0) -- nothing to add
        }
        const double scale =
            sn < kTiny ? (term.p == 2.0 ? 1.0 : 0.0) * term.p
                       : term.p * std::pow(sn, term.p - 2.0);
        // dJ_i contributions: s^T [da/b - s db/b]
        const int n = static_cast<int>(sv.neighbors.size());
        Vec2 db_dvi = Vec2::Zero();
        for (const Vec2& u : units) db_dvi += u;
        const Vec2 gi = scale * (static_cast<double>(n) * s - s.dot(s) * db_dvi) / den;
        gshape(2 * sv.v) += factor * gi.x();
        gshape(2 * sv.v + 1) += factor * gi.y();
        for (size_t j = 0; j < sv.neighbors.size(); ++j) {
          const Vec2 gj = scale * (-s + s.dot(s) * units[j]) / den;
          gshape(2 * sv.neighbors[j]) += factor * gj.x();
          gshape(2 * sv.neighbors[j] + 1) += factor * gj.y();
        }
      }
      return;
    }
    case ObjectiveKind::MaterialSmoothing:
      material_smoothing_grad(scene, term, factor, grad);
      return;
  }
}

double objective_value_static(const Scene& scene, const AssemblyCache& cache,
                              const ObjectiveSpec& spec, const VecX& u_full) {
  double total = 0.0;
  for (const auto& term : spec.terms)
    total += term.weight * objective_term_value(scene, cache, term, u_full, 0);
  return total;
}

double objective_value_transient(const Scene& scene, const AssemblyCache& cache,
                                 const ObjectiveSpec& spec,
                                 const std::vector<VecX>& u_steps) {
  double total = 0.0;
  for (const auto& term : spec.terms) {
    if (!objective_depends_on_u(term.kind)) {
      total += term.weight * objective_term_value(scene, cache, term, u_steps[0], 0);
      continue;
    }
    for (int i = 0; i <= scene.n_steps; ++i) {
      const double w = term_time_weight(term, scene, i);
      if (w != 0.0)
        total += term.weight * w * objective_term_value(scene, cache, term, u_steps[i], i);
    }
  }
  return total;
}

VecX objective_du_transient(const Scene& scene, const AssemblyCache& cache,
                            const ObjectiveSpec& spec, const VecX& u_full, int step) {
  VecX out = VecX::Zero(scene.space.n_dofs());
  for (const auto& term : spec.terms) {
    if (!objective_depends_on_u(term.kind)) continue;
    const double w = term.weight * term_time_weight(term, scene, step);
    if (w != 0.0) out += w * objective_term_du(scene, cache, term, u_full, step);
  }
  return out;
}

}  // namespace elastodiff
