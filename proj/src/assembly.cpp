#include <elastodiff/assembly.hpp>
#include <elastodiff/errors.hpp>

namespace elastodiff {

AssemblyCache build_assembly_cache(const Mesh& mesh, const FESpace& space,
                                   const MatX2& shape) {
  AssemblyCache cache;
  cache.quad = Quadrature::triangle(space.order == 1 ? 2 : 4);
  const int nq = cache.quad.size();
  const int nn = space.basis.nodes_per_element;

  VecX phi;
  MatX2 dphi_ref;
  cache.elems.resize(mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    auto& e = cache.elems[t];
    e.nn = nn;
    for (int k = 0; k < nn; ++k) e.nodes[k] = space.element_nodes(t, k);
    const auto map = geometric_map(mesh, shape, t, Vec2(1.0 / 3.0, 1.0 / 3.0));
    e.detJ = map.det;
    const Mat2 JinvT = map.jacobian.inverse().transpose();

    // P1 geometry basis gradients (constant over the element)
    e.dxi.resize(3, 2);
    e.dxi.row(0) = (JinvT * Vec2(-1.0, -1.0)).transpose();
    e.dxi.row(1) = (JinvT * Vec2(1.0, 0.0)).transpose();
    e.dxi.row(2) = (JinvT * Vec2(0.0, 1.0)).transpose();

    e.w.resize(nq);
    e.phi.resize(nq);
    e.dphi.resize(nq);
    e.xq.resize(nq);
    for (int q = 0; q < nq; ++q) {
      const Vec2 local = cache.quad.points.row(q);
      space.basis.eval(local, phi, dphi_ref);
      e.w[q] = cache.quad.weights(q) * e.detJ;
      e.phi[q] = phi;
      MatX2 dphi(nn, 2);
      for (int k = 0; k < nn; ++k)
        dphi.row(k) = (JinvT * dphi_ref.row(k).transpose()).transpose();
      e.dphi[q] = dphi;
      e.xq[q] = geometric_map(mesh, shape, t, local).x;
    }
  }
  return cache;
}

Vec2 element_value(const AssemblyCache::Elem& e, const VecX& u_full, int qp) {
  Vec2 val = Vec2::Zero();
  for (int k = 0; k < e.nn; ++k)
    val += e.phi[qp](k) * Vec2(u_full(2 * e.nodes[k]), u_full(2 * e.nodes[k] + 1));
  return val;
}

Mat2 element_grad(const AssemblyCache::Elem& e, const VecX& u_full, int qp) {
  Mat2 g = Mat2::Zero();
  for (int k = 0; k < e.nn; ++k) {
    const Vec2 uk(u_full(2 * e.nodes[k]), u_full(2 * e.nodes[k] + 1));
    g += uk * e.dphi[qp].row(k);
  }
  return g;
}

SpMat build_full(const std::vector<Triplet>& trips, int n) {
  SpMat m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

SpMat build_reduced(const std::vector<Triplet>& full_trips, const FESpace& space) {
  std::vector<Triplet> red;
  red.reserve(full_trips.size());
  for (const auto& t : full_trips) {
    const int r = space.full_to_free[t.row()];
    const int c = space.full_to_free[t.col()];
    if (r >= 0 && c >= 0) red.emplace_back(r, c, t.value());
  }
  SpMat m(space.n_free, space.n_free);
  m.setFromTriplets(red.begin(), red.end());
  return m;
}

VecX assemble_internal_force(const AssemblyCache& cache, const FESpace& space,
                             const MaterialField& mat, const VecX& u_full) {
  VecX out = VecX::Zero(space.n_dofs());
  for (size_t t = 0; t < cache.elems.size(); ++t) {
    const auto& e = cache.elems[t];
    for (size_t q = 0; q < e.w.size(); ++q) {
      const Mat2 gu = element_grad(e, u_full, q);
      const auto s = eval_stress(mat.model, gu, mat.lambda(t), mat.mu(t));
      for (int k = 0; k < e.nn; ++k) {
        const Vec2 dphi = e.dphi[q].row(k);
        for (int d = 0; d < 2; ++d)
          out(2 * e.nodes[k] + d) += e.w[q] * s.f.row(d).dot(dphi);
      }
    }
  }
  return out;
}

void add_internal_force_jacobian(const AssemblyCache& cache, const FESpace& /*space*/,
                                 const MaterialField& mat, const VecX& u_full,
                                 double scale, std::vector<Triplet>& trips) {
  for (size_t t = 0; t < cache.elems.size(); ++t) {
    const auto& e = cache.elems[t];
    for (size_t q = 0; q < e.w.size(); ++q) {
      const Mat2 gu = element_grad(e, u_full, q);
      const auto s = eval_stress(mat.model, gu, mat.lambda(t), mat.mu(t));
      for (int a = 0; a < e.nn; ++a) {
        const Vec2 da = e.dphi[q].row(a);
        for (int b = 0; b < e.nn; ++b) {
          const Vec2 db = e.dphi[q].row(b);
          for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
              double v = 0.0;
              for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l)
                  v += s.df_dgradu(i, k, j, l) * da(k) * db(l);
              trips.emplace_back(2 * e.nodes[a] + i, 2 * e.nodes[b] + j,
                                 scale * e.w[q] * v);
            }
          }
        }
      }
    }
  }
}

VecX assemble_damping_force(const AssemblyCache& cache, const FESpace& space,
                            const DampingParams& damping, const VecX& u_full,
                            const VecX& u_prev_full, double dt) {
  VecX out = VecX::Zero(space.n_dofs());
  for (size_t t = 0; t < cache.elems.size(); ++t) {
    const auto& e = cache.elems[t];
    for (size_t q = 0; q < e.w.size(); ++q) {
      const Mat2 gu = element_grad(e, u_full, q);
      const Mat2 gp = element_grad(e, u_prev_full, q);
      const auto d = damping_stress(gu, gp, damping.alpha, damping.beta, dt);
      for (int k = 0; k < e.nn; ++k) {
        const Vec2 dphi = e.dphi[q].row(k);
        for (int c = 0; c < 2; ++c)
          out(2 * e.nodes[k] + c) += e.w[q] * d.P.row(c).dot(dphi);
      }
    }
  }
  return out;
}

void add_damping_jacobians(const AssemblyCache& cache, const FESpace& /*space*/,
                           const DampingParams& damping, const VecX& u_full,
                           const VecX& u_prev_full, double dt, double scale,
                           std::vector<Triplet>* trips_i,
                           std::vector<Triplet>* trips_prev) {
  for (size_t t = 0; t < cache.elems.size(); ++t) {
    const auto& e = cache.elems[t];
    for (size_t q = 0; q < e.w.size(); ++q) {
      const Mat2 gu = element_grad(e, u_full, q);
      const Mat2 gp = element_grad(e, u_prev_full, q);
      const auto d = damping_stress(gu, gp, damping.alpha, damping.beta, dt);
      for (int a = 0; a < e.nn; ++a) {
        const Vec2 da = e.dphi[q].row(a);
        for (int b = 0; b < e.nn; ++b) {
          const Vec2 db = e.dphi[q].row(b);
          for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
              double vi = 0.0, vp = 0.0;
              for (int k = 0; k < 2; ++k) {
                for (int l = 0; l < 2; ++l) {
                  vi += d.dP_dgrad_i(i, k, j, l) * da(k) * db(l);
                  vp += d.dP_dgrad_prev(i, k, j, l) * da(k) * db(l);
                }
              }
              if (trips_i)
                trips_i->emplace_back(2 * e.nodes[a] + i, 2 * e.nodes[b] + j,
                                      scale * e.w[q] * vi);
              if (trips_prev)
                trips_prev->emplace_back(2 * e.nodes[a] + i, 2 * e.nodes[b] + j,
                                         scale * e.w[q] * vp);
            }
          }
        }
      }
    }
  }
}

SpMat assemble_mass(const AssemblyCache& cache, const FESpace& space,
                    const MaterialField& mat) {
  std::vector<Triplet> trips;
  for (size_t t = 0; t < cache.elems.size(); ++t) {
    const auto& e = cache.elems[t];
    for (size_t q = 0; q < e.w.size(); ++q) {
      for (int a = 0; a < e.nn; ++a) {
        for (int b = 0; b < e.nn; ++b) {
          const double v = mat.rho(t) * e.w[q] * e.phi[q](a) * e.phi[q](b);
          trips.emplace_back(2 * e.nodes[a], 2 * e.nodes[b], v);
          trips.emplace_back(2 * e.nodes[a] + 1, 2 * e.nodes[b] + 1, v);
        }
      }
    }
  }
  return build_full(trips, space.n_dofs());
}

VecX assemble_body_force(const AssemblyCache& cache, const FESpace& space,
                         const MaterialField& mat, const Vec2& g) {
  VecX out = VecX::Zero(space.n_dofs());
  for (size_t t = 0; t < cache.elems.size(); ++t) {
    const auto& e = cache.elems[t];
    for (size_t q = 0; q < e.w.size(); ++q)
      for (int k = 0; k < e.nn; ++k)
        for (int d = 0; d < 2; ++d)
          out(2 * e.nodes[k] + d) += e.w[q] * mat.rho(t) * g(d) * e.phi[q](k);
  }
  return out;
}

namespace {

// Accumulates the perturbed-domain product of a stress-like integral
// int f : grad(p) dx. For each chain pair (T4, grad-state) the term
// -(grad_state . theta-gradient) contracts through T4.
struct VolumeShapeTerm {
  const Tensor4* tensor;
  Mat2 grad_state;
};

void volume_shape_product_qp(const AssemblyCache::Elem& e, const Mat2& f,
                             const std::vector<VolumeShapeTerm>& chain,
                             const Mat2& grad_p, double weight, VecX& out) {
  const double f_dot_gp = ddot(f, grad_p);
  // W_kl = sum_ij grad_p_ij T4_ijkl, one per chain term
  std::array<Mat2, 2> W;
  for (size_t c = 0; c < chain.size(); ++c) W[c] = chain[c].tensor->contract_left(grad_p);

  for (int a = 0; a < 3; ++a) {
    const Vec2 gxi = e.dxi.row(a);
    const Vec2 f_gxi = f * gxi;
    for (int d = 0; d < 2; ++d) {
      double v = -f_gxi.dot(grad_p.col(d).eval()) + f_dot_gp * gxi(d);
      for (size_t c = 0; c < chain.size(); ++c)
        v -= chain[c].grad_state.col(d).dot(W[c] * gxi);
      out(2 * e.nodes[a] + d) += weight * v;
    }
  }
}

}  // namespace

VecX internal_force_shape_product(const AssemblyCache& cache, const FESpace& /*space*/,
                                  const MaterialField& mat, const VecX& u_full,
                                  const VecX& p_full, int n_vertices) {
  VecX out = VecX::Zero(2 * n_vertices);
  for (size_t t = 0; t < cache.elems.size(); ++t) {
    const auto& e = cache.elems[t];
    for (size_t q = 0; q < e.w.size(); ++q) {
      const Mat2 gu = element_grad(e, u_full, q);
      const Mat2 gp = element_grad(e, p_full, q);
      const auto s = eval_stress(mat.model, gu, mat.lambda(t), mat.mu(t));
      volume_shape_product_qp(e, s.f, {{&s.df_dgradu, gu}}, gp, e.w[q], out);
    }
  }
  return out;
}

VecX damping_shape_product(const AssemblyCache& cache, const FESpace& /*space*/,
                           const DampingParams& damping, const VecX& u_full,
                           const VecX& u_prev_full, double dt, const VecX& p_full,
                           int n_vertices) {
  VecX out = VecX::Zero(2 * n_vertices);
  for (size_t t = 0; t < cache.elems.size(); ++t) {
    const auto& e = cache.elems[t];
    for (size_t q = 0; q < e.w.size(); ++q) {
      const Mat2 gu = element_grad(e, u_full, q);
      const Mat2 gprev = element_grad(e, u_prev_full, q);
      const Mat2 gp = element_grad(e, p_full, q);
      const auto d = damping_stress(gu, gprev, damping.alpha, damping.beta, dt);
      volume_shape_product_qp(
          e, d.P, {{&d.dP_dgrad_i, gu}, {&d.dP_dgrad_prev, gprev}}, gp, e.w[q], out);
    }
  }
  return out;
}

VecX body_force_shape_product(const AssemblyCache& cache, const FESpace& /*space*/,
                              const MaterialField& mat, const Vec2& g,
                              const VecX& p_full, int n_vertices) {
  VecX out = VecX::Zero(2 * n_vertices);
  for (size_t t = 0; t < cache.elems.size(); ++t) {
    const auto& e = cache.elems[t];
    for (size_t q = 0; q < e.w.size(); ++q) {
      const double s = mat.rho(t) * g.dot(element_value(e, p_full, q));
      for (int a = 0; a < 3; ++a)
        for (int d = 0; d < 2; ++d)
          out(2 * e.nodes[a] + d) += e.w[q] * s * e.dxi(a, d);
    }
  }
  return out;
}

VecX mass_shape_product(const AssemblyCache& cache, const FESpace& /*space*/,
                        const MaterialField& mat, const VecX& a_full,
                        const VecX& b_full, int n_vertices) {
  VecX out = VecX::Zero(2 * n_vertices);
  for (size_t t = 0; t < cache.elems.size(); ++t) {
    const auto& e = cache.elems[t];
    for (size_t q = 0; q < e.w.size(); ++q) {
      const double s =
          mat.rho(t) * element_value(e, a_full, q).dot(element_value(e, b_full, q));
      for (int a = 0; a < 3; ++a)
        for (int d = 0; d < 2; ++d)
          out(2 * e.nodes[a] + d) += e.w[q] * s * e.dxi(a, d);
    }
  }
  return out;
}

void internal_force_material_products(const AssemblyCache& cache, const FESpace& /*space*/,
                                      const MaterialField& mat, const VecX& u_full,
                                      const VecX& p_full, VecX& d_lambda, VecX& d_mu) {
  const int nt = static_cast<int>(cache.elems.size());
  d_lambda = VecX::Zero(nt);
  d_mu = VecX::Zero(nt);
  for (int t = 0; t < nt; ++t) {
    const auto& e = cache.elems[t];
    for (size_t q = 0; q < e.w.size(); ++q) {
      const Mat2 gu = element_grad(e, u_full, q);
      const Mat2 gp = element_grad(e, p_full, q);
      const auto s = eval_stress(mat.model, gu, mat.lambda(t), mat.mu(t));
      d_lambda(t) += e.w[q] * ddot(s.df_dlambda, gp);
      d_mu(t) += e.w[q] * ddot(s.df_dmu, gp);
    }
  }
}

void damping_coeff_products(const AssemblyCache& cache, const FESpace& /*space*/,
                            const DampingParams& damping, const VecX& u_full,
                            const VecX& u_prev_full, double dt, const VecX& p_full,
                            double& d_alpha, double& d_beta) {
  d_alpha = 0.0;
  d_beta = 0.0;
  for (size_t t = 0; t < cache.elems.size(); ++t) {
    const auto& e = cache.elems[t];
    for (size_t q = 0; q < e.w.size(); ++q) {
      const Mat2 gu = element_grad(e, u_full, q);
      const Mat2 gprev = element_grad(e, u_prev_full, q);
      const Mat2 gp = element_grad(e, p_full, q);
      const auto d = damping_stress(gu, gprev, damping.alpha, damping.beta, dt);
      d_alpha += e.w[q] * ddot(d.dP_dalpha, gp);
      d_beta += e.w[q] * ddot(d.dP_dbeta, gp);
    }
  }
}

}  // namespace elastodiff
