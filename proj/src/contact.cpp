#include <elastodiff/contact.hpp>
#include <elastodiff/dual2.hpp>
#include <elastodiff/errors.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace elastodiff {

void barrier(double d, double dhat, double& b, double& db, double& ddb) {
  if (d <= 0.0) throw NonPositiveDistance("distance " + std::to_string(d));
  if (d >= dhat) {
    b = db = ddb = 0.0;
    return;
  }
  const double dd = d - dhat;
  const double lg = std::log(d / dhat);
  b = -dd * dd * lg;
  db = -2.0 * dd * lg - dd * dd / d;
  ddb = -2.0 * lg - 4.0 * dd / d + dd * dd / (d * d);
}

namespace {

// Classified closest-point regime for a vertex-edge pair.
enum class Regime { Interior, End0, End1 };

Regime classify(const Vec2& x, const Vec2& a, const Vec2& b) {
  const Vec2 e = b - a;
  const double len2 = e.squaredNorm();
  if (len2 <= 0.0) throw DegenerateEdge("zero-length edge in contact pair");
  const double s = (x - a).dot(e) / len2;
  if (s <= 0.0) return Regime::End0;
  if (s >= 1.0) return Regime::End1;
  return Regime::Interior;
}

template <int N>
Dual2<N> dual_pp_distance(const std::array<Dual2<N>, N>& c, int i0, int i1) {
  const Dual2<N> rx = c[i0] - c[i1];
  const Dual2<N> ry = c[i0 + 1] - c[i1 + 1];
  return sqrt(rx * rx + ry * ry);
}

// Distance from point (c0,c1) to the line through (c2,c3)-(c4,c5).
Dual2<6> dual_pe_distance(const std::array<Dual2<6>, 6>& c) {
  const Dual2<6> ex = c[4] - c[2], ey = c[5] - c[3];
  const Dual2<6> wx = c[0] - c[2], wy = c[1] - c[3];
  Dual2<6> cr = ex * wy - ey * wx;
  if (cr.val < 0.0) cr = -cr;
  return cr / sqrt(ex * ex + ey * ey);
}

}  // namespace

DistanceEval pair_distance(const ContactPair& pair, const MatX2& positions,
                           bool need_hess) {
  DistanceEval out;
  if (pair.kind == PairKind::PointPoint) {
    std::array<Dual2<4>, 4> c;
    const Vec2 x0 = positions.row(pair.v), x1 = positions.row(pair.e0);
    const double vals[4] = {x0.x(), x0.y(), x1.x(), x1.y()};
    for (int i = 0; i < 4; ++i) c[i] = Dual2<4>::variable(vals[i], i);
    const auto d = dual_pp_distance<4>(c, 0, 2);
    out.d = d.val;
    out.grad = d.grad;
    if (need_hess) out.hess = d.hess;
    out.regime = PairKind::PointPoint;
    return out;
  }

  const Vec2 x = positions.row(pair.v);
  const Vec2 a = positions.row(pair.e0);
  const Vec2 b = positions.row(pair.e1);
  const Regime regime = classify(x, a, b);

  std::array<Dual2<6>, 6> c;
  const double vals[6] = {x.x(), x.y(), a.x(), a.y(), b.x(), b.y()};
  for (int i = 0; i < 6; ++i) c[i] = Dual2<6>::variable(vals[i], i);

  Dual2<6> d;
  if (regime == Regime::Interior) {
    d = dual_pe_distance(c);
    out.regime = PairKind::PointEdge;
  } else {
    d = dual_pp_distance<6>(c, 0, regime == Regime::End0 ? 2 : 4);
    out.regime = PairKind::PointPoint;
  }
  out.d = d.val;
  out.grad = d.grad;
  if (need_hess) out.hess = d.hess;
  return out;
}

MatX2 deformed_vertex_positions(const Mesh& mesh, const MatX2& shape,
                                const VecX& u_full) {
  MatX2 X = shape;
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    X(v, 0) += u_full(2 * v);
    X(v, 1) += u_full(2 * v + 1);
  }
  return X;
}

double vertex_rest_measure(const Mesh& mesh, const MatX2& shape, int v) {
  double m = 0.0;
  for (int e : mesh.vertex_boundary_edges[v]) {
    const auto& be = mesh.boundary_edges[e];
    m += 0.5 * (shape.row(be.v1) - shape.row(be.v0)).norm();
  }
  return m;
}

double pair_rest_measure(const Mesh& mesh, const MatX2& shape, const ContactPair& pair) {
  double m = vertex_rest_measure(mesh, shape, pair.v);
  if (pair.kind == PairKind::PointEdge)
    m += (shape.row(pair.e1) - shape.row(pair.e0)).norm();
  else
    m += vertex_rest_measure(mesh, shape, pair.e0);
  return m;
}

void add_pair_area_gradient(const Mesh& mesh, const MatX2& shape,
                            const ContactPair& pair, double coeff, VecX& out) {
  auto add_edge_length_grad = [&](int va, int vb, double c) {
    const Vec2 t = (shape.row(vb) - shape.row(va)).normalized();
    out(2 * vb) += c * t.x();
    out(2 * vb + 1) += c * t.y();
    out(2 * va) -= c * t.x();
    out(2 * va + 1) -= c * t.y();
  };
  auto add_vertex_measure_grad = [&](int v, double c) {
    for (int e : mesh.vertex_boundary_edges[v]) {
      const auto& be = mesh.boundary_edges[e];
      add_edge_length_grad(be.v0, be.v1, 0.5 * c);
    }
  };
  add_vertex_measure_grad(pair.v, coeff);
  if (pair.kind == PairKind::PointEdge)
    add_edge_length_grad(pair.e0, pair.e1, coeff);
  else
    add_vertex_measure_grad(pair.e0, coeff);
}

namespace {

struct HashGrid {
  double cell = 1.0;
  std::map<std::pair<long, long>, std::vector<int>> cells;

  std::pair<long, long> key(const Vec2& p) const {
    return {static_cast<long>(std::floor(p.x() / cell)),
            static_cast<long>(std::floor(p.y() / cell))};
  }
  void insert(const Vec2& p, int id) { cells[key(p)].push_back(id); }
  void query(const Vec2& lo, const Vec2& hi, std::vector<int>& out) const {
    const auto klo = key(lo), khi = key(hi);
    for (long i = klo.first; i <= khi.first; ++i)
      for (long j = klo.second; j <= khi.second; ++j) {
        auto it = cells.find({i, j});
        if (it != cells.end()) out.insert(out.end(), it->second.begin(), it->second.end());
      }
  }
};

std::vector<std::pair<int, int>> candidate_pairs(const Mesh& mesh, const MatX2& X,
                                                 double margin) {
  double max_len = 0.0;
  for (const auto& be : mesh.boundary_edges)
    max_len = std::max(max_len, (X.row(be.v1) - X.row(be.v0)).norm());

  HashGrid grid;
  grid.cell = std::max(margin + max_len, 1e-12);
  for (int v = 0; v < mesh.n_vertices(); ++v)
    if (mesh.is_boundary_vertex[v]) grid.insert(X.row(v), v);

  std::set<std::pair<int, int>> found;
  std::vector<int> verts;
  for (int e = 0; e < static_cast<int>(mesh.boundary_edges.size()); ++e) {
    const auto& be = mesh.boundary_edges[e];
    const Vec2 p0 = X.row(be.v0), p1 = X.row(be.v1);
    const Vec2 lo = p0.cwiseMin(p1).array() - margin;
    const Vec2 hi = p0.cwiseMax(p1).array() + margin;
    verts.clear();
    grid.query(lo, hi, verts);
    for (int v : verts) {
      if (v == be.v0 || v == be.v1) continue;
      found.insert({v, e});
    }
  }
  return {found.begin(), found.end()};
}

ContactPair make_vertex_edge_pair(const Mesh& mesh, const MatX2& shape, int v,
                                  int bedge) {
  const auto& be = mesh.boundary_edges[bedge];
  ContactPair p;
  p.kind = PairKind::PointEdge;
  p.v = v;
  p.e0 = be.v0;
  p.e1 = be.v1;
  const int bv = mesh.vertex_body[v];
  const int bE = mesh.vertex_body[be.v0];
  p.body_pair = {std::min(bv, bE), std::max(bv, bE)};
  p.area = pair_rest_measure(mesh, shape, p);
  return p;
}

}  // namespace

std::vector<ContactPair> build_active_set(const Mesh& mesh, const MatX2& shape,
                                          const VecX& u_full,
                                          const BarrierParams& params) {
  const MatX2 X = deformed_vertex_positions(mesh, shape, u_full);
  std::vector<ContactPair> out;
  for (const auto& [v, e] : candidate_pairs(mesh, X, params.dhat)) {
    ContactPair p = make_vertex_edge_pair(mesh, shape, v, e);
    const auto de = pair_distance(p, X, false);
    if (de.d < params.dhat) out.push_back(p);
  }
  return out;
}

void add_contact_forces(const Mesh& mesh, const MatX2& shape, const VecX& u_full,
                        const BarrierParams& params,
                        const std::vector<ContactPair>& pairs, VecX& force,
                        std::vector<Triplet>* jac, double jac_scale,
                        bool psd_project) {
  const MatX2 X = deformed_vertex_positions(mesh, shape, u_full);
  for (const auto& pair : pairs) {
    const auto de = pair_distance(pair, X, jac != nullptr);
    double b, db, ddb;
    barrier(de.d, params.dhat, b, db, ddb);
    if (de.d >= params.dhat) continue;
    const int ns = pair.stencil_size();
    const auto st = pair.stencil();
    const double coeff = -params.kappa * pair.area;
    for (int a = 0; a < ns; ++a)
      for (int d = 0; d < 2; ++d)
        force(2 * st[a] + d) += coeff * db * de.grad(2 * a + d);
    if (jac) {
      // potential Hessian of this pair (the force jacobian is its negative)
      MatX H = params.kappa * pair.area *
               (ddb * de.grad * de.grad.transpose() + db * de.hess);
      if (psd_project) {
        Eigen::SelfAdjointEigenSolver<MatX> eig(0.5 * (H + H.transpose()));
        const VecX ev = eig.eigenvalues().cwiseMax(0.0);
        H = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
      }
      for (int a = 0; a < 2 * ns; ++a)
        for (int bb = 0; bb < 2 * ns; ++bb)
          jac->emplace_back(2 * st[a / 2] + a % 2, 2 * st[bb / 2] + bb % 2,
                            -jac_scale * H(a, bb));
    }
  }
}

VecX contact_shape_product(const Mesh& mesh, const MatX2& shape, const VecX& u_full,
                           const BarrierParams& params,
                           const std::vector<ContactPair>& pairs, const VecX& p_full) {
  VecX out = VecX::Zero(2 * mesh.n_vertices());
  const MatX2 X = deformed_vertex_positions(mesh, shape, u_full);
  for (const auto& pair : pairs) {
    const auto de = pair_distance(pair, X, true);
    double b, db, ddb;
    barrier(de.d, params.dhat, b, db, ddb);
    if (de.d >= params.dhat) continue;
    const int ns = pair.stencil_size();
    const auto st = pair.stencil();
    VecX p_st(2 * ns);
    for (int a = 0; a < ns; ++a)
      for (int d = 0; d < 2; ++d) p_st(2 * a + d) = p_full(2 * st[a] + d);

    const double coeff = -params.kappa * pair.area;
    // positional part: same kernel as d(force)/du, x = q + u
    const VecX prod =
        coeff * (ddb * de.grad * (de.grad.dot(p_st)) + db * (de.hess * p_st));
    for (int a = 0; a < ns; ++a)
      for (int d = 0; d < 2; ++d) out(2 * st[a] + d) += prod(2 * a + d);
    // area part: force is linear in A_k
    const double f_dot_p = -params.kappa * db * de.grad.dot(p_st);
    add_pair_area_gradient(mesh, shape, pair, f_dot_p, out);
  }
  return out;
}

double ccd_max_step(const Mesh& mesh, const MatX2& shape, const VecX& u_full,
                    const VecX& du_full) {
  MatX2 X = deformed_vertex_positions(mesh, shape, u_full);
  MatX2 DX(mesh.n_vertices(), 2);
  for (int v = 0; v < mesh.n_vertices(); ++v)
    DX.row(v) = Vec2(du_full(2 * v), du_full(2 * v + 1)).transpose();
  const double max_motion = DX.rowwise().norm().maxCoeff();
  if (max_motion == 0.0) return 1.0;

  double t_global = 1.0;
  bool limited = false;
  // broad phase on start positions; the margin covers the whole sweep
  const double margin = 2.0 * max_motion + 1e-12;
  for (const auto& [v, e] : candidate_pairs(mesh, X, margin)) {
    ContactPair pair = make_vertex_edge_pair(mesh, shape, v, e);
    const auto st = pair.stencil();
    const double speed = DX.row(st[0]).norm() +
                         std::max(DX.row(st[1]).norm(), DX.row(st[2]).norm());
    if (speed == 0.0) continue;
    const double d0 = pair_distance(pair, X, false).d;
    if (d0 <= 0.0) throw NonPositiveDistance("CCD called from touching state");
    const double d_stop = 0.1 * d0;
    double t = 0.0;
    bool hit = false;
    for (int iter = 0; iter < 64; ++iter) {
      MatX2 Xt = X;
      for (int a = 0; a < 3; ++a) Xt.row(st[a]) += t * DX.row(st[a]);
      const double dt_dist = pair_distance(pair, Xt, false).d - d_stop;
      if (dt_dist <= 1e-14) {
        hit = true;
        break;
      }
      t += dt_dist / speed;
      if (t >= 1.0) break;
    }
    if (hit || t < 1.0) {
      limited = true;
      t_global = std::min(t_global, std::max(t, 0.0));
    }
  }
  return limited ? std::max(0.9 * t_global, 0.0) : 1.0;
}

double min_contact_distance(const Mesh& mesh, const MatX2& shape, const VecX& u_full) {
  const MatX2 X = deformed_vertex_positions(mesh, shape, u_full);
  double dmin = std::numeric_limits<double>::infinity();
  const double margin = 1e30;  // all pairs
  for (const auto& [v, e] : candidate_pairs(mesh, X, margin)) {
    ContactPair pair = make_vertex_edge_pair(mesh, shape, v, e);
    dmin = std::min(dmin, pair_distance(pair, X, false).d);
  }
  return dmin;
}

}  // namespace elastodiff
