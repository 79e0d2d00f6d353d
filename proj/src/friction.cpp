#include <elastodiff/dual2.hpp>
#include <elastodiff/errors.hpp>
#include <elastodiff/friction.hpp>

#include <algorithm>
#include <cmath>

namespace elastodiff {

double FrictionParams::gamma(int a, int b) const {
  const int i = pair_index(a, b);
  return i < 0 ? 0.0 : std::get<2>(pairs[i]);
}

int FrictionParams::pair_index(int a, int b) const {
  const int lo = std::min(a, b), hi = std::max(a, b);
  for (size_t i = 0; i < pairs.size(); ++i)
    if (std::get<0>(pairs[i]) == lo && std::get<1>(pairs[i]) == hi)
      return static_cast<int>(i);
  return -1;
}

bool FrictionParams::any() const {
  for (const auto& p : pairs)
    if (std::get<2>(p) != 0.0) return true;
  return false;
}

namespace {

// Evaluated lagged-frame data for one pair: T, N, tau and their gradients
// with respect to the stacked lagged stencil coordinates.
struct PairEval {
  int ns = 0;
  std::array<int, 3> st{};
  double gamma = 0.0;
  double area = 0.0;
  double N = 0.0;
  VecX dN;
  VecX T;
  MatX dT;  // dT(i,j) = dT_i / dxp_j
  double tau = 0.0;
  VecX dtau_dxp;
  double g = 0.0;   // mollified slide factor f_eta(|tau|) sign(tau)
  double gp = 0.0;  // d g / d tau
  bool active = false;
};

template <int N>
void tangent_pp(const std::array<Dual2<N>, N>& c, int i0, int i1,
                std::array<Dual2<N>, N>& T) {
  const Dual2<N> rx = c[i0] - c[i1];
  const Dual2<N> ry = c[i0 + 1] - c[i1 + 1];
  const Dual2<N> rn = sqrt(rx * rx + ry * ry);
  // perpendicular of the unit separation
  const Dual2<N> tx = -ry / rn;
  const Dual2<N> ty = rx / rn;
  for (auto& t : T) t = Dual2<N>(0.0);
  T[0] = tx;
  T[1] = ty;
  T[i1] = -tx;
  T[i1 + 1] = -ty;
}

void tangent_pe_interior(const std::array<Dual2<6>, 6>& c, std::array<Dual2<6>, 6>& T) {
  const Dual2<6> ex = c[4] - c[2], ey = c[5] - c[3];
  const Dual2<6> len2 = ex * ex + ey * ey;
  const Dual2<6> len = sqrt(len2);
  const Dual2<6> tx = ex / len, ty = ey / len;
  const Dual2<6> s = ((c[0] - c[2]) * ex + (c[1] - c[3]) * ey) / len2;
  const Dual2<6> w0 = 1.0 - s, w1 = s;
  T[0] = tx;
  T[1] = ty;
  T[2] = -(w0 * tx);
  T[3] = -(w0 * ty);
  T[4] = -(w1 * tx);
  T[5] = -(w1 * ty);
}

void mollifier(double tau, double eta, double& g, double& gp) {
  const double a = std::abs(tau);
  if (a >= eta) {
    g = tau > 0 ? 1.0 : -1.0;
    gp = 0.0;
  } else {
    g = -tau * a / (eta * eta) + 2.0 * tau / eta;
    gp = -2.0 * a / (eta * eta) + 2.0 / eta;
  }
}

template <int NV>
void fill_frame(const ContactPair& pair, const MatX2& XP, PairEval& out) {
  std::array<Dual2<NV>, NV> c;
  const auto st = pair.stencil();
  for (int a = 0; a < NV / 2; ++a) {
    c[2 * a] = Dual2<NV>::variable(XP(st[a], 0), 2 * a);
    c[2 * a + 1] = Dual2<NV>::variable(XP(st[a], 1), 2 * a + 1);
  }

  std::array<Dual2<NV>, NV> T;
  if constexpr (NV == 4) {
    tangent_pp<4>(c, 0, 2, T);
  } else {
    const Vec2 x = XP.row(pair.v), a = XP.row(pair.e0), b = XP.row(pair.e1);
    const Vec2 e = b - a;
    if (e.squaredNorm() <= 0.0) throw DegenerateEdge("friction pair edge");
    const double s = (x - a).dot(e) / e.squaredNorm();
    if (s <= 0.0)
      tangent_pp<6>(c, 0, 2, T);
    else if (s >= 1.0)
      tangent_pp<6>(c, 0, 4, T);
    else
      tangent_pe_interior(c, T);
  }

  out.T.resize(NV);
  out.dT.resize(NV, NV);
  for (int i = 0; i < NV; ++i) {
    out.T(i) = T[i].val;
    out.dT.row(i) = T[i].grad.transpose();
  }
}

bool eval_pair(const Mesh& mesh, const BarrierParams& contact,
               const FrictionParams& fric, const ContactPair& pair, const MatX2& XP,
               const VecX& u_full, const VecX& u_prev_full, PairEval& out) {
  out.ns = pair.stencil_size();
  out.st = pair.stencil();
  const int n = 2 * out.ns;

  const int body_v = mesh.vertex_body[pair.v];
  const int body_e = mesh.vertex_body[pair.e0];
  out.gamma = fric.gamma(body_v, body_e);
  out.area = pair.area;

  const auto de = pair_distance(pair, XP, false);
  if (de.d >= contact.dhat) return false;
  double b, db, ddb;
  barrier(de.d, contact.dhat, b, db, ddb);
  out.N = contact.kappa * (-db) * pair.area;
  out.dN = contact.kappa * (-ddb) * pair.area * de.grad;

  if (out.ns == 2)
    fill_frame<4>(pair, XP, out);
  else
    fill_frame<6>(pair, XP, out);

  VecX du(n);
  for (int a = 0; a < out.ns; ++a)
    for (int d = 0; d < 2; ++d)
      du(2 * a + d) = u_full(2 * out.st[a] + d) - u_prev_full(2 * out.st[a] + d);

  out.tau = out.T.dot(du);
  out.dtau_dxp = out.dT.transpose() * du;
  mollifier(out.tau, fric.eta, out.g, out.gp);
  out.active = true;
  return true;
}

}  // namespace

void add_friction_forces(const Mesh& mesh, const MatX2& shape,
                         const BarrierParams& contact, const FrictionParams& fric,
                         const std::vector<ContactPair>& lagged_pairs,
                         const VecX& u_full, const VecX& u_prev_full, VecX& force,
                         std::vector<Triplet>* jac_u, std::vector<Triplet>* jac_prev,
                         double jac_scale) {
  const MatX2 XP = deformed_vertex_positions(mesh, shape, u_prev_full);
  PairEval pe;
  for (const auto& pair : lagged_pairs) {
    if (!eval_pair(mesh, contact, fric, pair, XP, u_full, u_prev_full, pe))
      continue;
    if (pe.gamma == 0.0) continue;
    const int n = 2 * pe.ns;
    const double cA = pe.area;  // outer A_k of h^f = sum F_k A_k

    // F = -gamma N T g(tau)
    const VecX F = (-pe.gamma * pe.N * pe.g) * pe.T;
    for (int i = 0; i < n; ++i) force(2 * pe.st[i / 2] + i % 2) += cA * F(i);

    if (jac_u || jac_prev) {
      // dF/d(du) = -gamma N g'(tau) T T^T
      const MatX dF_ddu = (-pe.gamma * pe.N * pe.gp) * (pe.T * pe.T.transpose());
      // dF/dxp = -gamma (g T dN^T + N g dT + N g' T dtau^T)
      const MatX dF_dxp =
          -pe.gamma * (pe.g * pe.T * pe.dN.transpose() + pe.N * pe.g * pe.dT +
                       pe.N * pe.gp * pe.T * pe.dtau_dxp.transpose());
      for (int i = 0; i < n; ++i) {
        const int gi = 2 * pe.st[i / 2] + i % 2;
        for (int j = 0; j < n; ++j) {
          const int gj = 2 * pe.st[j / 2] + j % 2;
          if (jac_u) jac_u->emplace_back(gi, gj, jac_scale * cA * dF_ddu(i, j));
          if (jac_prev)
            jac_prev->emplace_back(gi, gj,
                                   jac_scale * cA * (dF_dxp(i, j) - dF_ddu(i, j)));
        }
      }
    }
  }
}

VecX friction_shape_product(const Mesh& mesh, const MatX2& shape,
                            const BarrierParams& contact, const FrictionParams& fric,
                            const std::vector<ContactPair>& lagged_pairs,
                            const VecX& u_full, const VecX& u_prev_full,
                            const VecX& p_full) {
  VecX out = VecX::Zero(2 * mesh.n_vertices());
  const MatX2 XP = deformed_vertex_positions(mesh, shape, u_prev_full);
  PairEval pe;
  for (const auto& pair : lagged_pairs) {
    if (!eval_pair(mesh, contact, fric, pair, XP, u_full, u_prev_full, pe))
      continue;
    if (pe.gamma == 0.0) continue;
    const int n = 2 * pe.ns;
    VecX p_st(n);
    for (int i = 0; i < n; ++i) p_st(i) = p_full(2 * pe.st[i / 2] + i % 2);

    const MatX dF_dxp =
        -pe.gamma * (pe.g * pe.T * pe.dN.transpose() + pe.N * pe.g * pe.dT +
                     pe.N * pe.gp * pe.T * pe.dtau_dxp.transpose());
    const VecX prod = pe.area * (dF_dxp.transpose() * p_st);
    for (int i = 0; i < n; ++i) out(2 * pe.st[i / 2] + i % 2) += prod(i);

    // h_k = A_k^2 * (-gamma kappa |b'| T g): quadratic in A_k
    const VecX F = (-pe.gamma * pe.N * pe.g) * pe.T;
    add_pair_area_gradient(mesh, shape, pair, 2.0 * F.dot(p_st), out);
  }
  return out;
}

VecX friction_gamma_product(const Mesh& mesh, const MatX2& shape,
                            const BarrierParams& contact, const FrictionParams& fric,
                            const std::vector<ContactPair>& lagged_pairs,
                            const VecX& u_full, const VecX& u_prev_full,
                            const VecX& p_full) {
  VecX out = VecX::Zero(fric.n_pairs());
  const MatX2 XP = deformed_vertex_positions(mesh, shape, u_prev_full);
  PairEval pe;
  for (const auto& pair : lagged_pairs) {
    if (!eval_pair(mesh, contact, fric, pair, XP, u_full, u_prev_full, pe))
      continue;
    const int idx =
        fric.pair_index(mesh.vertex_body[pair.v], mesh.vertex_body[pair.e0]);
    if (idx < 0) continue;
    const int n = 2 * pe.ns;
    VecX p_st(n);
    for (int i = 0; i < n; ++i) p_st(i) = p_full(2 * pe.st[i / 2] + i % 2);
    const VecX dF_dgamma = (-pe.N * pe.g) * pe.T;
    out(idx) += pe.area * dF_dgamma.dot(p_st);
  }
  return out;
}

}  // namespace elastodiff
