#pragma once

#include <elastodiff/contact.hpp>

namespace elastodiff {

/// Per-body-pair Coulomb coefficients and the sliding mollifier threshold.
struct FrictionParams {
  double eta = 1e-3;
  // (body m < body n, gamma); pairs not listed are frictionless
  std::vector<std::tuple<int, int, double>> pairs;

  double gamma(int body_a, int body_b) const;
  int pair_index(int body_a, int body_b) const;  // -1 if absent
  int n_pairs() const { return static_cast<int>(pairs.size()); }
  bool any() const;
};

/// Lagged friction for one time step. The active set, normal-force
/// magnitudes N_k and tangent frames T_k all come from the previous-step
/// configuration q + u_prev; the force depends on the current step only
/// through the relative slide tau = T^T (u_i - u_prev).
///
/// Adds the force and, optionally, scale * d(force)/d(u_i) and
/// scale * d(force)/d(u_prev) into triplet buffers (full DOF indices).
void add_friction_forces(const Mesh& mesh, const MatX2& shape,
                         const BarrierParams& contact, const FrictionParams& fric,
                         const std::vector<ContactPair>& lagged_pairs,
                         const VecX& u_full, const VecX& u_prev_full, VecX& force,
                         std::vector<Triplet>* jac_u, std::vector<Triplet>* jac_prev,
                         double jac_scale);

/// p^T d/dq of the friction force (through lagged positions and A_k).
VecX friction_shape_product(const Mesh& mesh, const MatX2& shape,
                            const BarrierParams& contact, const FrictionParams& fric,
                            const std::vector<ContactPair>& lagged_pairs,
                            const VecX& u_full, const VecX& u_prev_full,
                            const VecX& p_full);

/// p^T d/d(gamma_mn) of the friction force, one entry per parameter pair.
VecX friction_gamma_product(const Mesh& mesh, const MatX2& shape,
                            const BarrierParams& contact, const FrictionParams& fric,
                            const std::vector<ContactPair>& lagged_pairs,
                            const VecX& u_full, const VecX& u_prev_full,
                            const VecX& p_full);

}  // namespace elastodiff
