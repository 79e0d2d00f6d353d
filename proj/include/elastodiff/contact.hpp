#pragma once

#include <elastodiff/fe_space.hpp>
#include <elastodiff/mesh.hpp>

#include <utility>
#include <vector>

namespace elastodiff {

struct BarrierParams {
  double dhat = 1e-3;   // activation distance
  double kappa = 1e3;   // barrier stiffness
};

/// Truncated log barrier b(d) = -(d - dhat)^2 log(d / dhat) for d < dhat,
/// zero beyond; C2 at d = dhat. Throws NonPositiveDistance for d <= 0.
void barrier(double d, double dhat, double& b, double& db, double& ddb);

enum class PairKind { PointPoint, PointEdge };

/// A contact pair: a boundary vertex against a boundary edge (PointEdge,
/// the usual candidate from the active set; the closest-point regime may
/// degenerate to an endpoint) or an explicit vertex-vertex pair
/// (PointPoint). `area` is the rest-surface measure A_k: half the summed
/// incident boundary-edge lengths for a vertex plus the edge length (or
/// the second vertex measure).
struct ContactPair {
  PairKind kind = PairKind::PointEdge;
  int v = -1;
  int e0 = -1;
  int e1 = -1;  // -1 for PointPoint
  std::pair<int, int> body_pair{0, 0};
  double area = 0.0;

  int stencil_size() const { return kind == PairKind::PointPoint ? 2 : 3; }
  std::array<int, 3> stencil() const { return {v, e0, e1}; }
};

struct DistanceEval {
  double d = 0.0;
  VecX grad;       // stacked (x,y) per stencil vertex
  MatX hess;       // filled only when requested
  PairKind regime = PairKind::PointEdge;
};

/// Point-point or point-segment distance with derivatives with respect to
/// the stacked stencil coordinates. The closest-point regime is chosen from
/// the current positions and the smooth branch is differentiated.
/// Throws DegenerateEdge if a PointEdge pair has zero-length edge.
DistanceEval pair_distance(const ContactPair& pair, const MatX2& positions,
                           bool need_hess);

/// Deformed positions of mesh vertices: shape + u at the vertex nodes.
MatX2 deformed_vertex_positions(const Mesh& mesh, const MatX2& shape,
                                const VecX& u_full);

double vertex_rest_measure(const Mesh& mesh, const MatX2& shape, int v);
double pair_rest_measure(const Mesh& mesh, const MatX2& shape, const ContactPair& pair);

/// Accumulates coeff * dA_k/dq into a shape-DOF vector.
void add_pair_area_gradient(const Mesh& mesh, const MatX2& shape,
                            const ContactPair& pair, double coeff, VecX& out);

/// All vertex-edge pairs closer than dhat (excluding a vertex against its
/// own edges), via a uniform spatial hash broad phase. Deterministic order.
std::vector<ContactPair> build_active_set(const Mesh& mesh, const MatX2& shape,
                                          const VecX& u_full, const BarrierParams& params);

/// Adds the physical contact force (repulsion, -kappa b'(d) grad_d A_k) and
/// optionally scale * d(force)/du into triplets (full DOF indices).
/// With `psd_project` the per-pair potential Hessian is projected to
/// positive semidefinite before scattering: the barrier curvature term
/// b' * hess(d) carries ~1/d negative curvature that can cancel the
/// inertia block and derail Newton. Projection changes only the solver
/// matrix, never the residual, so converged states are unaffected; the
/// adjoint always uses the exact (unprojected) jacobian.
void add_contact_forces(const Mesh& mesh, const MatX2& shape, const VecX& u_full,
                        const BarrierParams& params,
                        const std::vector<ContactPair>& pairs, VecX& force,
                        std::vector<Triplet>* jac, double jac_scale,
                        bool psd_project = false);

/// p^T d/dq of the contact force, including the A_k area-gradient term.
VecX contact_shape_product(const Mesh& mesh, const MatX2& shape, const VecX& u_full,
                           const BarrierParams& params,
                           const std::vector<ContactPair>& pairs, const VecX& p_full);

/// Largest step fraction in (0,1] such that positions + t*dx stays
/// intersection-free; conservative advancement with a 0.9 safety factor.
double ccd_max_step(const Mesh& mesh, const MatX2& shape, const VecX& u_full,
                    const VecX& du_full);

/// Smallest current distance over all candidate pairs (infinity if none).
double min_contact_distance(const Mesh& mesh, const MatX2& shape, const VecX& u_full);

}  // namespace elastodiff
