#pragma once

#include <elastodiff/forward.hpp>
#include <elastodiff/objectives.hpp>

namespace elastodiff {

/// Multipliers of the backward sweep, on free DOFs. p_i multiplies the
/// velocity (momentum) equation of step i, nu_i the displacement relation;
/// p[0] and mu0 are the initial-condition multipliers. The virtual
/// padding p_{N+1} = nu_{N+1} = 0 is implicit.
struct AdjointState {
  std::vector<VecX> p;   // 0..N
  std::vector<VecX> nu;  // 0..N (nu[0] unused)
  VecX mu0;
  double adjoint_seconds = 0.0;
};

AdjointState transient_adjoint(const Scene& scene, const AssemblyCache& cache,
                               const Trajectory& traj, const ObjectiveSpec& objective);

/// Assembles the full parameter gradient from stored forward and adjoint
/// states: objective S-vectors, adjoint-weighted force products per step,
/// mass-matrix shape terms, and the initial-condition blocks.
GradientVector accumulate_gradient(const Scene& scene, const AssemblyCache& cache,
                                   const Trajectory& traj, const AdjointState& adj,
                                   const ObjectiveSpec& objective,
                                   const ParamLayout& layout);

/// Static adjoint: solves (d force/du)^T p = -(dJ/du)^T on free DOFs.
VecX static_adjoint(const Scene& scene, const AssemblyCache& cache, const VecX& u_full,
                    const ObjectiveSpec& objective);

GradientVector static_gradient(const Scene& scene, const AssemblyCache& cache,
                               const VecX& u_full, const VecX& p_free,
                               const ObjectiveSpec& objective, const ParamLayout& layout);

/// Adds factor * p^T d(force)/d(parameters) for one force configuration
/// into the gradient blocks. `u_prev` and `lagged_pairs` may be null for
/// static problems (no damping/friction contributions then).
void add_force_parameter_products(const Scene& scene, const AssemblyCache& cache,
                                  const VecX& u_full, const VecX* u_prev_full,
                                  const std::vector<ContactPair>* lagged_pairs,
                                  double time, const VecX& p_full, double factor,
                                  GradientVector& grad);

/// Forward solve + adjoint + gradient in one call (dispatches on
/// scene.transient()).
struct GradientResult {
  double objective = 0.0;
  GradientVector grad;
  double forward_seconds = 0.0;
  double adjoint_seconds = 0.0;
};
GradientResult compute_objective_gradient(const Scene& scene,
                                          const ObjectiveSpec& objective,
                                          const ParamLayout& layout);

/// Objective value from a forward solve only.
double evaluate_objective(const Scene& scene, const ObjectiveSpec& objective);

}  // namespace elastodiff
