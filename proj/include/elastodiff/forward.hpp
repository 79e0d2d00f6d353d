#pragma once

#include <elastodiff/scene.hpp>

#include <functional>

namespace elastodiff {

/// BDF coefficient tables with startup rows: step i uses the
/// min(i, order) scheme, so a BDF2/BDF3 run starts with lower-order steps.
struct BdfScheme {
  int order = 1;

  explicit BdfScheme(int order_ = 1) : order(order_) {}
  int effective_order(int step) const { return std::min(step, order); }
  double beta(int step) const;
  /// Coefficient of u^{step-lag} in the difference operator applied at
  /// forward step `step`; zero when lag exceeds the startup row length.
  double alpha(int step, int lag) const;
};

struct NewtonStats {
  int iterations = 0;
  double residual = 0.0;
  double min_distance = std::numeric_limits<double>::infinity();
  double min_detF = std::numeric_limits<double>::infinity();
};

struct Trajectory {
  std::vector<VecX> u;  // full vectors, = 0..N
  std::vector<VecX> v;
  std::vector<NewtonStats> stats;  // per step 1..N
  double forward_seconds = 0.0;
};

/// Total physical force (external + elastic + contact + friction + damping)
/// and optionally its jacobians with respect to the current and previous
/// displacements. Contact pairs are rebuilt from u; friction uses the
/// supplied lagged pairs (ignored for static problems).
struct StepForces {
  VecX force;
  SpMat dforce_du;      // full indices
  SpMat dforce_duprev;  // full indices
};
/// `stabilized_jacobians` applies the PSD projection of the contact blocks
/// (Newton matrix only; the adjoint uses the exact jacobians).
StepForces eval_step_forces(const Scene& scene, const AssemblyCache& cache,
                            const SpMat* mass, const VecX& u_full,
                            const VecX* u_prev_full,
                            const std::vector<ContactPair>* lagged_pairs, double time,
                            bool need_jacobians, bool stabilized_jacobians = false);

/// Largest step fraction keeping det(F) positive on every element
/// (quadratic root per quadrature point, 0.9 safety).
double inversion_max_step(const AssemblyCache& cache, const VecX& u_full,
                          const VecX& du_full);

Trajectory simulate(const Scene& scene);
/// Simulate with a prescribed state history (u[0..k], v[0..k] given); used
/// for exactness tests of higher-order startup.
Trajectory simulate_from_history(const Scene& scene, const std::vector<VecX>& u_hist,
                                 const std::vector<VecX>& v_hist);

VecX static_solve(const Scene& scene);

/// Force jacobian blocks of forward step i evaluated at the stored states,
/// as the adjoint needs them.
struct StepSystem {
  double beta_dt = 0.0;
  SpMat dforce_du;      // full indices
  SpMat dforce_duprev;  // full indices; empty when i has no previous coupling
};
StepSystem assemble_step_system(const Scene& scene, const AssemblyCache& cache,
                                const SpMat& mass, const Trajectory& traj, int step);

}  // namespace elastodiff
