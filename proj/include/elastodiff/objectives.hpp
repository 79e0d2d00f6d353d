#pragma once

#include <elastodiff/scene.hpp>

namespace elastodiff {

enum class ObjectiveKind {
  StressLp,
  StressBound,
  TargetDeformation,
  ComTrajectory,
  ComHeight,
  VolumePenalty,
  BoundarySmoothing,
  MaterialSmoothing,
};

ObjectiveKind objective_kind_from_name(const std::string& name);
const char* objective_kind_name(ObjectiveKind k);

/// Does this functional depend on the solution u (otherwise it is a pure
/// shape/material regularizer, evaluated once)?
bool objective_depends_on_u(ObjectiveKind k);

enum class TimeWeighting { AllSteps, Final };

struct ObjectiveTerm {
  ObjectiveKind kind = ObjectiveKind::TargetDeformation;
  double weight = 1.0;
  TimeWeighting time_mode = TimeWeighting::AllSteps;
  int body = -1;  // integrate over this body only; -1 = all non-obstacle bodies

  double p = 2.0;             // Lp exponent (stress norm / smoothing)
  double stress_target = 0.0; // s_t for StressBound
  double volume_target = 0.0; // V_t for VolumePenalty

  MatX2 target;                    // per-node target positions
  std::vector<MatX2> target_steps; // per-step targets (size N+1); overrides `target`
  VecX node_weights;               // w field per node; empty = 1
  bool boundary_only = false;

  std::vector<Vec2> com_targets;   // per-step centers (size N+1 or 1)
};

struct ObjectiveSpec {
  std::vector<ObjectiveTerm> terms;
};

/// Quadrature weight of step i for a u-dependent term (the term's `weight`
/// is applied on top). Static problems use 1.
double term_time_weight(const ObjectiveTerm& term, const Scene& scene, int step);

/// Unweighted value of one term evaluated at one state.
double objective_term_value(const Scene& scene, const AssemblyCache& cache,
                            const ObjectiveTerm& term, const VecX& u_full, int step);

/// d(value)/du as a full-DOF vector (the R-vector).
VecX objective_term_du(const Scene& scene, const AssemblyCache& cache,
                       const ObjectiveTerm& term, const VecX& u_full, int step);

/// Accumulates factor * d(value)/dq into gradient blocks (shape S-vector
/// and, for stress objectives and the material regularizer, lambda/mu).
void objective_term_dq(const Scene& scene, const AssemblyCache& cache,
                       const ObjectiveTerm& term, const VecX& u_full, int step,
                       double factor, GradientVector& grad);

// ---- composed over terms ----

/// Static problems: sum of all terms at the single state.
double objective_value_static(const Scene& scene, const AssemblyCache& cache,
                              const ObjectiveSpec& spec, const VecX& u_full);

/// Transient: time-quadrature sum over u-dependent terms plus the
/// u-independent terms once.
double objective_value_transient(const Scene& scene, const AssemblyCache& cache,
                                 const ObjectiveSpec& spec,
                                 const std::vector<VecX>& u_steps);

/// Sum of weighted R-vectors of all u-dependent terms at one step.
VecX objective_du_transient(const Scene& scene, const AssemblyCache& cache,
                            const ObjectiveSpec& spec, const VecX& u_full, int step);

}  // namespace elastodiff
