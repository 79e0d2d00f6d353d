#pragma once

#include <elastodiff/adjoint.hpp>

#include <functional>
#include <map>

namespace elastodiff {

struct LbfgsOptions {
  int memory = 6;
  int max_iterations = 100;
  double grad_tol_rel = 1e-6;  // on gradient norm relative to the initial one
  double obj_tol_rel = 1e-10;  // relative decrease over 3 iterations
  double armijo_c = 1e-4;
  int max_halvings = 30;
};

enum class OptStatus { GradientTolerance, ObjectiveStall, MaxIterations, LineSearchFailed };

struct TraceRow {
  int iteration = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
  double min_quality = 1.0;
  double wall_seconds = 0.0;
  bool clamped = false;
  bool hessian_reset = false;
};

struct OptTrace {
  std::vector<TraceRow> rows;
};

/// Returns false to mark x infeasible (treated as a line-search rejection).
using LbfgsEval = std::function<bool(const VecX& x, double& f, VecX& g)>;

struct LbfgsResult {
  VecX x;
  double objective = 0.0;
  OptStatus status = OptStatus::MaxIterations;
  int iterations = 0;
};

struct LineSearchResult {
  bool ok = false;
  double t = 0.0;
  VecX x;
  double f = 0.0;
  VecX g;
};

/// Backtracking Armijo search along `dir` starting from the unit step.
/// Infeasible evaluations count as rejections; `project` (optional) clamps
/// candidates into bounds before evaluation.
LineSearchResult armijo_backtrack(const LbfgsEval& evaluate, const VecX& x, double f0,
                                  const VecX& g0, const VecX& dir,
                                  const LbfgsOptions& opts,
                                  const std::function<VecX(const VecX&)>& project = nullptr,
                                  double t_init = 1.0);

/// Two-loop L-BFGS with Armijo backtracking. On a failed line search the
/// memory is reset and a plain gradient step is attempted; if that also
/// fails on the very first iteration, throws LineSearchFailure (later
/// failures return with status LineSearchFailed). `project` (optional)
/// clamps candidate points into bounds; `on_iteration` observes accepted
/// iterates. Set obj_tol_rel <= 0 to disable the objective-stall stop.
LbfgsResult lbfgs_minimize(
    const LbfgsEval& evaluate, VecX x0, const LbfgsOptions& opts,
    const std::function<VecX(const VecX&)>& project = nullptr,
    const std::function<void(const TraceRow&, const VecX&)>& on_iteration = nullptr);

// ---- physics driver ----

enum class MaterialTying { PerElement, PerBody };

struct OptProblem {
  Scene scene;
  ObjectiveSpec objective;
  std::vector<ParamBlock> blocks{ParamBlock::Shape};
  MaterialTying tying = MaterialTying::PerElement;
  std::map<ParamBlock, std::pair<double, double>> bounds;  // lo/hi per block
  LbfgsOptions lbfgs;
  double quality_floor = 1e-3;
};

struct OptResult {
  VecX params;  // final full parameter vector (ParamLayout order)
  double objective = 0.0;
  OptStatus status = OptStatus::MaxIterations;
  OptTrace trace;
};

OptResult minimize(OptProblem& problem,
                   const std::function<void(const TraceRow&, const VecX&)>&
                       on_iteration = nullptr);

}  // namespace elastodiff
