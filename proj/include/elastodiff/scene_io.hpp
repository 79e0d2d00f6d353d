#pragma once

#include <elastodiff/optimize.hpp>
#include <elastodiff/trajectory_io.hpp>

#include <nlohmann/json.hpp>

#include <string>

namespace elastodiff {

/// Optimization settings as declared in the scene file.
struct OptSettings {
  std::vector<ParamBlock> blocks;
  MaterialTying tying = MaterialTying::PerElement;
  std::map<ParamBlock, std::pair<double, double>> bounds;
  LbfgsOptions lbfgs;
};

struct SceneBundle {
  Scene scene;
  ObjectiveSpec objective;
  OptSettings opt;
};

/// Parses and validates a scene file; applies and echoes defaults.
/// Throws SchemaError (with a JSON path) or DanglingReference.
SceneBundle load_scene(const std::string& path);
SceneBundle parse_scene_json(const nlohmann::json& doc, const std::string& base_dir);

/// Canonical serialization (merged mesh, explicit arrays). Parsing the
/// result reproduces the same canonical form byte for byte.
nlohmann::json serialize_bundle(const SceneBundle& bundle);

nlohmann::json gradient_to_json(const Scene& scene, const ParamLayout& layout,
                                const VecX& grad);

struct RunReport {
  double objective = 0.0;
  double forward_seconds = 0.0;
  double adjoint_seconds = 0.0;
  int n_steps = 0;
  double min_distance = std::numeric_limits<double>::infinity();
  double min_detF = std::numeric_limits<double>::infinity();
  int max_newton_iterations = 0;
};
RunReport make_run_report(const Scene& scene, const Trajectory& traj);
nlohmann::json report_to_json(const RunReport& r);

/// Central finite difference of the objective along a parameter direction,
/// with identical solver settings on both sides.
double fd_directional(const SceneBundle& bundle, const ParamLayout& layout,
                      const VecX& direction, double eps);

struct GradCheckRow {
  ParamBlock block = ParamBlock::Shape;
  int direction = 0;
  double eps = 0.0;
  double fd = 0.0;
  double adjoint = 0.0;
  double rel_err = 0.0;
  bool pass = false;
};

/// Compares the adjoint gradient against central differences over random
/// unit directions per block, sweeping a per-block epsilon list and keeping
/// the best match.
std::vector<GradCheckRow> grad_check(const SceneBundle& bundle,
                                     const std::vector<ParamBlock>& blocks,
                                     int directions_per_block, double tolerance,
                                     uint64_t seed);

/// Default FD epsilon per block (scaled by scene magnitudes).
double default_fd_eps(const SceneBundle& bundle, ParamBlock block);

/// Plain-text mesh listing: "nv nt", nv lines "x y", nt lines
/// "i j k [body]".
Mesh read_mesh_listing(const std::string& path);

}  // namespace elastodiff
