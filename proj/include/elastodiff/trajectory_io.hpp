#pragma once

#include <elastodiff/forward.hpp>

#include <string>

namespace elastodiff {

/// On-disk trajectory container: magic "EDTRJ1\n\0", a little-endian
/// uint64 header length, a JSON header, then for each step i = 0..N the
/// arrays u_i and v_i as little-endian float64.
struct TrajectoryFile {
  int n_steps = 0;
  int n_dofs = 0;
  double dt = 0.0;
  int bdf_order = 1;
  std::vector<VecX> u, v;
};

void write_trajectory(const std::string& path, const Scene& scene,
                      const Trajectory& traj);
TrajectoryFile read_trajectory(const std::string& path);

/// Per-step summary CSV: step, time, newton_iterations, residual,
/// min_distance, min_detF.
void write_step_summary_csv(const std::string& path, const Scene& scene,
                            const Trajectory& traj);

}  // namespace elastodiff
