// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned in code next to each check.

#include <elastodiff/optimize.hpp>
#include <elastodiff/scene_io.hpp>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <vector>

#include "dense_kkt.hpp"
#include "test_scenes.hpp"

using namespace elastodiff;
using namespace elastodiff::testing;

namespace {

const std::string kScenesDir = ELASTODIFF_SCENES_DIR;

struct Criterion {
  std::string name;
  std::function<bool(std::string&)> run;
};

ObjectiveTerm trajectory_term(const Scene& scene, const std::vector<VecX>& target_u) {
  ObjectiveTerm term;
  term.kind = ObjectiveKind::TargetDeformation;
  const MatX2 rest = scene.space.node_positions(scene.mesh.rest_vertices);
  for (const auto& u : target_u) {
    MatX2 tgt = rest;
    for (int n = 0; n < scene.space.n_nodes; ++n) {
      tgt(n, 0) += u(2 * n);
      tgt(n, 1) += u(2 * n + 1);
    }
    term.target_steps.push_back(tgt);
  }
  return term;
}

// ---- 1. master gradient suite ----

bool master_gradient_suite(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  bool all = true;
  double worst = 0.0;
  std::string worst_case;
  for (int order : {1, 2}) {
    SceneBundle bundle = load_scene(kScenesDir + "/drop.json");
    bundle.scene.bdf_order = order;
    const auto rows = grad_check(bundle,
                                 {ParamBlock::Shape, ParamBlock::Lambda, ParamBlock::Mu,
                                  ParamBlock::Gamma, ParamBlock::Alpha, ParamBlock::Beta,
                                  ParamBlock::U0, ParamBlock::V0},
                                 5, 1e-5, 20240 + order);
    for (const auto& r : rows) {
      all = all && r.pass;
      if (r.rel_err > worst) {
        worst = r.rel_err;
        worst_case = std::string(param_block_name(r.block)) + "/bdf" +
                     std::to_string(order);
      }
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream os;
  os << "worst rel err " << worst << " (" << worst_case << "), " << secs << " s";
  detail = os.str();
  return all && secs < 300.0;
}

// ---- 2. dense KKT oracle ----

bool dense_kkt_oracle(std::string& detail) {
  double worst = 0.0;
  auto check_scene = [&](Scene scene) {
    ObjectiveTerm term;
    term.kind = ObjectiveKind::ComTrajectory;
    term.body = 0;
    term.com_targets = {Vec2(0.42, 0.37)};
    ObjectiveSpec spec;
    spec.terms.push_back(term);

    const ParamLayout layout = ParamLayout::from(scene);
    const AssemblyCache cache = scene.build_cache();
    const Trajectory traj = simulate(scene);
    const auto adj = transient_adjoint(scene, cache, traj, spec);
    const auto grad = accumulate_gradient(scene, cache, traj, adj, spec, layout);
    const auto kkt = dense_kkt_multipliers(scene, cache, traj, spec);
    const VecX grad_kkt = dense_kkt_gradient(scene, cache, traj, spec, kkt, layout);
    const double scale = std::max(grad_kkt.lpNorm<Eigen::Infinity>(), 1e-12);
    worst = std::max(worst, (grad.data - grad_kkt).lpNorm<Eigen::Infinity>() / scale);

    double pscale = 1e-30;
    for (int i = 1; i <= scene.n_steps; ++i)
      pscale = std::max(pscale, kkt.p[i].lpNorm<Eigen::Infinity>());
    for (int i = 1; i <= scene.n_steps; ++i)
      worst = std::max(worst,
                       (adj.p[i] - kkt.p[i]).lpNorm<Eigen::Infinity>() / pscale);
    worst = std::max(worst, (adj.mu0 - kkt.mu0).lpNorm<Eigen::Infinity>() / pscale);
    worst = std::max(worst, (adj.p[0] - kkt.p0).lpNorm<Eigen::Infinity>() / pscale);
  };
  check_scene(tiny_scene(1, 3, true));
  check_scene(tiny_scene(2, 3, true));
  check_scene(tiny_scene(3, 4, true));
  check_scene(tiny_contact_scene(1, 3));
  check_scene(tiny_contact_scene(2, 3));
  std::ostringstream os;
  os << "worst deviation " << worst;
  detail = os.str();
  return worst < 1e-10;
}

// ---- 3. adjoint overhead ----

bool adjoint_overhead(std::string& detail) {
  SceneBundle bundle = load_scene(kScenesDir + "/drop.json");
  double best_ratio = std::numeric_limits<double>::infinity();
  const ParamLayout layout = ParamLayout::from(bundle.scene);
  for (int rep = 0; rep < 3; ++rep) {
    const auto res = compute_objective_gradient(bundle.scene, bundle.objective, layout);
    best_ratio = std::min(best_ratio, res.adjoint_seconds / res.forward_seconds);
  }
  std::ostringstream os;
  os << "adjoint/forward = " << best_ratio;
  detail = os.str();
  return best_ratio <= 2.5;
}

// ---- 4. feasibility invariants ----

bool feasibility_invariants(std::string& detail) {
  double global_min_dist = std::numeric_limits<double>::infinity();
  double global_min_detF = std::numeric_limits<double>::infinity();
  for (const std::string scene_file : {"/drop.json", "/slide_target.json"}) {
    for (int order : {1, 2}) {
      SceneBundle bundle = load_scene(kScenesDir + scene_file);
      bundle.scene.bdf_order = order;
      const Trajectory traj = simulate(bundle.scene);
      const AssemblyCache cache = bundle.scene.build_cache();
      for (int i = 0; i <= bundle.scene.n_steps; ++i) {
        const double d = min_contact_distance(
            bundle.scene.mesh, bundle.scene.mesh.rest_vertices, traj.u[i]);
        global_min_dist = std::min(global_min_dist, d);
        for (const auto& e : cache.elems)
          for (size_t q = 0; q < e.w.size(); ++q)
            global_min_detF = std::min(
                global_min_detF,
                (element_grad(e, traj.u[i], q) + Mat2::Identity()).determinant());
        if (d <= 0.0 || global_min_detF <= 0.0) {
          detail = "violated at step " + std::to_string(i) + " of " + scene_file;
          return false;
        }
      }
    }
  }
  std::ostringstream os;
  os << "min distance " << global_min_dist << ", min detF " << global_min_detF;
  detail = os.str();
  return global_min_dist > 0.0 && global_min_detF > 0.0;
}

// ---- 5. forward correctness ----

bool forward_correctness(std::string& detail) {
  std::ostringstream os;
  // P1/P2 patch test: an affine field satisfies all interior equations
  for (int order : {1, 2}) {
    Scene s;
    s.mesh = box_mesh(Vec2(0, 0), Vec2(1, 1), 3, 3);
    s.order = order;
    const int nt = s.mesh.n_triangles();
    s.material.lambda = VecX::Constant(nt, 1.0e5);
    s.material.mu = VecX::Constant(nt, 8.0e4);
    s.material.rho = VecX::Constant(nt, 1.0);
    s.material.model = MaterialModel::Linear;
    for (auto& be : s.mesh.boundary_edges) be.region = 1;
    DirichletBC bc;
    bc.tag = 1;
    s.dirichlet.push_back(bc);
    s.finalize();
    Mat2 A;
    A << 0.02, 0.01, -0.015, 0.03;
    const MatX2 pos = s.space.node_positions(s.mesh.rest_vertices);
    VecX affine(s.space.n_dofs());
    for (int n = 0; n < s.space.n_nodes; ++n) {
      const Vec2 ux = A * Vec2(pos.row(n)) + Vec2(0.001, -0.002);
      affine(2 * n) = ux.x();
      affine(2 * n + 1) = ux.y();
    }
    const AssemblyCache cache = s.build_cache();
    const auto forces =
        eval_step_forces(s, cache, nullptr, affine, nullptr, nullptr, 0.0, false);
    const double resid = s.space.restrict_free(forces.force).lpNorm<Eigen::Infinity>() /
                         forces.force.lpNorm<Eigen::Infinity>();
    if (resid > 1e-10) {
      detail = "patch test residual " + std::to_string(resid);
      return false;
    }
  }
  os << "patch ok";

  // uniaxial bar: tip displacement within 0.5% on a 16-element mesh
  {
    Scene s;
    const double L = 1.0;
    s.mesh = box_mesh(Vec2(0, 0), Vec2(L, 0.25), 8, 1);  // 16 elements
    s.order = 1;
    const int nt = s.mesh.n_triangles();
    const double lambda = 1.1e5, mu = 8.0e4, traction = 500.0;
    s.material.lambda = VecX::Constant(nt, lambda);
    s.material.mu = VecX::Constant(nt, mu);
    s.material.rho = VecX::Constant(nt, 1.0);
    s.material.model = MaterialModel::Linear;
    for (auto& be : s.mesh.boundary_edges) {
      const Vec2 mid =
          0.5 * (s.mesh.rest_vertices.row(be.v0) + s.mesh.rest_vertices.row(be.v1));
      if (mid.x() < 1e-9) be.region = 1;
      else if (mid.x() > L - 1e-9) be.region = 2;
      else if (mid.y() < 1e-9) be.region = 3;
    }
    DirichletBC left;
    left.tag = 1;
    left.comp = {true, false};
    s.dirichlet.push_back(left);
    DirichletBC bottom;
    bottom.tag = 3;
    bottom.comp = {false, true};
    s.dirichlet.push_back(bottom);
    NeumannBC pull;
    pull.tag = 2;
    pull.traction = Vec2(traction, 0);
    s.neumann.push_back(pull);
    s.finalize();
    const VecX u = static_solve(s);
    const double expect = traction * L * (lambda + 2 * mu) / (4 * mu * (lambda + mu));
    double worst = 0.0;
    for (int v = 0; v < s.mesh.n_vertices(); ++v)
      if (s.mesh.rest_vertices(v, 0) > L - 1e-9)
        worst = std::max(worst, std::abs(u(2 * v) - expect) / expect);
    os << ", bar tip err " << worst;
    if (worst > 0.005) {
      detail = os.str();
      return false;
    }
  }

  // BDF1/BDF2 free flight is exact
  for (int order : {1, 2}) {
    Scene s = free_body_scene(0.05, 6, order);
    VecX v0(s.space.n_dofs());
    for (int n = 0; n < s.space.n_nodes; ++n) {
      v0(2 * n) = 0.3;
      v0(2 * n + 1) = -0.2;
    }
    s.v0 = v0;
    const Trajectory traj = simulate(s);
    for (int i = 0; i <= s.n_steps; ++i) {
      const VecX expect = i * s.dt * v0;
      if ((traj.u[i] - expect).lpNorm<Eigen::Infinity>() > 1e-12) {
        detail = "free flight drift at step " + std::to_string(i);
        return false;
      }
    }
  }
  os << ", free flight exact";
  detail = os.str();
  return true;
}

// ---- 6. inverse-crime recoveries ----

bool material_recovery(std::string& detail) {
  Scene target_scene = drop_scene(1, 8, 1, 3);
  const double lam_star = target_scene.material.lambda(0);
  const double mu_star = target_scene.material.mu(0);
  const Trajectory target = simulate(target_scene);

  OptProblem prob;
  prob.scene = target_scene;
  prob.scene.material.lambda.setConstant(0.5 * lam_star);
  prob.scene.material.mu.setConstant(0.5 * mu_star);
  ObjectiveTerm term = trajectory_term(prob.scene, target.u);
  term.body = 0;
  prob.objective.terms.push_back(term);
  prob.blocks = {ParamBlock::Lambda, ParamBlock::Mu};
  prob.tying = MaterialTying::PerBody;
  prob.bounds[ParamBlock::Lambda] = {1.0, 1e9};
  prob.bounds[ParamBlock::Mu] = {1.0, 1e9};
  prob.lbfgs.max_iterations = 60;
  prob.lbfgs.grad_tol_rel = 1e-12;
  prob.lbfgs.obj_tol_rel = 0.0;
  const auto res = minimize(prob);

  const ParamLayout layout = ParamLayout::from(prob.scene);
  double lam_rec = 0, mu_rec = 0;
  int nb = 0;
  for (int t = 0; t < prob.scene.mesh.n_triangles(); ++t) {
    if (prob.scene.mesh.body_id[t] != 0) continue;
    lam_rec += layout.block(res.params, ParamBlock::Lambda)(t);
    mu_rec += layout.block(res.params, ParamBlock::Mu)(t);
    ++nb;
  }
  lam_rec /= nb;
  mu_rec /= nb;
  const double el = std::abs(lam_rec - lam_star) / lam_star;
  const double em = std::abs(mu_rec - mu_star) / mu_star;
  std::ostringstream os;
  os << "lambda err " << 100 * el << "%, mu err " << 100 * em << "% in "
     << res.trace.rows.size() << " iterations";
  detail = os.str();
  return el < 0.01 && em < 0.01;
}

bool friction_recovery(std::string& detail) {
  SceneBundle target_bundle = load_scene(kScenesDir + "/slide_target.json");
  const double gamma_star = 0.2;
  const Trajectory target = simulate(target_bundle.scene);

  OptProblem prob;
  prob.scene = target_bundle.scene;
  std::get<2>(prob.scene.friction.pairs[0]) = 0.5;
  ObjectiveTerm term = trajectory_term(prob.scene, target.u);
  term.body = 0;
  prob.objective.terms.push_back(term);
  prob.blocks = {ParamBlock::Gamma};
  prob.bounds[ParamBlock::Gamma] = {0.0, 10.0};
  prob.lbfgs.max_iterations = 40;
  prob.lbfgs.grad_tol_rel = 1e-12;
  prob.lbfgs.obj_tol_rel = 0.0;
  const auto res = minimize(prob);
  const ParamLayout layout = ParamLayout::from(prob.scene);
  const double gamma_rec = layout.block(res.params, ParamBlock::Gamma)(0);
  const double err = std::abs(gamma_rec - gamma_star) / gamma_star;
  std::ostringstream os;
  os << "gamma " << gamma_rec << " vs " << gamma_star << " (err " << 100 * err
     << "%) in " << res.trace.rows.size() << " iterations";
  detail = os.str();
  return err < 0.02;
}

bool initial_velocity_recovery(std::string& detail) {
  Scene target_scene = drop_scene(1, 8, 1, 3);
  target_scene.ic_mode = ICParameterization::PerBody;
  const Vec2 v_star(0.5, 0.0);
  const Trajectory target = simulate(target_scene);

  OptProblem prob;
  prob.scene = target_scene;
  for (int n = 0; n < prob.scene.space.n_nodes; ++n) {
    if (prob.scene.space.node_body[n] == 0) {
      prob.scene.v0(2 * n) = 0.2;
      prob.scene.v0(2 * n + 1) = 0.15;
    }
  }
  ObjectiveTerm term = trajectory_term(prob.scene, target.u);
  term.body = 0;
  prob.objective.terms.push_back(term);
  prob.blocks = {ParamBlock::V0};
  prob.lbfgs.max_iterations = 60;
  prob.lbfgs.grad_tol_rel = 1e-12;
  prob.lbfgs.obj_tol_rel = 0.0;
  const auto res = minimize(prob);
  const ParamLayout layout = ParamLayout::from(prob.scene);
  const auto v0b = layout.block(res.params, ParamBlock::V0);
  const double err =
      (Vec2(v0b(0), v0b(1)) - v_star).norm() / std::max(v_star.norm(), 1e-12);
  std::ostringstream os;
  os << "v0 (" << v0b(0) << ", " << v0b(1) << ") vs (0.5, 0), err " << 100 * err
     << "% in " << res.trace.rows.size() << " iterations";
  detail = os.str();
  return err < 0.01;
}

// ---- 7. objective library ----

bool objective_library(std::string& detail) {
  Scene s = bar_scene(1, 2, 2);
  const AssemblyCache cache = s.build_cache();
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd(0.0, 0.03);
  VecX u(s.space.n_dofs());
  for (int i = 0; i < u.size(); ++i) u(i) = nd(rng);
  const ParamLayout layout = ParamLayout::from(s);

  double worst_r = 0.0, worst_s = 0.0;
  auto fd_checks = [&](const ObjectiveTerm& term, const VecX& state) {
    const VecX R = objective_term_du(s, cache, term, state, 0);
    for (int d = 0; d < state.size(); d += 5) {
      VecX up = state, um = state;
      up(d) += 1e-6;
      um(d) -= 1e-6;
      const double fd = (objective_term_value(s, cache, term, up, 0) -
                         objective_term_value(s, cache, term, um, 0)) /
                        2e-6;
      worst_r = std::max(worst_r, std::abs(R(d) - fd) / std::max(1.0, std::abs(fd)));
    }
    GradientVector grad(layout);
    objective_term_dq(s, cache, term, state, 0, 1.0, grad);
    const auto gs = grad.block(ParamBlock::Shape);
    for (int d = 0; d < gs.size(); d += 5) {
      auto value_at = [&](double sign) {
        Scene sc = s;
        sc.mesh.rest_vertices(d / 2, d % 2) += sign * 1e-7;
        const AssemblyCache c2 = sc.build_cache();
        return objective_term_value(sc, c2, term, state, 0);
      };
      const double fd = (value_at(1.0) - value_at(-1.0)) / 2e-7;
      worst_s = std::max(worst_s, std::abs(gs(d) - fd) / std::max(1.0, std::abs(fd)));
    }
  };

  ObjectiveTerm stress;
  stress.kind = ObjectiveKind::StressLp;
  stress.p = 4.0;
  fd_checks(stress, u);
  if (objective_term_value(s, cache, stress, VecX::Zero(u.size()), 0) != 0.0) {
    detail = "stress at rest is nonzero";
    return false;
  }

  ObjectiveTerm bound;
  bound.kind = ObjectiveKind::StressBound;
  bound.stress_target = 0.0;
  fd_checks(bound, u);
  bound.stress_target = 1e12;
  if (objective_term_value(s, cache, bound, u, 0) != 0.0) {
    detail = "inactive stress penalty is nonzero";
    return false;
  }

  ObjectiveTerm tgt;
  tgt.kind = ObjectiveKind::TargetDeformation;
  tgt.target = s.space.node_positions(s.mesh.rest_vertices);
  fd_checks(tgt, u);
  {
    MatX2 match = tgt.target;
    for (int n = 0; n < s.space.n_nodes; ++n) {
      match(n, 0) += u(2 * n);
      match(n, 1) += u(2 * n + 1);
    }
    ObjectiveTerm exact = tgt;
    exact.target = match;
    if (objective_term_value(s, cache, exact, u, 0) > 1e-20) {
      detail = "exact-match target not zero";
      return false;
    }
  }
  ObjectiveTerm btgt = tgt;
  btgt.boundary_only = true;
  fd_checks(btgt, u);

  ObjectiveTerm com;
  com.kind = ObjectiveKind::ComTrajectory;
  com.com_targets = {Vec2(0.6, 0.2)};
  fd_checks(com, u);

  ObjectiveTerm height;
  height.kind = ObjectiveKind::ComHeight;
  fd_checks(height, u);

  ObjectiveTerm vol;
  vol.kind = ObjectiveKind::VolumePenalty;
  vol.volume_target = 0.2;  // active (bar volume 0.25)
  fd_checks(vol, u);
  vol.volume_target = 1.0;  // inactive
  if (objective_term_value(s, cache, vol, u, 0) != 0.0) {
    detail = "inactive volume penalty is nonzero";
    return false;
  }

  ObjectiveTerm smooth;
  smooth.kind = ObjectiveKind::BoundarySmoothing;
  {
    Scene sc = s;
    sc.mesh.rest_vertices *= 2.9;
    const AssemblyCache c2 = sc.build_cache();
    const double j1 = objective_term_value(s, cache, smooth, u, 0);
    const double j2 = objective_term_value(sc, c2, smooth, u, 0);
    if (std::abs(j1 - j2) > 1e-12 * std::max(1.0, j1)) {
      detail = "smoothing not scale invariant";
      return false;
    }
  }
  fd_checks(smooth, u);

  ObjectiveTerm msmooth;
  msmooth.kind = ObjectiveKind::MaterialSmoothing;
  {
    Scene sc = s;
    std::mt19937_64 rng2(4);
    std::uniform_real_distribution<double> ud(0.5, 2.0);
    for (int e = 0; e < sc.mesh.n_triangles(); ++e) {
      sc.material.lambda(e) *= ud(rng2);
      sc.material.mu(e) *= ud(rng2);
    }
    const AssemblyCache c2 = sc.build_cache();
    GradientVector grad(layout);
    objective_term_dq(sc, c2, msmooth, u, 0, 1.0, grad);
    for (ParamBlock b : {ParamBlock::Lambda, ParamBlock::Mu}) {
      const auto gb = grad.block(b);
      for (int e = 0; e < gb.size(); ++e) {
        auto value_at = [&](double sign) {
          Scene sc2 = sc;
          (b == ParamBlock::Lambda ? sc2.material.lambda(e) : sc2.material.mu(e)) +=
              sign * 1e-6;
          return objective_term_value(sc2, c2, msmooth, u, 0);
        };
        const double fd = (value_at(1.0) - value_at(-1.0)) / 2e-6;
        worst_s = std::max(worst_s, std::abs(gb(e) - fd) / std::max(1.0, std::abs(fd)));
      }
    }
    if (objective_term_value(s, cache, msmooth, u, 0) != 0.0) {
      detail = "uniform material smoothing not zero";
      return false;
    }
  }

  std::ostringstream os;
  os << "worst R err " << worst_r << ", worst S err " << worst_s;
  detail = os.str();
  return worst_r < 1e-5 && worst_s < 1e-5;
}

// ---- 8. determinism ----

bool determinism(std::string& detail) {
  auto run_once = [&]() {
    SceneBundle bundle = load_scene(kScenesDir + "/drop.json");
    const ParamLayout layout = ParamLayout::from(bundle.scene);
    const Trajectory traj = simulate(bundle.scene);
    const auto res = compute_objective_gradient(bundle.scene, bundle.objective, layout);
    return std::make_pair(traj.u, res.grad.data);
  };
  const auto [u1, g1] = run_once();
  const auto [u2, g2] = run_once();
  for (size_t i = 0; i < u1.size(); ++i) {
    if (std::memcmp(u1[i].data(), u2[i].data(), sizeof(double) * u1[i].size()) != 0) {
      detail = "trajectory differs at step " + std::to_string(i);
      return false;
    }
  }
  if (std::memcmp(g1.data(), g2.data(), sizeof(double) * g1.size()) != 0) {
    detail = "gradients differ";
    return false;
  }
  detail = "trajectories and gradients bitwise identical";
  return true;
}

}  // namespace

int main() {
  std::vector<Criterion> criteria = {
      {"master gradient suite (all blocks, BDF1+BDF2, rel err < 1e-5)",
       master_gradient_suite},
      {"dense-KKT oracle (multipliers and gradient, 1e-10)", dense_kkt_oracle},
      {"adjoint overhead <= 2.5x forward", adjoint_overhead},
      {"feasibility: positive distances and det F on all scenes",
       feasibility_invariants},
      {"forward correctness: patch test, bar, free flight", forward_correctness},
      {"material recovery within 1%", material_recovery},
      {"friction recovery within 2%", friction_recovery},
      {"initial-velocity recovery within 1%", initial_velocity_recovery},
      {"objective library R/S checks and trivial cases", objective_library},
      {"determinism: repeated runs bitwise identical", determinism},
  };

  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    std::string detail;
    bool ok = false;
    try {
      ok = criteria[i].run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] %zu. %s%s%s\n", ok ? "PASS" : "FAIL", i + 1,
                criteria[i].name.c_str(), detail.empty() ? "" : " -- ",
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
