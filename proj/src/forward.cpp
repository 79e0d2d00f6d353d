#include <elastodiff/errors.hpp>
#include <elastodiff/forward.hpp>

#include <Eigen/SparseLU>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cmath>

namespace elastodiff {

namespace {
const std::array<std::vector<double>, 3> kBdfAlpha = {
    std::vector<double>{-1.0},
    std::vector<double>{-4.0 / 3.0, 1.0 / 3.0},
    std::vector<double>{-18.0 / 11.0, 9.0 / 11.0, -2.0 / 11.0}};
const std::array<double, 3> kBdfBeta = {1.0, 2.0 / 3.0, 6.0 / 11.0};
}  // namespace

double BdfScheme::beta(int step) const { return kBdfBeta[effective_order(step) - 1]; }

double BdfScheme::alpha(int step, int lag) const {
  const int eo = effective_order(step);
  if (lag < 1 || lag > eo) return 0.0;
  return kBdfAlpha[eo - 1][lag - 1];
}

StepForces eval_step_forces(const Scene& scene, const AssemblyCache& cache,
                            const SpMat* /*mass*/, const VecX& u_full,
                            const VecX* u_prev_full,
                            const std::vector<ContactPair>* lagged_pairs, double time,
                            bool need_jacobians, bool stabilized_jacobians) {
  StepForces out;
  const int n = scene.space.n_dofs();
  out.force = scene.neumann_force(time);
  out.force += assemble_body_force(cache, scene.space, scene.material, scene.gravity);
  out.force -= assemble_internal_force(cache, scene.space, scene.material, u_full);

  std::vector<Triplet> trips_u, trips_prev;
  if (need_jacobians)
    add_internal_force_jacobian(cache, scene.space, scene.material, u_full, -1.0,
                                trips_u);

  if (scene.contact_enabled) {
    const auto pairs =
        build_active_set(scene.mesh, scene.mesh.rest_vertices, u_full, scene.barrier);
    add_contact_forces(scene.mesh, scene.mesh.rest_vertices, u_full, scene.barrier,
                       pairs, out.force, need_jacobians ? &trips_u : nullptr, 1.0,
                       stabilized_jacobians);
  }

  const bool with_history = u_prev_full != nullptr;
  if (with_history && scene.damping.active()) {
    out.force -= assemble_damping_force(cache, scene.space, scene.damping, u_full,
                                        *u_prev_full, scene.dt);
    if (need_jacobians)
      add_damping_jacobians(cache, scene.space, scene.damping, u_full, *u_prev_full,
                            scene.dt, -1.0, &trips_u, &trips_prev);
  }
  if (with_history && scene.contact_enabled && lagged_pairs && scene.friction.any()) {
    add_friction_forces(scene.mesh, scene.mesh.rest_vertices, scene.barrier,
                        scene.friction, *lagged_pairs, u_full, *u_prev_full, out.force,
                        need_jacobians ? &trips_u : nullptr,
                        need_jacobians ? &trips_prev : nullptr, 1.0);
  }

  if (need_jacobians) {
    out.dforce_du = build_full(trips_u, n);
    out.dforce_duprev = build_full(trips_prev, n);
  }
  return out;
}

double inversion_max_step(const AssemblyCache& cache, const VecX& u_full,
                          const VecX& du_full) {
  double t_allow = 1.0;
  for (const auto& e : cache.elems) {
    for (size_t q = 0; q < e.w.size(); ++q) {
      const Mat2 F = element_grad(e, u_full, q) + Mat2::Identity();
      const Mat2 B = element_grad(e, du_full, q);
      const double c0 = F.determinant();
      const double c1 = F(0, 0) * B(1, 1) + B(0, 0) * F(1, 1) - F(0, 1) * B(1, 0) -
                        B(0, 1) * F(1, 0);
      const double c2 = B.determinant();
      // smallest positive root of c0 + c1 t + c2 t^2
      double root = std::numeric_limits<double>::infinity();
      if (std::abs(c2) < 1e-300) {
        if (c1 < 0.0) root = -c0 / c1;
      } else {
        const double disc = c1 * c1 - 4.0 * c2 * c0;
        if (disc >= 0.0) {
          const double sq = std::sqrt(disc);
          for (double r : {(-c1 - sq) / (2.0 * c2), (-c1 + sq) / (2.0 * c2)})
            if (r > 0.0) root = std::min(root, r);
        }
      }
      if (std::isfinite(root)) t_allow = std::min(t_allow, 0.9 * root);
    }
  }
  return std::max(t_allow, 0.0);
}

namespace {

struct LinearSolver {
  Eigen::SparseLU<SpMat> lu;

  VecX solve(SpMat A, const VecX& rhs, const char* what) {
    A.makeCompressed();
    lu.compute(A);
    if (lu.info() == Eigen::Success) {
      VecX x = lu.solve(rhs);
      if (x.allFinite()) return x;
    }
    // escalating diagonal shift
    double base = 0.0;
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it)
        base = std::max(base, std::abs(it.value()));
    base = std::max(base, 1e-30);
    SpMat I(A.rows(), A.cols());
    I.setIdentity();
    for (double shift = 1e-12; shift <= 1e-2; shift *= 100.0) {
      SpMat As = A + (shift * base) * I;
      As.makeCompressed();
      lu.compute(As);
      if (lu.info() == Eigen::Success) {
        VecX x = lu.solve(rhs);
        if (x.allFinite()) return x;
      }
    }
    throw SingularSystem(what);
  }
};

struct NewtonProblem {
  std::function<VecX(const VecX&)> residual;              // free -> free
  std::function<SpMat(const VecX&)> jacobian;             // free -> free x free
  std::function<double(const VecX&, const VecX&)> max_step;  // feasibility filter
  double tol_target = 0.0;
  double tol_accept = 0.0;
  int max_iters = 200;
};

NewtonStats newton_solve(const NewtonProblem& prob, VecX& u) {
  NewtonStats stats;
  LinearSolver solver;
  VecX R = prob.residual(u);
  double norm = R.lpNorm<Eigen::Infinity>();
  double merit = 0.5 * R.squaredNorm();
  int stall = 0;
  const bool trace = std::getenv("ELASTODIFF_NEWTON_TRACE") != nullptr;

  // Armijo backtracking on the merit 1/2 |R|^2 along `dir`, starting from
  // the feasibility-filtered step. `slope` is the directional derivative of
  // the merit at u (for the Newton direction it is exactly -|R|^2).
  auto line_search = [&](const VecX& dir, double slope) {
    const double t_max = std::min(prob.max_step(u, dir), 1.0);
    double t = t_max;
    while (t > 1e-14) {
      const VecX u_try = u + t * dir;
      bool ok = true;
      VecX R_new;
      try {
        R_new = prob.residual(u_try);
        if (!R_new.allFinite()) ok = false;
      } catch (const Error&) {
        ok = false;
      }
      if (ok) {
        const double merit_new = 0.5 * R_new.squaredNorm();
        if (merit_new <= merit + 1e-4 * t * slope) {
          u = u_try;
          R = std::move(R_new);
          merit = merit_new;
          norm = R.lpNorm<Eigen::Infinity>();
          return true;
        }
      }
      t *= 0.5;
    }
    return false;
  };

  for (int iter = 0; iter < prob.max_iters; ++iter) {
    if (norm <= prob.tol_target) break;
    const double norm_before = norm;
    const SpMat K = prob.jacobian(u);
    const VecX dir = solver.solve(K, -R, "newton step");
    if (trace)
      std::fprintf(stderr, "  newton it %d |R| %.3e |d| %.3e tol %.1e/%.1e\n", iter,
                   norm, dir.lpNorm<Eigen::Infinity>(), prob.tol_target,
                   prob.tol_accept);

    bool accepted = line_search(dir, -2.0 * merit);
    if (!accepted) {
      // Levenberg-Marquardt escalation on the merit: interpolates between
      // the Newton step and scaled steepest descent; every candidate is a
      // strict descent direction of 1/2 |R|^2, which rides out near-singular
      // jacobians at contact-regime and friction-saturation kinks.
      const SpMat KtK = SpMat(K.transpose() * K);
      const VecX g = K.transpose() * R;
      double diag_scale = 0.0;
      for (int k = 0; k < KtK.outerSize(); ++k)
        for (SpMat::InnerIterator it(KtK, k); it; ++it)
          if (it.row() == it.col()) diag_scale = std::max(diag_scale, it.value());
      diag_scale = std::max(diag_scale, 1e-300);
      SpMat I(KtK.rows(), KtK.cols());
      I.setIdentity();
      for (double lm = 1e-8; lm <= 1e4 && !accepted; lm *= 100.0) {
        SpMat A = KtK + (lm * diag_scale) * I;
        A.makeCompressed();
        Eigen::SimplicialLDLT<SpMat> ldlt(A);
        if (ldlt.info() != Eigen::Success) continue;
        const VecX d_lm = ldlt.solve(-g);
        if (!d_lm.allFinite()) continue;
        accepted = line_search(d_lm, g.dot(d_lm));
      }
    }
    stats.iterations = iter + 1;
    if (!accepted) {
      if (norm <= prob.tol_accept) break;
      throw NewtonDivergence("line search failed at residual " + std::to_string(norm));
    }
    if (norm > 0.999 * norm_before) {
      if (++stall >= 25) {
        if (norm <= prob.tol_accept) break;
        throw NewtonDivergence("stalled at residual " + std::to_string(norm));
      }
    } else {
      stall = 0;
    }
  }
  if (norm > prob.tol_accept)
    throw NewtonDivergence("no convergence: residual " + std::to_string(norm));
  stats.residual = norm;
  return stats;
}

double characteristic_force(const SpMat& mass, double char_vel, double beta_dt) {
  double mass_inf = 0.0;
  for (int k = 0; k < mass.outerSize(); ++k)
    for (SpMat::InnerIterator it(mass, k); it; ++it)
      mass_inf = std::max(mass_inf, std::abs(it.value()));
  return std::max(mass_inf * std::max(char_vel, 1e-8) / beta_dt, 1e-20);
}

double feasibility_filter(const Scene& scene, const AssemblyCache& cache,
                          const VecX& u_full, const VecX& du_full) {
  double t = 1.0;
  if (scene.contact_enabled)
    t = std::min(t, ccd_max_step(scene.mesh, scene.mesh.rest_vertices, u_full, du_full));
  if (scene.material.model == MaterialModel::NeoHookean)
    t = std::min(t, inversion_max_step(cache, u_full, du_full));
  return t;
}

void record_state_stats(const Scene& scene, const AssemblyCache& cache,
                        const VecX& u_full, NewtonStats& stats) {
  if (scene.contact_enabled)
    stats.min_distance =
        min_contact_distance(scene.mesh, scene.mesh.rest_vertices, u_full);
  if (scene.material.model == MaterialModel::NeoHookean) {
    double mind = std::numeric_limits<double>::infinity();
    for (const auto& e : cache.elems)
      for (size_t q = 0; q < e.w.size(); ++q)
        mind = std::min(
            mind, (element_grad(e, u_full, q) + Mat2::Identity()).determinant());
    stats.min_detF = mind;
  }
}

}  // namespace

Trajectory simulate_from_history(const Scene& scene, const std::vector<VecX>& u_hist,
                                 const std::vector<VecX>& v_hist) {
  if (!scene.transient()) throw Error("simulate requires a transient scene");
  const auto t_start = std::chrono::steady_clock::now();
  const AssemblyCache cache = scene.build_cache();
  const SpMat mass = assemble_mass(cache, scene.space, scene.material);
  const BdfScheme scheme(scene.bdf_order);
  const auto& space = scene.space;

  Trajectory traj;
  traj.u = u_hist;
  traj.v = v_hist;
  const int start = static_cast<int>(u_hist.size());
  traj.u.resize(scene.n_steps + 1);
  traj.v.resize(scene.n_steps + 1);
  traj.stats.resize(scene.n_steps + 1);

  for (int i = start; i <= scene.n_steps; ++i) {
    const double time = i * scene.dt;
    const int eo = scheme.effective_order(i);
    const double beta_dt = scheme.beta(i) * scene.dt;

    // history combinations
    VecX u_hist_comb = VecX::Zero(space.n_dofs());
    VecX v_hist_comb = VecX::Zero(space.n_dofs());
    for (int j = 1; j <= eo; ++j) {
      u_hist_comb += scheme.alpha(i, j) * traj.u[i - j];
      v_hist_comb += scheme.alpha(i, j) * traj.v[i - j];
    }

    // full template with Dirichlet values of this step
    VecX u_template = traj.u[i - 1];
    scene.apply_dirichlet(u_template, time);

    auto to_full = [&](const VecX& u_free) {
      VecX full = u_template;
      for (int k = 0; k < space.n_free; ++k) full(space.free_to_full[k]) = u_free(k);
      return full;
    };

    double char_vel = traj.v[i - 1].lpNorm<Eigen::Infinity>();
    char_vel = std::max(char_vel, scene.gravity.norm() * scene.dt);
    const double scale = characteristic_force(mass, char_vel, beta_dt);

    // one implicit solve with the given friction coefficients
    auto solve_step = [&](const Scene& sc, VecX& u_free, double tol_target,
                          double tol_accept) {
      std::vector<ContactPair> lagged_pairs;
      if (sc.contact_enabled && sc.friction.any())
        lagged_pairs = build_active_set(sc.mesh, sc.mesh.rest_vertices, traj.u[i - 1],
                                        sc.barrier);
      NewtonProblem prob;
      prob.residual = [&, lagged_pairs](const VecX& uf) {
        const VecX u_full = to_full(uf);
        const auto forces = eval_step_forces(sc, cache, &mass, u_full, &traj.u[i - 1],
                                             &lagged_pairs, time, false);
        const VecX v_i = (u_full + u_hist_comb) / beta_dt;
        return space.restrict_free(
            VecX(mass * (v_i + v_hist_comb) - beta_dt * forces.force));
      };
      prob.jacobian = [&, lagged_pairs](const VecX& uf) {
        const VecX u_full = to_full(uf);
        const auto forces = eval_step_forces(sc, cache, &mass, u_full, &traj.u[i - 1],
                                             &lagged_pairs, time, true, true);
        SpMat K = SpMat(mass / beta_dt) - SpMat(beta_dt * forces.dforce_du);
        std::vector<Triplet> trips;
        trips.reserve(K.nonZeros());
        for (int k = 0; k < K.outerSize(); ++k)
          for (SpMat::InnerIterator it(K, k); it; ++it)
            trips.emplace_back(it.row(), it.col(), it.value());
        return build_reduced(trips, space);
      };
      prob.max_step = [&](const VecX& uf, const VecX& du_free) {
        return feasibility_filter(sc, cache, to_full(uf),
                                  space.prolong_free(du_free, 0.0));
      };
      prob.tol_target = tol_target;
      prob.tol_accept = tol_accept;
      return newton_solve(prob, u_free);
    };

    // predictor, feasibility-filtered
    VecX u_free = space.restrict_free(u_template);
    {
      const VecX pred_full = space.prolong_free(
          space.restrict_free(scene.dt * traj.v[i - 1]), 0.0);
      const double t_pred =
          0.5 * feasibility_filter(scene, cache, to_full(u_free), pred_full);
      u_free += t_pred * space.restrict_free(scene.dt * traj.v[i - 1]);
    }

    NewtonStats stats;
    try {
      stats = solve_step(scene, u_free, 1e-12 * scale, 1e-8 * scale);
    } catch (const NewtonDivergence&) {
      // Stick-slip transitions can strand Newton between friction branches.
      // Re-solve the identical step warm-started through a friction
      // continuation ladder; the final system is unchanged.
      u_free = space.restrict_free(u_template);
      bool solved = false;
      for (double fs : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        Scene relaxed = scene;
        for (auto& pair : relaxed.friction.pairs) std::get<2>(pair) *= fs;
        try {
          if (fs < 1.0) {
            solve_step(relaxed, u_free, 1e-8 * scale, 1e-4 * scale);
          } else {
            stats = solve_step(scene, u_free, 1e-12 * scale, 1e-8 * scale);
            solved = true;
          }
        } catch (const NewtonDivergence& e) {
          if (fs == 1.0)
            throw NewtonDivergence("step " + std::to_string(i) + ": " + e.what());
        }
      }
      if (!solved)
        throw NewtonDivergence("step " + std::to_string(i) + ": continuation failed");
    }

    traj.u[i] = to_full(u_free);
    traj.v[i] = (traj.u[i] + u_hist_comb) / beta_dt;
    record_state_stats(scene, cache, traj.u[i], stats);
    traj.stats[i] = stats;
  }
  traj.forward_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return traj;
}

Trajectory simulate(const Scene& scene) {
  VecX u0 = scene.u0;
  scene.apply_dirichlet(u0, 0.0);
  // Initial velocity on Dirichlet DOFs is prescribed data, not a parameter:
  // take the forward difference of the boundary tables at t = 0.
  VecX v0 = scene.v0;
  VecX ud0 = VecX::Zero(v0.size()), udh = VecX::Zero(v0.size());
  scene.apply_dirichlet(ud0, 0.0);
  scene.apply_dirichlet(udh, scene.dt);
  for (int d = 0; d < scene.space.n_dofs(); ++d)
    if (scene.space.dof_is_dirichlet[d]) v0(d) = (udh(d) - ud0(d)) / scene.dt;
  return simulate_from_history(scene, {u0}, {v0});
}

VecX static_solve(const Scene& scene) {
  const AssemblyCache cache = scene.build_cache();
  const auto& space = scene.space;

  VecX u_template = VecX::Zero(space.n_dofs());
  scene.apply_dirichlet(u_template, 0.0);
  auto to_full = [&](const VecX& u_free) {
    VecX full = u_template;
    for (int k = 0; k < space.n_free; ++k) full(space.free_to_full[k]) = u_free(k);
    return full;
  };

  NewtonProblem prob;
  prob.residual = [&](const VecX& u_free) {
    const auto forces =
        eval_step_forces(scene, cache, nullptr, to_full(u_free), nullptr, nullptr, 0.0,
                         false);
    return VecX(-space.restrict_free(forces.force));
  };
  prob.jacobian = [&](const VecX& u_free) {
    const auto forces =
        eval_step_forces(scene, cache, nullptr, to_full(u_free), nullptr, nullptr, 0.0,
                         true, true);
    SpMat K = -forces.dforce_du;
    std::vector<Triplet> trips;
    trips.reserve(K.nonZeros());
    for (int k = 0; k < K.outerSize(); ++k)
      for (SpMat::InnerIterator it(K, k); it; ++it)
        trips.emplace_back(it.row(), it.col(), it.value());
    return build_reduced(trips, space);
  };
  prob.max_step = [&](const VecX& u_free, const VecX& du_free) {
    return feasibility_filter(scene, cache, to_full(u_free),
                              space.prolong_free(du_free, 0.0));
  };

  const VecX f_ext = scene.neumann_force(0.0) +
                     assemble_body_force(cache, scene.space, scene.material, scene.gravity);
  double scale = f_ext.lpNorm<Eigen::Infinity>();
  if (scale <= 0.0) {
    // fall back to a stiffness-based scale
    scale = scene.material.mu.maxCoeff();
  }
  prob.tol_target = 1e-12 * scale;
  prob.tol_accept = 1e-8 * scale;

  VecX u_free = space.restrict_free(u_template);
  newton_solve(prob, u_free);
  return to_full(u_free);
}

StepSystem assemble_step_system(const Scene& scene, const AssemblyCache& cache,
                                const SpMat& mass, const Trajectory& traj, int step) {
  StepSystem out;
  const BdfScheme scheme(scene.bdf_order);
  out.beta_dt = scheme.beta(step) * scene.dt;
  std::vector<ContactPair> lagged_pairs;
  if (scene.contact_enabled && scene.friction.any())
    lagged_pairs = build_active_set(scene.mesh, scene.mesh.rest_vertices,
                                    traj.u[step - 1], scene.barrier);
  const auto forces =
      eval_step_forces(scene, cache, &mass, traj.u[step], &traj.u[step - 1],
                       &lagged_pairs, step * scene.dt, true);
  out.dforce_du = forces.dforce_du;
  out.dforce_duprev = forces.dforce_duprev;
  return out;
}

}  // namespace elastodiff
