#include <elastodiff/adjoint.hpp>
#include <elastodiff/errors.hpp>

#include <Eigen/SparseLU>

#include <chrono>

namespace elastodiff {

namespace {

SpMat reduce(const SpMat& full, const FESpace& space) {
  std::vector<Triplet> trips;
  trips.reserve(full.nonZeros());
  for (int k = 0; k < full.outerSize(); ++k)
    for (SpMat::InnerIterator it(full, k); it; ++it)
      trips.emplace_back(it.row(), it.col(), it.value());
  return build_reduced(trips, space);
}

VecX solve_lu(const SpMat& A, const VecX& rhs, const char* what) {
  SpMat Ac = A;
  Ac.makeCompressed();
  Eigen::SparseLU<SpMat> lu(Ac);
  if (lu.info() != Eigen::Success) throw SingularSystem(what);
  VecX x = lu.solve(rhs);
  if (!x.allFinite()) throw SingularSystem(what);
  return x;
}

}  // namespace

AdjointState transient_adjoint(const Scene& scene, const AssemblyCache& cache,
                               const Trajectory& traj, const ObjectiveSpec& objective) {
  const auto t_start = std::chrono::steady_clock::now();
  const auto& space = scene.space;
  const int N = scene.n_steps;
  const BdfScheme scheme(scene.bdf_order);
  const int m = scheme.order;

  const SpMat mass = assemble_mass(cache, space, scene.material);
  const SpMat mass_ff = reduce(mass, space);

  AdjointState adj;
  adj.p.assign(N + 1, VecX::Zero(space.n_free));
  adj.nu.assign(N + 1, VecX::Zero(space.n_free));

  // Backward sweep needs, at step i, the current system and the
  // previous-displacement coupling of step i+1.
  StepSystem sys_next;  // system of step i+1 (empty at i = N)
  for (int i = N; i >= 1; --i) {
    StepSystem sys = assemble_step_system(scene, cache, mass, traj, i);
    const SpMat G = reduce(sys.dforce_du, space);

    // alpha-weighted combinations of later multipliers
    VecX nu_comb = VecX::Zero(space.n_free);
    VecX p_comb = VecX::Zero(space.n_free);
    for (int j = 1; j <= std::min(m, N - i); ++j) {
      const double a = scheme.alpha(i + j, j);
      nu_comb += a * adj.nu[i + j];
      p_comb += a * adj.p[i + j];
    }

    VecX rhs = -(mass_ff * nu_comb);
    rhs -= sys.beta_dt * (G.transpose() * p_comb);
    if (i < N) {
      const SpMat H_next = reduce(sys_next.dforce_duprev, space);
      rhs += sys_next.beta_dt * (H_next.transpose() * adj.p[i + 1]);
    }
    rhs -= space.restrict_free(
        objective_du_transient(scene, cache, objective, traj.u[i], i));

    const SpMat K = SpMat(mass_ff) - SpMat(sys.beta_dt * sys.beta_dt * G.transpose());
    adj.nu[i] = solve_lu(K, rhs, "transient adjoint step");
    adj.p[i] = sys.beta_dt * adj.nu[i] - p_comb;
    sys_next = std::move(sys);
  }

  // step-0 conditions (initial-condition multipliers)
  VecX mu0 = -space.restrict_free(
      objective_du_transient(scene, cache, objective, traj.u[0], 0));
  VecX p0 = VecX::Zero(space.n_free);
  for (int j = 1; j <= std::min(m, N); ++j) {
    const double a = scheme.alpha(j, j);
    mu0 -= a * (mass_ff * adj.nu[j]);
    p0 -= a * (mass_ff * adj.p[j]);
  }
  if (N >= 1) {
    const SpMat H1 = reduce(sys_next.dforce_duprev, space);  // sys_next holds step 1
    mu0 += sys_next.beta_dt * (H1.transpose() * adj.p[1]);
  }
  adj.mu0 = mu0;
  adj.p[0] = p0;

  adj.adjoint_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return adj;
}

void add_force_parameter_products(const Scene& scene, const AssemblyCache& cache,
                                  const VecX& u_full, const VecX* u_prev_full,
                                  const std::vector<ContactPair>* lagged_pairs,
                                  double time, const VecX& p_full, double factor,
                                  GradientVector& grad) {
  const int nv = scene.mesh.n_vertices();
  auto gshape = grad.block(ParamBlock::Shape);

  gshape += factor * scene.neumann_shape_product(time, p_full);
  gshape += factor * body_force_shape_product(cache, scene.space, scene.material,
                                              scene.gravity, p_full, nv);
  gshape -= factor * internal_force_shape_product(cache, scene.space, scene.material,
                                                  u_full, p_full, nv);

  VecX dlam, dmu;
  internal_force_material_products(cache, scene.space, scene.material, u_full, p_full,
                                   dlam, dmu);
  grad.block(ParamBlock::Lambda) -= factor * dlam;
  grad.block(ParamBlock::Mu) -= factor * dmu;

  if (scene.contact_enabled) {
    const auto pairs =
        build_active_set(scene.mesh, scene.mesh.rest_vertices, u_full, scene.barrier);
    gshape += factor * contact_shape_product(scene.mesh, scene.mesh.rest_vertices,
                                             u_full, scene.barrier, pairs, p_full);
  }

  if (u_prev_full && scene.damping.active()) {
    gshape -= factor * damping_shape_product(cache, scene.space, scene.damping, u_full,
                                             *u_prev_full, scene.dt, p_full, nv);
    double da, db;
    damping_coeff_products(cache, scene.space, scene.damping, u_full, *u_prev_full,
                           scene.dt, p_full, da, db);
    grad.block(ParamBlock::Alpha)(0) -= factor * da;
    grad.block(ParamBlock::Beta)(0) -= factor * db;
  }

  if (u_prev_full && lagged_pairs && scene.contact_enabled && scene.friction.any()) {
    gshape += factor * friction_shape_product(scene.mesh, scene.mesh.rest_vertices,
                                              scene.barrier, scene.friction,
                                              *lagged_pairs, u_full, *u_prev_full,
                                              p_full);
  }
  if (u_prev_full && lagged_pairs && scene.contact_enabled &&
      scene.friction.n_pairs() > 0) {
    grad.block(ParamBlock::Gamma) +=
        factor * friction_gamma_product(scene.mesh, scene.mesh.rest_vertices,
                                        scene.barrier, scene.friction, *lagged_pairs,
                                        u_full, *u_prev_full, p_full);
  }
}

GradientVector accumulate_gradient(const Scene& scene, const AssemblyCache& cache,
                                   const Trajectory& traj, const AdjointState& adj,
                                   const ObjectiveSpec& objective,
                                   const ParamLayout& layout) {
  const auto& space = scene.space;
  const int N = scene.n_steps;
  const BdfScheme scheme(scene.bdf_order);

  GradientVector grad(layout);

  // objective partials in q
  for (const auto& term : objective.terms) {
    if (!objective_depends_on_u(term.kind)) {
      objective_term_dq(scene, cache, term, traj.u[0], 0, term.weight, grad);
      continue;
    }
    for (int i = 0; i <= N; ++i) {
      const double w = term.weight * term_time_weight(term, scene, i);
      if (w != 0.0) objective_term_dq(scene, cache, term, traj.u[i], i, w, grad);
    }
  }

  // per-step force products and mass terms
  for (int i = 1; i <= N; ++i) {
    const double beta_dt = scheme.beta(i) * scene.dt;
    const VecX p_full = space.prolong_free(adj.p[i], 0.0);

    // lagged pairs are needed whenever gamma gradients are requested, even
    // at gamma = 0 (the force vanishes there but its gamma-derivative does not)
    std::vector<ContactPair> lagged_pairs;
    if (scene.contact_enabled && scene.friction.n_pairs() > 0)
      lagged_pairs = build_active_set(scene.mesh, scene.mesh.rest_vertices,
                                      traj.u[i - 1], scene.barrier);
    add_force_parameter_products(scene, cache, traj.u[i], &traj.u[i - 1], &lagged_pairs,
                                 i * scene.dt, p_full, -beta_dt, grad);

    VecX dv = traj.v[i];
    for (int j = 1; j <= scheme.effective_order(i); ++j)
      dv += scheme.alpha(i, j) * traj.v[i - j];
    grad.block(ParamBlock::Shape) +=
        mass_shape_product(cache, space, scene.material, p_full, dv, layout.n_vertices);
  }

  // initial-condition blocks: d(g_u)/d(u0 params) and d(g_v)/d(v0 params)
  accumulate_ic_gradient(scene, layout, -space.prolong_free(adj.mu0, 0.0),
                         grad.block(ParamBlock::U0));
  accumulate_ic_gradient(scene, layout, -space.prolong_free(adj.p[0], 0.0),
                         grad.block(ParamBlock::V0));

  return grad;
}

VecX static_adjoint(const Scene& scene, const AssemblyCache& cache, const VecX& u_full,
                    const ObjectiveSpec& objective) {
  const auto& space = scene.space;
  const auto forces =
      eval_step_forces(scene, cache, nullptr, u_full, nullptr, nullptr, 0.0, true);
  const SpMat G = reduce(forces.dforce_du, space);
  VecX rhs = VecX::Zero(space.n_free);
  for (const auto& term : objective.terms) {
    if (!objective_depends_on_u(term.kind)) continue;
    rhs -= term.weight *
           space.restrict_free(objective_term_du(scene, cache, term, u_full, 0));
  }
  return solve_lu(SpMat(G.transpose()), rhs, "static adjoint");
}

GradientVector static_gradient(const Scene& scene, const AssemblyCache& cache,
                               const VecX& u_full, const VecX& p_free,
                               const ObjectiveSpec& objective,
                               const ParamLayout& layout) {
  GradientVector grad(layout);
  for (const auto& term : objective.terms)
    objective_term_dq(scene, cache, term, u_full, 0, term.weight, grad);
  const VecX p_full = scene.space.prolong_free(p_free, 0.0);
  add_force_parameter_products(scene, cache, u_full, nullptr, nullptr, 0.0, p_full, 1.0,
                               grad);
  return grad;
}

GradientResult compute_objective_gradient(const Scene& scene,
                                          const ObjectiveSpec& objective,
                                          const ParamLayout& layout) {
  GradientResult out{0.0, GradientVector(layout), 0.0, 0.0};
  const AssemblyCache cache = scene.build_cache();
  if (scene.transient()) {
    const Trajectory traj = simulate(scene);
    out.forward_seconds = traj.forward_seconds;
    out.objective = objective_value_transient(scene, cache, objective, traj.u);
    const auto t0 = std::chrono::steady_clock::now();
    const AdjointState adj = transient_adjoint(scene, cache, traj, objective);
    out.grad = accumulate_gradient(scene, cache, traj, adj, objective, layout);
    out.adjoint_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  } else {
    const auto t_f = std::chrono::steady_clock::now();
    const VecX u = static_solve(scene);
    out.forward_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_f).count();
    out.objective = objective_value_static(scene, cache, objective, u);
    const auto t0 = std::chrono::steady_clock::now();
    const VecX p = static_adjoint(scene, cache, u, objective);
    out.grad = static_gradient(scene, cache, u, p, objective, layout);
    out.adjoint_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return out;
}

double evaluate_objective(const Scene& scene, const ObjectiveSpec& objective) {
  const AssemblyCache cache = scene.build_cache();
  if (scene.transient()) {
    const Trajectory traj = simulate(scene);
    return objective_value_transient(scene, cache, objective, traj.u);
  }
  const VecX u = static_solve(scene);
  return objective_value_static(scene, cache, objective, u);
}

}  // namespace elastodiff
