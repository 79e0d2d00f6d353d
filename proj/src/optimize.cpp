#include <elastodiff/errors.hpp>
#include <elastodiff/optimize.hpp>

#include <chrono>
#include <deque>

namespace elastodiff {

LineSearchResult armijo_backtrack(const LbfgsEval& evaluate, const VecX& x, double f0,
                                  const VecX& g0, const VecX& dir,
                                  const LbfgsOptions& opts,
                                  const std::function<VecX(const VecX&)>& project,
                                  double t_init) {
  LineSearchResult r;
  const double slope = g0.dot(dir);
  double t = t_init;
  for (int h = 0; h <= opts.max_halvings; ++h, t *= 0.5) {
    const VecX xc = project ? project(x + t * dir) : VecX(x + t * dir);
    if ((xc - x).lpNorm<Eigen::Infinity>() == 0.0) continue;  // clamped in place
    double fc;
    VecX gc(x.size());
    if (!evaluate(xc, fc, gc)) continue;
    if (std::isfinite(fc) && fc <= f0 + opts.armijo_c * t * slope) {
      r.ok = true;
      r.t = t;
      r.x = xc;
      r.f = fc;
      r.g = gc;
      return r;
    }
  }
  return r;
}

LbfgsResult lbfgs_minimize(
    const LbfgsEval& evaluate, VecX x0, const LbfgsOptions& opts,
    const std::function<VecX(const VecX&)>& project,
    const std::function<void(const TraceRow&, const VecX&)>& on_iteration) {
  const auto t_start = std::chrono::steady_clock::now();
  auto clamp = [&](const VecX& x) { return project ? project(x) : x; };

  VecX x = clamp(x0);
  double f;
  VecX g(x.size());
  if (!evaluate(x, f, g)) throw ForwardSolveFailure("objective evaluation at x0 failed");

  // stationarity measure: projected-gradient step displacement (reduces to
  // the gradient norm without bounds)
  auto stationarity = [&](const VecX& xc, const VecX& gc) {
    return (clamp(xc - gc) - xc).norm();
  };
  const double stat0 = stationarity(x, g);

  std::deque<std::pair<VecX, VecX>> pairs;  // (s, y)
  std::deque<double> recent_f{f};

  LbfgsResult result;
  result.x = x;
  result.objective = f;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    if (stationarity(x, g) <= opts.grad_tol_rel * std::max(stat0, 1e-300)) {
      result.status = OptStatus::GradientTolerance;
      break;
    }

    // two-loop recursion
    VecX d = -g;
    bool reset_used = false;
    if (!pairs.empty()) {
      std::vector<double> alpha(pairs.size());
      for (int k = static_cast<int>(pairs.size()) - 1; k >= 0; --k) {
        const auto& [s, y] = pairs[k];
        alpha[k] = s.dot(d) / y.dot(s);
        d -= alpha[k] * y;
      }
      const auto& [s_last, y_last] = pairs.back();
      d *= s_last.dot(y_last) / y_last.dot(y_last);
      for (size_t k = 0; k < pairs.size(); ++k) {
        const auto& [s, y] = pairs[k];
        const double beta = y.dot(d) / y.dot(s);
        d += (alpha[k] - beta) * s;
      }
    }
    if (d.dot(g) >= 0.0) {
      pairs.clear();
      d = -g;
      reset_used = true;
    }

    // without curvature information, normalize the first trial step to
    // unit length so tiny gradients still produce a usable probe
    auto first_step = [&](const VecX& dir) {
      return pairs.empty() ? std::min(1.0 / std::max(dir.norm(), 1e-300), 1e12) : 1.0;
    };
    LineSearchResult ls = armijo_backtrack(evaluate, x, f, g, d, opts, project,
                                           first_step(d));
    if (!ls.ok && !reset_used) {
      // Hessian reset fallback: plain gradient descent direction
      pairs.clear();
      d = -g;
      reset_used = true;
      ls = armijo_backtrack(evaluate, x, f, g, d, opts, project, first_step(d));
    }
    if (!ls.ok) {
      if (iter == 0) throw LineSearchFailure("after Hessian reset and gradient step");
      result.status = OptStatus::LineSearchFailed;
      break;
    }

    const VecX s = ls.x - x;
    const VecX y = ls.g - g;
    if (y.dot(s) > 1e-300) {
      pairs.emplace_back(s, y);
      if (static_cast<int>(pairs.size()) > opts.memory) pairs.pop_front();
    }
    x = ls.x;
    f = ls.f;
    g = ls.g;
    result.iterations = iter + 1;
    result.x = x;
    result.objective = f;

    if (on_iteration) {
      TraceRow row;
      row.iteration = iter + 1;
      row.objective = f;
      row.grad_norm = g.norm();
      row.step = ls.t;
      row.hessian_reset = reset_used;
      row.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
              .count();
      on_iteration(row, x);
    }

    if (opts.obj_tol_rel > 0.0) {
      recent_f.push_back(f);
      if (recent_f.size() > 4) recent_f.pop_front();
      if (recent_f.size() == 4) {
        const double drop = recent_f.front() - recent_f.back();
        if (drop <=
            opts.obj_tol_rel * std::max(std::abs(recent_f.front()), 1e-300) * 3.0) {
          result.status = OptStatus::ObjectiveStall;
          break;
        }
      }
    }
  }
  return result;
}

namespace {

VecX block_scales(const Scene& scene, const ParamLayout& layout) {
  VecX s = VecX::Ones(layout.size());
  const MatX2& V = scene.mesh.rest_vertices;
  const double bbox =
      (V.colwise().maxCoeff() - V.colwise().minCoeff()).norm() + 1e-12;
  s.segment(layout.offset(ParamBlock::Shape), layout.block_size(ParamBlock::Shape))
      .setConstant(bbox);
  const double lam_scale = std::max(scene.material.lambda.cwiseAbs().mean(), 1.0);
  const double mu_scale = std::max(scene.material.mu.cwiseAbs().mean(), 1.0);
  s.segment(layout.offset(ParamBlock::Lambda), layout.block_size(ParamBlock::Lambda))
      .setConstant(lam_scale);
  s.segment(layout.offset(ParamBlock::Mu), layout.block_size(ParamBlock::Mu))
      .setConstant(mu_scale);
  double vel = bbox;
  if (scene.transient()) vel = std::max(bbox / (scene.dt * scene.n_steps), 1e-6);
  s.segment(layout.offset(ParamBlock::U0), layout.block_size(ParamBlock::U0))
      .setConstant(0.1 * bbox);
  s.segment(layout.offset(ParamBlock::V0), layout.block_size(ParamBlock::V0))
      .setConstant(vel);
  return s;
}

}  // namespace

OptResult minimize(OptProblem& problem,
                   const std::function<void(const TraceRow&, const VecX&)>& on_iteration) {
  Scene& scene = problem.scene;
  const ParamLayout layout = ParamLayout::from(scene);
  const VecX x_init = pack_parameters(scene, layout);

  VecX active = VecX::Zero(layout.size());
  for (ParamBlock b : problem.blocks)
    active.segment(layout.offset(b), layout.block_size(b)).setOnes();
  if (problem.blocks.empty()) throw Error("no active parameter blocks");

  const VecX scales = block_scales(scene, layout);

  // per-body tying operator for material blocks
  auto tie = [&](VecX& g) {
    if (problem.tying != MaterialTying::PerBody) return;
    for (ParamBlock b : {ParamBlock::Lambda, ParamBlock::Mu}) {
      auto seg = layout.block(g, b);
      std::map<int, double> sums;
      for (int t = 0; t < layout.n_elements; ++t)
        sums[scene.mesh.body_id[t]] += seg(t);
      for (int t = 0; t < layout.n_elements; ++t)
        seg(t) = sums[scene.mesh.body_id[t]];
    }
  };

  // optimize in scaled coordinates y = x / scales
  auto to_x = [&](const VecX& y) { return VecX(y.cwiseProduct(scales)); };
  auto to_y = [&](const VecX& x) { return VecX(x.cwiseQuotient(scales)); };

  auto project = [&](const VecX& y) {
    VecX x = to_x(y);
    for (const auto& [block, lohi] : problem.bounds) {
      auto seg = layout.block(x, block);
      for (int i = 0; i < seg.size(); ++i)
        seg(i) = std::min(std::max(seg(i), lohi.first), lohi.second);
    }
    // frozen blocks stay bit-identical
    for (int i = 0; i < x.size(); ++i)
      if (active(i) == 0.0) x(i) = x_init(i);
    return to_y(x);
  };

  LbfgsEval evaluate = [&](const VecX& y, double& f, VecX& g) {
    const VecX x = to_x(y);
    Scene trial = scene;
    unpack_parameters(trial, layout, x);
    // reject shape iterates that invert or degrade the rest mesh
    if (active.segment(layout.offset(ParamBlock::Shape),
                       layout.block_size(ParamBlock::Shape))
            .any()) {
      const VecX q = scaled_jacobian_quality(trial.mesh);
      if (q.minCoeff() <= problem.quality_floor) return false;
    }
    try {
      const auto res = compute_objective_gradient(trial, problem.objective, layout);
      f = res.objective;
      VecX gx = res.grad.data;
      gx = gx.cwiseProduct(active);
      tie(gx);
      gx = gx.cwiseProduct(active);
      g = gx.cwiseProduct(scales);
      return std::isfinite(f);
    } catch (const Error&) {
      return false;
    }
  };

  OptTrace trace;
  auto record = [&](const TraceRow& row, const VecX& y) {
    TraceRow r = row;
    Scene trial = scene;
    const VecX xc = to_x(y);
    unpack_parameters(trial, layout, xc);
    r.min_quality = scaled_jacobian_quality(trial.mesh).minCoeff();
    for (const auto& [block, lohi] : problem.bounds) {
      for (int i = 0; i < layout.block_size(block); ++i)
        if (xc(layout.offset(block) + i) <= lohi.first ||
            xc(layout.offset(block) + i) >= lohi.second)
          r.clamped = true;
    }
    trace.rows.push_back(r);
    if (on_iteration) on_iteration(r, xc);
  };

  const auto res = lbfgs_minimize(evaluate, to_y(x_init), problem.lbfgs, project, record);

  OptResult out;
  out.params = to_x(res.x);
  out.objective = res.objective;
  out.status = res.status;
  out.trace = std::move(trace);
  unpack_parameters(scene, layout, out.params);
  return out;
}

}  // namespace elastodiff
