// Command-line front end: forward simulation, gradient checking,
// optimization and export of stored runs.
//
// Exit codes: 0 success, 2 schema/input error, 3 solver failure,
// 4 gradient-check failure.

#include <CLI11.hpp>

#include <elastodiff/adjoint.hpp>
#include <elastodiff/errors.hpp>
#include <elastodiff/scene_io.hpp>

#include <chrono>
#include <filesystem>
#include <random>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace elastodiff;

namespace {

constexpr int kExitSchema = 2;
constexpr int kExitSolver = 3;
constexpr int kExitGradCheck = 4;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
  if (!os) throw elastodiff::Error("cannot write " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("ELASTODIFF_THREADS"))
    Eigen::setNbThreads(std::max(1, std::atoi(threads)));

  CLI::App app{"differentiable 2D FEM solver with contact"};
  app.require_subcommand(1);

  std::string scene_path, out_dir = "run", run_dir, format = "csv", block_filter;
  double eps_override = 0.0;
  int n_dirs = 5;
  uint64_t seed = 0;
  double tolerance = 1e-5;

  auto* fwd = app.add_subcommand("forward", "run the forward problem and store the trajectory");
  fwd->add_option("scene", scene_path, "scene JSON file")->required();
  fwd->add_option("-o,--out", out_dir, "output directory");

  auto* gc = app.add_subcommand("grad-check", "compare adjoint gradients against finite differences");
  gc->add_option("scene", scene_path, "scene JSON file")->required();
  std::vector<std::string> block_names;
  gc->add_option("--block", block_names, "parameter block(s) to check (default: all)");
  gc->add_option("--eps", eps_override, "fixed FD epsilon (default: per-block sweep)");
  gc->add_option("--directions", n_dirs, "random directions per block");
  gc->add_option("--seed", seed, "RNG seed for directions");
  gc->add_option("--tolerance", tolerance, "relative error tolerance");

  auto* opt = app.add_subcommand("optimize", "run the L-BFGS driver");
  opt->add_option("scene", scene_path, "scene JSON file")->required();
  opt->add_option("-o,--out", out_dir, "output directory");

  auto* exp = app.add_subcommand("export", "export a stored run");
  exp->add_option("run", run_dir, "run directory (from `forward`)")->required();
  exp->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  exp->add_option("-o,--out", out_dir, "output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fwd) {
      SceneBundle bundle = load_scene(scene_path);
      fs::create_directories(out_dir);
      RunReport report;
      const ParamLayout layout = ParamLayout::from(bundle.scene);
      if (bundle.scene.transient()) {
        const Trajectory traj = simulate(bundle.scene);
        write_trajectory((fs::path(out_dir) / "trajectory.bin").string(), bundle.scene,
                         traj);
        write_step_summary_csv((fs::path(out_dir) / "steps.csv").string(), bundle.scene,
                               traj);
        report = make_run_report(bundle.scene, traj);
        if (!bundle.objective.terms.empty()) {
          const AssemblyCache cache = bundle.scene.build_cache();
          report.objective =
              objective_value_transient(bundle.scene, cache, bundle.objective, traj.u);
          // adjoint pass on the stored trajectory: gradient + debug norms
          const auto t0 = std::chrono::steady_clock::now();
          const AdjointState adj =
              transient_adjoint(bundle.scene, cache, traj, bundle.objective);
          const auto grad = accumulate_gradient(bundle.scene, cache, traj, adj,
                                                bundle.objective, layout);
          report.adjoint_seconds = std::chrono::duration<double>(
                                       std::chrono::steady_clock::now() - t0)
                                       .count();
          write_text(fs::path(out_dir) / "gradient.json",
                     gradient_to_json(bundle.scene, layout, grad.data).dump(2) + "\n");
          std::ofstream norms(fs::path(out_dir) / "adjoint_norms.csv");
          norms << "step,p_norm,nu_norm\n";
          for (int i = 0; i <= bundle.scene.n_steps; ++i)
            norms << i << ',' << adj.p[i].norm() << ',' << adj.nu[i].norm() << '\n';
        }
      } else {
        const VecX u = static_solve(bundle.scene);
        Trajectory traj;
        traj.u = {u};
        traj.v = {VecX::Zero(u.size())};
        write_trajectory((fs::path(out_dir) / "trajectory.bin").string(), bundle.scene,
                         traj);
        if (!bundle.objective.terms.empty()) {
          const AssemblyCache cache = bundle.scene.build_cache();
          report.objective =
              objective_value_static(bundle.scene, cache, bundle.objective, u);
          const VecX p = static_adjoint(bundle.scene, cache, u, bundle.objective);
          const auto grad =
              static_gradient(bundle.scene, cache, u, p, bundle.objective, layout);
          write_text(fs::path(out_dir) / "gradient.json",
                     gradient_to_json(bundle.scene, layout, grad.data).dump(2) + "\n");
        }
      }
      write_text(fs::path(out_dir) / "report.json", report_to_json(report).dump(2) + "\n");
      write_text(fs::path(out_dir) / "scene.json",
                 serialize_bundle(bundle).dump(2) + "\n");
      std::cout << "run written to " << out_dir << "\n";
      return 0;
    }

    if (*gc) {
      SceneBundle bundle = load_scene(scene_path);
      std::vector<ParamBlock> blocks;
      if (block_names.empty()) {
        blocks = {ParamBlock::Shape, ParamBlock::Lambda, ParamBlock::Mu,
                  ParamBlock::Gamma, ParamBlock::Alpha, ParamBlock::Beta,
                  ParamBlock::U0, ParamBlock::V0};
        if (!bundle.scene.transient())
          blocks = {ParamBlock::Shape, ParamBlock::Lambda, ParamBlock::Mu};
      } else {
        for (const auto& name : block_names) {
          const auto b = param_block_from_name(name);
          if (!b) throw elastodiff::SchemaError("unknown block '" + name + "'");
          blocks.push_back(*b);
        }
      }
      auto rows = grad_check(bundle, blocks, n_dirs, tolerance, seed);
      if (eps_override > 0.0) {
        // fixed-epsilon re-run
        const ParamLayout layout = ParamLayout::from(bundle.scene);
        const auto res =
            compute_objective_gradient(bundle.scene, bundle.objective, layout);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        rows.clear();
        for (ParamBlock block : blocks) {
          const int off = layout.offset(block), size = layout.block_size(block);
          if (size == 0) continue;
          for (int k = 0; k < n_dirs; ++k) {
            VecX dir = VecX::Zero(layout.size());
            for (int i = 0; i < size; ++i) dir(off + i) = normal(rng);
            dir /= dir.norm();
            GradCheckRow row;
            row.block = block;
            row.direction = k;
            row.eps = eps_override;
            row.adjoint = res.grad.data.dot(dir);
            row.fd = fd_directional(bundle, layout, dir, eps_override);
            row.rel_err =
                std::abs(row.fd - row.adjoint) / std::max(std::abs(row.fd), 1e-12);
            row.pass = row.rel_err < tolerance;
            rows.push_back(row);
          }
        }
      }
      bool all_pass = true;
      std::cout << "block      dir  eps        fd              adjoint         rel_err    status\n";
      for (const auto& r : rows) {
        all_pass = all_pass && r.pass;
        std::printf("%-9s %4d  %-9.2e %- 15.8e %- 15.8e %-9.2e %s\n",
                    param_block_name(r.block), r.direction, r.eps, r.fd, r.adjoint,
                    r.rel_err, r.pass ? "ok" : "FAIL");
      }
      return all_pass ? 0 : kExitGradCheck;
    }

    if (*opt) {
      SceneBundle bundle = load_scene(scene_path);
      if (bundle.opt.blocks.empty())
        throw elastodiff::SchemaError("scene has no optimization blocks");
      fs::create_directories(out_dir);
      OptProblem problem;
      problem.scene = bundle.scene;
      problem.objective = bundle.objective;
      problem.blocks = bundle.opt.blocks;
      problem.tying = bundle.opt.tying;
      problem.bounds = bundle.opt.bounds;
      problem.lbfgs = bundle.opt.lbfgs;

      std::ofstream trace_csv(fs::path(out_dir) / "trace.csv");
      trace_csv << "iteration,objective,grad_norm,step,min_quality,wall_seconds,"
                   "clamped,hessian_reset\n";
      const ParamLayout layout = ParamLayout::from(problem.scene);
      double best = std::numeric_limits<double>::infinity();
      auto on_iter = [&](const TraceRow& row, const VecX& x) {
        trace_csv << row.iteration << ',' << row.objective << ',' << row.grad_norm << ','
                  << row.step << ',' << row.min_quality << ',' << row.wall_seconds << ','
                  << (row.clamped ? 1 : 0) << ',' << (row.hessian_reset ? 1 : 0) << '\n';
        trace_csv.flush();
        if (row.objective < best) {
          best = row.objective;
          Scene snap = problem.scene;
          unpack_parameters(snap, layout, x);
          SceneBundle out_bundle{snap, bundle.objective, bundle.opt};
          write_text(fs::path(out_dir) / "best_parameters.json",
                     serialize_bundle(out_bundle).dump(2) + "\n");
        }
      };
      auto result = minimize(problem, on_iter);
      SceneBundle final_bundle{problem.scene, bundle.objective, bundle.opt};
      write_text(fs::path(out_dir) / "optimized_scene.json",
                 serialize_bundle(final_bundle).dump(2) + "\n");
      std::cout << "final objective " << result.objective << " after "
                << result.trace.rows.size() << " iterations\n";
      return 0;
    }

    if (*exp) {
      const fs::path traj_path = fs::path(run_dir) / "trajectory.bin";
      if (!fs::exists(traj_path)) {
        std::cerr << "no trajectory at " << traj_path << "\n";
        return kExitSchema;
      }
      const TrajectoryFile tf = read_trajectory(traj_path.string());
      const fs::path out =
          out_dir == "run" ? fs::path(run_dir) / ("trajectory." + format)
                           : fs::path(out_dir);
      if (format == "csv") {
        std::ofstream os(out);
        os << "step,field,values...\n";
        for (int i = 0; i <= tf.n_steps; ++i) {
          os << i << ",u";
          for (int k = 0; k < tf.n_dofs; ++k) os << ',' << tf.u[i](k);
          os << "\n" << i << ",v";
          for (int k = 0; k < tf.n_dofs; ++k) os << ',' << tf.v[i](k);
          os << "\n";
        }
      } else {
        nlohmann::json j;
        j["n_steps"] = tf.n_steps;
        j["dt"] = tf.dt;
        for (int i = 0; i <= tf.n_steps; ++i) {
          j["u"].push_back(std::vector<double>(tf.u[i].begin(), tf.u[i].end()));
          j["v"].push_back(std::vector<double>(tf.v[i].begin(), tf.v[i].end()));
        }
        write_text(out, j.dump() + "\n");
      }
      std::cout << "exported " << out << "\n";
      return 0;
    }
  } catch (const elastodiff::SchemaError& e) {
    std::cerr << e.what() << "\n";
    return kExitSchema;
  } catch (const elastodiff::DanglingReference& e) {
    std::cerr << e.what() << "\n";
    return kExitSchema;
  } catch (const elastodiff::NewtonDivergence& e) {
    std::cerr << e.what() << "\n";
    return kExitSolver;
  } catch (const elastodiff::SingularSystem& e) {
    std::cerr << e.what() << "\n";
    return kExitSolver;
  } catch (const elastodiff::ForwardSolveFailure& e) {
    std::cerr << e.what() << "\n";
    return kExitSolver;
  } catch (const elastodiff::LineSearchFailure& e) {
    std::cerr << e.what() << "\n";
    return kExitSolver;
  } catch (const elastodiff::Error& e) {
    std::cerr << e.what() << "\n";
    return kExitSchema;
  }
  return 0;
}
