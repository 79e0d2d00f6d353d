#include <elastodiff/errors.hpp>
#include <elastodiff/mesh_shapes.hpp>
#include <elastodiff/scene_io.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace elastodiff {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
  throw SchemaError(where + ": " + msg);
}

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) fail(where, std::string("missing '") + key + "'");
  return j.at(key);
}

double as_number(const json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  return j.get<double>();
}

Vec2 as_vec2(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) fail(where, "expected [x, y]");
  return Vec2(as_number(j[0], where), as_number(j[1], where));
}

LinearTable parse_table(const json& j, const std::string& where) {
  if (j.is_number()) return LinearTable::constant(j.get<double>());
  if (j.is_object() && j.contains("table")) {
    LinearTable t;
    for (const auto& row : j.at("table")) {
      if (!row.is_array() || row.size() != 2) fail(where, "table rows are [t, value]");
      t.samples.emplace_back(as_number(row[0], where), as_number(row[1], where));
    }
    if (t.samples.empty()) fail(where, "empty table");
    return t;
  }
  fail(where, "expected number or {\"table\": [[t, v], ...]}");
}

json table_to_json(const LinearTable& t) {
  if (t.samples.size() == 1) return t.samples[0].second;
  json rows = json::array();
  for (const auto& [a, b] : t.samples) rows.push_back(json::array({a, b}));
  return json{{"table", rows}};
}

MatX2 parse_point_array(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array of [x, y]");
  MatX2 out(j.size(), 2);
  for (size_t i = 0; i < j.size(); ++i)
    out.row(i) = as_vec2(j[i], where + "[" + std::to_string(i) + "]").transpose();
  return out;
}

std::string join_path(const std::string& base, const std::string& rel) {
  if (rel.empty() || rel.front() == '/') return rel;
  if (base.empty()) return rel;
  return base + "/" + rel;
}

struct BodySpec {
  Mesh mesh;
  double lambda = 0.0, mu = 0.0, rho = 1000.0;
  MaterialModel model = MaterialModel::Linear;
  bool obstacle = false;
};

BodySpec parse_body(const json& jb, const std::string& base_dir, const std::string& where) {
  BodySpec out;
  const json& shape = require(jb, "shape", where);
  const std::string type = require(shape, "type", where + "/shape").get<std::string>();
  if (type == "box") {
    out.mesh = box_mesh(as_vec2(require(shape, "origin", where), where),
                        as_vec2(require(shape, "size", where), where),
                        require(shape, "divisions", where)[0].get<int>(),
                        require(shape, "divisions", where)[1].get<int>());
  } else if (type == "disk") {
    out.mesh = disk_mesh(as_vec2(require(shape, "center", where), where),
                         as_number(require(shape, "radius", where), where),
                         require(shape, "rings", where).get<int>());
  } else if (type == "inline") {
    const MatX2 verts = parse_point_array(require(shape, "vertices", where), where);
    const json& jt = require(shape, "triangles", where);
    MatX3i tris(jt.size(), 3);
    for (size_t i = 0; i < jt.size(); ++i)
      for (int k = 0; k < 3; ++k) tris(static_cast<int>(i), k) = jt[i][k].get<int>();
    out.mesh = build_mesh(verts, tris);
  } else if (type == "file") {
    out.mesh = read_mesh_listing(
        join_path(base_dir, require(shape, "path", where).get<std::string>()));
  } else {
    fail(where + "/shape/type", "unknown shape '" + type + "'");
  }

  const double rot =
      jb.value("rotate_degrees", 0.0) * std::numbers::pi / 180.0;
  Vec2 tr = Vec2::Zero();
  if (jb.contains("translate")) tr = as_vec2(jb.at("translate"), where + "/translate");
  if (rot != 0.0 || tr.squaredNorm() > 0.0) transform_mesh(out.mesh, rot, tr);

  const json& jm = require(jb, "material", where);
  const std::string model = jm.value("model", std::string("linear"));
  if (model == "linear")
    out.model = MaterialModel::Linear;
  else if (model == "neo_hookean")
    out.model = MaterialModel::NeoHookean;
  else
    fail(where + "/material/model", "unknown model '" + model + "'");
  if (jm.contains("lambda") || jm.contains("mu")) {
    out.lambda = as_number(require(jm, "lambda", where + "/material"), where);
    out.mu = as_number(require(jm, "mu", where + "/material"), where);
  } else {
    const double E = as_number(require(jm, "E", where + "/material"), where);
    const double nu = as_number(require(jm, "nu", where + "/material"), where);
    const bool plane_stress = jm.value("plane", std::string("strain")) == "stress";
    lame_from_young_poisson(E, nu, plane_stress, out.lambda, out.mu);
  }
  out.rho = jm.value("density", 1000.0);
  out.obstacle = jb.value("obstacle", false);
  return out;
}

ParamBlock parse_block_name(const std::string& name, const std::string& where) {
  const auto b = param_block_from_name(name);
  if (!b) fail(where, "unknown parameter block '" + name + "'");
  return *b;
}

Vec2 com_of_body(const Scene& scene, const AssemblyCache& cache, int body,
                 const VecX& u_full) {
  double m0 = 0.0;
  Vec2 m1 = Vec2::Zero();
  for (size_t t = 0; t < cache.elems.size(); ++t) {
    if (body >= 0 && scene.mesh.body_id[t] != body) continue;
    if (body < 0 && scene.obstacle_bodies.count(scene.mesh.body_id[t])) continue;
    const auto& e = cache.elems[t];
    const double rho = scene.material.rho(t);
    for (size_t q = 0; q < e.w.size(); ++q) {
      const Vec2 xd = e.xq[q] + element_value(e, u_full, q);
      m0 += e.w[q] * rho;
      m1 += e.w[q] * rho * xd;
    }
  }
  return m1 / m0;
}

VecX parse_ic_field(const json& j, const Scene& scene, const std::string& where) {
  VecX out = VecX::Zero(scene.space.n_dofs());
  if (j.contains("nodes")) {
    const MatX2 vals = parse_point_array(j.at("nodes"), where + "/nodes");
    if (vals.rows() != scene.space.n_nodes)
      fail(where + "/nodes", "expected " + std::to_string(scene.space.n_nodes) +
                                 " node values, got " + std::to_string(vals.rows()));
    for (int n = 0; n < scene.space.n_nodes; ++n) {
      out(2 * n) = vals(n, 0);
      out(2 * n + 1) = vals(n, 1);
    }
    return out;
  }
  if (j.contains("bodies")) {
    for (const auto& [key, val] : j.at("bodies").items()) {
      const int body = std::stoi(key);
      if (body < 0 || body >= scene.mesh.n_bodies())
        throw DanglingReference(where + "/bodies/" + key);
      const Vec2 v = as_vec2(val, where + "/bodies/" + key);
      for (int n = 0; n < scene.space.n_nodes; ++n) {
        if (scene.space.node_body[n] == body) {
          out(2 * n) = v.x();
          out(2 * n + 1) = v.y();
        }
      }
    }
    return out;
  }
  if (j.contains("uniform")) {
    const Vec2 v = as_vec2(j.at("uniform"), where + "/uniform");
    for (int n = 0; n < scene.space.n_nodes; ++n) {
      if (!scene.node_is_obstacle(n)) {
        out(2 * n) = v.x();
        out(2 * n + 1) = v.y();
      }
    }
    return out;
  }
  fail(where, "expected 'nodes', 'bodies' or 'uniform'");
}

ObjectiveTerm parse_objective_term(const json& jt, const Scene& scene,
                                   const std::string& base_dir,
                                   const std::string& where) {
  ObjectiveTerm term;
  term.kind = objective_kind_from_name(require(jt, "kind", where).get<std::string>());
  term.weight = jt.value("weight", 1.0);
  const std::string tm = jt.value("time", std::string("all"));
  if (tm == "all")
    term.time_mode = TimeWeighting::AllSteps;
  else if (tm == "final")
    term.time_mode = TimeWeighting::Final;
  else
    fail(where + "/time", "expected 'all' or 'final'");
  term.body = jt.value("body", -1);
  if (term.body >= scene.mesh.n_bodies())
    throw DanglingReference(where + ": body " + std::to_string(term.body));
  term.p = jt.value("p", 2.0);
  term.stress_target = jt.value("stress_target", 0.0);
  term.volume_target = jt.value("volume_target", 0.0);
  term.boundary_only = jt.value("boundary_only", false);

  if (term.kind == ObjectiveKind::TargetDeformation) {
    const json& jtr = require(jt, "target", where);
    if (jtr.is_string() && jtr.get<std::string>() == "rest") {
      term.target = scene.space.node_positions(scene.mesh.rest_vertices);
    } else if (jtr.is_array()) {
      term.target = parse_point_array(jtr, where + "/target");
    } else if (jtr.is_object() && jtr.contains("trajectory")) {
      const auto tf = read_trajectory(
          join_path(base_dir, jtr.at("trajectory").get<std::string>()));
      if (tf.n_dofs != scene.space.n_dofs())
        fail(where + "/target/trajectory", "DOF count mismatch");
      const MatX2 rest = scene.space.node_positions(scene.mesh.rest_vertices);
      for (const auto& u : tf.u) {
        MatX2 tgt = rest;
        for (int n = 0; n < scene.space.n_nodes; ++n) {
          tgt(n, 0) += u(2 * n);
          tgt(n, 1) += u(2 * n + 1);
        }
        term.target_steps.push_back(tgt);
      }
    } else {
      fail(where + "/target", "expected 'rest', point array or {trajectory}");
    }
    if (jt.contains("weights")) {
      const json& jw = jt.at("weights");
      term.node_weights.resize(jw.size());
      for (size_t i = 0; i < jw.size(); ++i)
        term.node_weights(i) = as_number(jw[i], where + "/weights");
      if (term.node_weights.size() != scene.space.n_nodes)
        fail(where + "/weights", "size mismatch");
    }
  }
  if (term.kind == ObjectiveKind::ComTrajectory) {
    const json& jc = require(jt, "targets", where);
    if (jc.is_object() && jc.contains("trajectory")) {
      const auto tf = read_trajectory(
          join_path(base_dir, jc.at("trajectory").get<std::string>()));
      if (tf.n_dofs != scene.space.n_dofs())
        fail(where + "/targets/trajectory", "DOF count mismatch");
      const AssemblyCache cache = scene.build_cache();
      for (const auto& u : tf.u)
        term.com_targets.push_back(com_of_body(scene, cache, term.body, u));
    } else if (jc.is_array()) {
      for (size_t i = 0; i < jc.size(); ++i)
        term.com_targets.push_back(as_vec2(jc[i], where + "/targets"));
    } else {
      fail(where + "/targets", "expected point array or {trajectory}");
    }
  }
  return term;
}

}  // namespace

Mesh read_mesh_listing(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  int nv = 0, nt = 0;
  if (!(is >> nv >> nt)) throw SchemaError(path + ": expected 'nv nt' header");
  MatX2 verts(nv, 2);
  for (int i = 0; i < nv; ++i)
    if (!(is >> verts(i, 0) >> verts(i, 1)))
      throw SchemaError(path + ": vertex " + std::to_string(i));
  MatX3i tris(nt, 3);
  std::vector<int> body(nt, 0);
  std::string line;
  std::getline(is, line);
  for (int i = 0; i < nt; ++i) {
    if (!std::getline(is, line)) throw SchemaError(path + ": triangle " + std::to_string(i));
    std::istringstream ls(line);
    if (!(ls >> tris(i, 0) >> tris(i, 1) >> tris(i, 2)))
      throw SchemaError(path + ": triangle " + std::to_string(i));
    int b;
    if (ls >> b) body[i] = b;
  }
  return build_mesh(verts, tris, body);
}

SceneBundle load_scene(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
  std::string base_dir;
  const auto slash = path.find_last_of('/');
  if (slash != std::string::npos) base_dir = path.substr(0, slash);
  return parse_scene_json(doc, base_dir);
}

SceneBundle parse_scene_json(const json& doc, const std::string& base_dir) {
  SceneBundle bundle;
  Scene& scene = bundle.scene;

  // ---- mesh: constructive bodies or canonical merged form ----
  if (doc.contains("bodies")) {
    std::vector<BodySpec> specs;
    const json& jb = doc.at("bodies");
    for (size_t i = 0; i < jb.size(); ++i)
      specs.push_back(parse_body(jb[i], base_dir, "/bodies/" + std::to_string(i)));
    std::vector<Mesh> parts;
    for (auto& s : specs) parts.push_back(s.mesh);
    scene.mesh = merge_meshes(parts);
    const int nt = scene.mesh.n_triangles();
    scene.material.lambda.resize(nt);
    scene.material.mu.resize(nt);
    scene.material.rho.resize(nt);
    scene.material.model = specs.empty() ? MaterialModel::Linear : specs[0].model;
    bool model_set = false;
    for (size_t i = 0; i < specs.size(); ++i) {
      if (specs[i].obstacle) continue;  // obstacles inherit the soft model
      if (!model_set) {
        scene.material.model = specs[i].model;
        model_set = true;
      } else if (specs[i].model != scene.material.model) {
        fail("/bodies/" + std::to_string(i) + "/material/model",
             "all non-obstacle bodies must share one constitutive model");
      }
    }
    for (int t = 0; t < nt; ++t) {
      const auto& s = specs[scene.mesh.body_id[t]];
      scene.material.lambda(t) = s.lambda;
      scene.material.mu(t) = s.mu;
      scene.material.rho(t) = s.rho;
    }
    for (size_t i = 0; i < specs.size(); ++i)
      if (specs[i].obstacle) scene.obstacle_bodies.insert(static_cast<int>(i));
  } else if (doc.contains("mesh")) {
    const json& jm = doc.at("mesh");
    const MatX2 verts = parse_point_array(require(jm, "vertices", "/mesh"), "/mesh/vertices");
    const json& jt = require(jm, "triangles", "/mesh");
    MatX3i tris(jt.size(), 3);
    for (size_t i = 0; i < jt.size(); ++i)
      for (int k = 0; k < 3; ++k) tris(static_cast<int>(i), k) = jt[i][k].get<int>();
    std::vector<int> body(tris.rows(), 0);
    if (jm.contains("body_id")) {
      const json& jb = jm.at("body_id");
      if (jb.size() != static_cast<size_t>(tris.rows())) fail("/mesh/body_id", "size mismatch");
      for (size_t i = 0; i < jb.size(); ++i) body[i] = jb[i].get<int>();
    }
    scene.mesh = build_mesh(verts, tris, body);
    if (jm.contains("boundary_regions")) {
      const json& jr = jm.at("boundary_regions");
      if (jr.size() != scene.mesh.boundary_edges.size())
        fail("/mesh/boundary_regions", "size mismatch with boundary edges");
      for (size_t i = 0; i < jr.size(); ++i)
        scene.mesh.boundary_edges[i].region = jr[i].get<int>();
    }
    const json& jmat = require(jm, "materials", "/mesh");
    const std::string model = jmat.value("model", std::string("linear"));
    scene.material.model =
        model == "neo_hookean" ? MaterialModel::NeoHookean : MaterialModel::Linear;
    auto read_field = [&](const char* key) {
      const json& arr = require(jmat, key, "/mesh/materials");
      if (arr.size() != static_cast<size_t>(scene.mesh.n_triangles()))
        fail(std::string("/mesh/materials/") + key, "size mismatch");
      VecX out(arr.size());
      for (size_t i = 0; i < arr.size(); ++i) out(i) = arr[i].get<double>();
      return out;
    };
    scene.material.lambda = read_field("lambda");
    scene.material.mu = read_field("mu");
    scene.material.rho = read_field("rho");
    if (jm.contains("obstacle_bodies"))
      for (const auto& b : jm.at("obstacle_bodies"))
        scene.obstacle_bodies.insert(b.get<int>());
  } else {
    fail("/", "expected 'bodies' or 'mesh'");
  }

  scene.order = doc.value("order", 1);
  if (scene.order != 1 && scene.order != 2) fail("/order", "must be 1 or 2");

  // ---- boundary regions by box selectors ----
  if (doc.contains("boundary_regions")) {
    const json& jr = doc.at("boundary_regions");
    for (size_t i = 0; i < jr.size(); ++i) {
      const std::string where = "/boundary_regions/" + std::to_string(i);
      const int tag = require(jr[i], "tag", where).get<int>();
      const json& jbox = require(jr[i], "box", where);
      const Vec2 lo = as_vec2(jbox[0], where + "/box");
      const Vec2 hi = as_vec2(jbox[1], where + "/box");
      const int body = jr[i].value("body", -1);
      for (auto& be : scene.mesh.boundary_edges) {
        if (body >= 0 && scene.mesh.vertex_body[be.v0] != body) continue;
        const Vec2 mid = 0.5 * (scene.mesh.rest_vertices.row(be.v0) +
                                scene.mesh.rest_vertices.row(be.v1));
        if (mid.x() >= lo.x() && mid.x() <= hi.x() && mid.y() >= lo.y() &&
            mid.y() <= hi.y())
          be.region = tag;
      }
    }
  }

  // ---- boundary conditions ----
  if (doc.contains("boundary_conditions")) {
    const json& jbc = doc.at("boundary_conditions");
    if (jbc.contains("dirichlet")) {
      const json& jd = jbc.at("dirichlet");
      for (size_t i = 0; i < jd.size(); ++i) {
        const std::string where = "/boundary_conditions/dirichlet/" + std::to_string(i);
        DirichletBC bc;
        bc.tag = require(jd[i], "tag", where).get<int>();
        const json& val = require(jd[i], "value", where);
        if (!val.is_array() || val.size() != 2) fail(where + "/value", "expected [x, y]");
        for (int c = 0; c < 2; ++c) {
          if (val[c].is_null()) {
            bc.comp[c] = false;
          } else {
            bc.comp[c] = true;
            bc.value[c] = parse_table(val[c], where + "/value");
          }
        }
        scene.dirichlet.push_back(bc);
      }
    }
    if (jbc.contains("neumann")) {
      const json& jn = jbc.at("neumann");
      for (size_t i = 0; i < jn.size(); ++i) {
        const std::string where = "/boundary_conditions/neumann/" + std::to_string(i);
        NeumannBC bc;
        bc.tag = require(jn[i], "tag", where).get<int>();
        bc.traction = as_vec2(require(jn[i], "traction", where), where + "/traction");
        if (jn[i].contains("scale")) bc.scale = parse_table(jn[i].at("scale"), where);
        scene.neumann.push_back(bc);
      }
    }
  }

  // ---- contact / friction ----
  if (doc.contains("contact")) {
    const json& jc = doc.at("contact");
    scene.contact_enabled = jc.value("enabled", true);
    if (scene.contact_enabled) {
      scene.barrier.dhat = as_number(require(jc, "dhat", "/contact"), "/contact/dhat");
      scene.barrier.kappa = as_number(require(jc, "kappa", "/contact"), "/contact/kappa");
    }
    if (jc.contains("friction")) {
      const json& jf = jc.at("friction");
      scene.friction.eta = jf.value("eta", 1e-3);
      if (jf.contains("pairs")) {
        for (size_t i = 0; i < jf.at("pairs").size(); ++i) {
          const json& jp = jf.at("pairs")[i];
          const std::string where = "/contact/friction/pairs/" + std::to_string(i);
          const json& bodies = require(jp, "bodies", where);
          int a = bodies[0].get<int>(), b = bodies[1].get<int>();
          if (a > b) std::swap(a, b);
          const double gamma = as_number(require(jp, "gamma", where), where);
          if (gamma < 0.0) fail(where + "/gamma", "must be non-negative");
          scene.friction.pairs.emplace_back(a, b, gamma);
        }
      }
    }
  }

  if (doc.contains("damping")) {
    scene.damping.alpha = doc.at("damping").value("alpha", 0.0);
    scene.damping.beta = doc.at("damping").value("beta", 0.0);
  }
  if (doc.contains("gravity")) scene.gravity = as_vec2(doc.at("gravity"), "/gravity");

  if (doc.contains("time")) {
    const json& jt = doc.at("time");
    scene.dt = as_number(require(jt, "dt", "/time"), "/time/dt");
    scene.n_steps = require(jt, "steps", "/time").get<int>();
    scene.bdf_order = jt.value("bdf_order", 1);
  }

  if (doc.contains("initial_conditions") &&
      doc.at("initial_conditions").value("mode", std::string("per_node")) == "per_body")
    scene.ic_mode = ICParameterization::PerBody;

  try {
    scene.finalize();
  } catch (const Error&) {
    throw;
  }

  if (doc.contains("initial_conditions")) {
    const json& jic = doc.at("initial_conditions");
    if (jic.contains("u0"))
      scene.u0 = parse_ic_field(jic.at("u0"), scene, "/initial_conditions/u0");
    if (jic.contains("v0"))
      scene.v0 = parse_ic_field(jic.at("v0"), scene, "/initial_conditions/v0");
    scene.apply_dirichlet(scene.u0, 0.0);
  }

  if (doc.contains("objective")) {
    const json& jo = doc.at("objective");
    for (size_t i = 0; i < jo.size(); ++i)
      bundle.objective.terms.push_back(parse_objective_term(
          jo[i], scene, base_dir, "/objective/" + std::to_string(i)));
  }

  if (doc.contains("optimization")) {
    const json& jop = doc.at("optimization");
    if (jop.contains("blocks"))
      for (const auto& b : jop.at("blocks"))
        bundle.opt.blocks.push_back(
            parse_block_name(b.get<std::string>(), "/optimization/blocks"));
    bundle.opt.tying = jop.value("material_tying", std::string("per_element")) ==
                               "per_body"
                           ? MaterialTying::PerBody
                           : MaterialTying::PerElement;
    if (jop.contains("bounds")) {
      for (const auto& [name, lohi] : jop.at("bounds").items()) {
        const ParamBlock b = parse_block_name(name, "/optimization/bounds");
        bundle.opt.bounds[b] = {lohi[0].get<double>(), lohi[1].get<double>()};
      }
    }
    bundle.opt.lbfgs.max_iterations = jop.value("max_iterations", 100);
    bundle.opt.lbfgs.memory = jop.value("memory", 6);
    bundle.opt.lbfgs.grad_tol_rel = jop.value("grad_tol_rel", 1e-6);
  }
  return bundle;
}

json serialize_bundle(const SceneBundle& bundle) {
  const Scene& scene = bundle.scene;
  json doc;
  doc["order"] = scene.order;

  json jm;
  json verts = json::array();
  for (int v = 0; v < scene.mesh.n_vertices(); ++v)
    verts.push_back(json::array(
        {scene.mesh.rest_vertices(v, 0), scene.mesh.rest_vertices(v, 1)}));
  jm["vertices"] = verts;
  json tris = json::array();
  for (int t = 0; t < scene.mesh.n_triangles(); ++t)
    tris.push_back(json::array({scene.mesh.triangles(t, 0), scene.mesh.triangles(t, 1),
                                scene.mesh.triangles(t, 2)}));
  jm["triangles"] = tris;
  jm["body_id"] = scene.mesh.body_id;
  json regions = json::array();
  for (const auto& be : scene.mesh.boundary_edges) regions.push_back(be.region);
  jm["boundary_regions"] = regions;
  jm["obstacle_bodies"] = std::vector<int>(scene.obstacle_bodies.begin(),
                                           scene.obstacle_bodies.end());
  json jmat;
  jmat["model"] =
      scene.material.model == MaterialModel::NeoHookean ? "neo_hookean" : "linear";
  jmat["lambda"] = std::vector<double>(scene.material.lambda.begin(),
                                       scene.material.lambda.end());
  jmat["mu"] = std::vector<double>(scene.material.mu.begin(), scene.material.mu.end());
  jmat["rho"] = std::vector<double>(scene.material.rho.begin(), scene.material.rho.end());
  jm["materials"] = jmat;
  doc["mesh"] = jm;

  json jbc;
  json jd = json::array();
  for (const auto& bc : scene.dirichlet) {
    json val = json::array();
    for (int c = 0; c < 2; ++c)
      val.push_back(bc.comp[c] ? table_to_json(bc.value[c]) : json(nullptr));
    jd.push_back(json{{"tag", bc.tag}, {"value", val}});
  }
  json jn = json::array();
  for (const auto& bc : scene.neumann)
    jn.push_back(json{{"tag", bc.tag},
                      {"traction", json::array({bc.traction.x(), bc.traction.y()})},
                      {"scale", table_to_json(bc.scale)}});
  jbc["dirichlet"] = jd;
  jbc["neumann"] = jn;
  doc["boundary_conditions"] = jbc;

  if (scene.contact_enabled) {
    json jc{{"enabled", true}, {"dhat", scene.barrier.dhat}, {"kappa", scene.barrier.kappa}};
    json jf{{"eta", scene.friction.eta}};
    json pairs = json::array();
    for (const auto& [a, b, g] : scene.friction.pairs)
      pairs.push_back(json{{"bodies", json::array({a, b})}, {"gamma", g}});
    jf["pairs"] = pairs;
    jc["friction"] = jf;
    doc["contact"] = jc;
  }
  doc["damping"] = json{{"alpha", scene.damping.alpha}, {"beta", scene.damping.beta}};
  doc["gravity"] = json::array({scene.gravity.x(), scene.gravity.y()});
  if (scene.transient())
    doc["time"] =
        json{{"dt", scene.dt}, {"steps", scene.n_steps}, {"bdf_order", scene.bdf_order}};

  json jic;
  jic["mode"] =
      scene.ic_mode == ICParameterization::PerBody ? "per_body" : "per_node";
  auto field_json = [&](const VecX& f) {
    json nodes = json::array();
    for (int n = 0; n < scene.space.n_nodes; ++n)
      nodes.push_back(json::array({f(2 * n), f(2 * n + 1)}));
    return json{{"nodes", nodes}};
  };
  jic["u0"] = field_json(scene.u0);
  jic["v0"] = field_json(scene.v0);
  doc["initial_conditions"] = jic;

  json jobj = json::array();
  for (const auto& term : bundle.objective.terms) {
    json jt;
    jt["kind"] = objective_kind_name(term.kind);
    jt["weight"] = term.weight;
    jt["time"] = term.time_mode == TimeWeighting::Final ? "final" : "all";
    jt["body"] = term.body;
    jt["p"] = term.p;
    jt["stress_target"] = term.stress_target;
    jt["volume_target"] = term.volume_target;
    jt["boundary_only"] = term.boundary_only;
    if (term.kind == ObjectiveKind::TargetDeformation) {
      json tgt = json::array();
      const MatX2& T0 = term.target_steps.empty() ? term.target : term.target_steps[0];
      // per-step targets are serialized step by step
      if (!term.target_steps.empty()) {
        json steps = json::array();
        for (const auto& T : term.target_steps) {
          json one = json::array();
          for (int n = 0; n < T.rows(); ++n)
            one.push_back(json::array({T(n, 0), T(n, 1)}));
          steps.push_back(one);
        }
        jt["target_steps"] = steps;
      } else {
        for (int n = 0; n < T0.rows(); ++n)
          tgt.push_back(json::array({T0(n, 0), T0(n, 1)}));
        jt["target"] = tgt;
      }
      if (term.node_weights.size())
        jt["weights"] =
            std::vector<double>(term.node_weights.begin(), term.node_weights.end());
    }
    if (term.kind == ObjectiveKind::ComTrajectory) {
      json cts = json::array();
      for (const auto& c : term.com_targets) cts.push_back(json::array({c.x(), c.y()}));
      jt["targets"] = cts;
    }
    jobj.push_back(jt);
  }
  doc["objective"] = jobj;

  json jop;
  json blocks = json::array();
  for (ParamBlock b : bundle.opt.blocks) blocks.push_back(param_block_name(b));
  jop["blocks"] = blocks;
  jop["material_tying"] =
      bundle.opt.tying == MaterialTying::PerBody ? "per_body" : "per_element";
  json jbounds;
  for (const auto& [b, lohi] : bundle.opt.bounds)
    jbounds[param_block_name(b)] = json::array({lohi.first, lohi.second});
  jop["bounds"] = jbounds;
  jop["max_iterations"] = bundle.opt.lbfgs.max_iterations;
  jop["memory"] = bundle.opt.lbfgs.memory;
  jop["grad_tol_rel"] = bundle.opt.lbfgs.grad_tol_rel;
  doc["optimization"] = jop;
  return doc;
}

json gradient_to_json(const Scene& scene, const ParamLayout& layout, const VecX& grad) {
  json out;
  for (ParamBlock b : {ParamBlock::Shape, ParamBlock::Lambda, ParamBlock::Mu,
                       ParamBlock::Gamma, ParamBlock::Alpha, ParamBlock::Beta,
                       ParamBlock::U0, ParamBlock::V0}) {
    const auto seg = layout.block(grad, b);
    if (b == ParamBlock::Alpha || b == ParamBlock::Beta) {
      out[param_block_name(b)] = seg(0);
    } else if (b == ParamBlock::Gamma) {
      json g;
      for (int i = 0; i < layout.n_gamma; ++i) {
        const auto& [ba, bb, val] = scene.friction.pairs[i];
        g[std::to_string(ba) + "-" + std::to_string(bb)] = seg(i);
      }
      out["gamma"] = g;
    } else {
      out[param_block_name(b)] = std::vector<double>(seg.begin(), seg.end());
    }
  }
  return out;
}

RunReport make_run_report(const Scene& scene, const Trajectory& traj) {
  RunReport r;
  r.n_steps = scene.n_steps;
  r.forward_seconds = traj.forward_seconds;
  for (int i = 1; i <= scene.n_steps; ++i) {
    r.min_distance = std::min(r.min_distance, traj.stats[i].min_distance);
    r.min_detF = std::min(r.min_detF, traj.stats[i].min_detF);
    r.max_newton_iterations = std::max(r.max_newton_iterations, traj.stats[i].iterations);
  }
  return r;
}

json report_to_json(const RunReport& r) {
  json j;
  j["objective"] = r.objective;
  j["forward_seconds"] = r.forward_seconds;
  j["adjoint_seconds"] = r.adjoint_seconds;
  j["adjoint_over_forward"] =
      r.forward_seconds > 0 ? r.adjoint_seconds / r.forward_seconds : 0.0;
  j["n_steps"] = r.n_steps;
  j["min_distance"] = std::isfinite(r.min_distance) ? json(r.min_distance) : json(nullptr);
  j["min_detF"] = std::isfinite(r.min_detF) ? json(r.min_detF) : json(nullptr);
  j["max_newton_iterations"] = r.max_newton_iterations;
  return j;
}

double fd_directional(const SceneBundle& bundle, const ParamLayout& layout,
                      const VecX& direction, double eps) {
  const VecX x = pack_parameters(bundle.scene, layout);
  auto eval_at = [&](const VecX& xp) {
    Scene s = bundle.scene;
    unpack_parameters(s, layout, xp);
    try {
      return evaluate_objective(s, bundle.objective);
    } catch (const NewtonDivergence& e) {
      throw ForwardSolveFailure(e.what());
    } catch (const SingularSystem& e) {
      throw ForwardSolveFailure(e.what());
    }
  };
  const double jp = eval_at(x + eps * direction);
  const double jm = eval_at(x - eps * direction);
  return (jp - jm) / (2.0 * eps);
}

double default_fd_eps(const SceneBundle& bundle, ParamBlock block) {
  const Scene& s = bundle.scene;
  const MatX2& V = s.mesh.rest_vertices;
  const double bbox = (V.colwise().maxCoeff() - V.colwise().minCoeff()).norm();
  switch (block) {
    case ParamBlock::Shape: return 1e-6 * std::max(bbox, 1e-6);
    case ParamBlock::Lambda: return 1e-4 * std::max(s.material.lambda.mean(), 1.0);
    case ParamBlock::Mu: return 1e-4 * std::max(s.material.mu.mean(), 1.0);
    case ParamBlock::Gamma: return 1e-5;
    case ParamBlock::Alpha:
    case ParamBlock::Beta: return 1e-3 * std::max(1.0, s.damping.alpha + s.damping.beta);
    case ParamBlock::U0: return 1e-6 * std::max(bbox, 1e-6);
    case ParamBlock::V0: {
      double vel = bbox;
      if (s.transient()) vel = std::max(bbox / (s.dt * s.n_steps), 1e-3);
      return 1e-6 * vel;
    }
  }
  return 1e-6;
}

std::vector<GradCheckRow> grad_check(const SceneBundle& bundle,
                                     const std::vector<ParamBlock>& blocks,
                                     int directions_per_block, double tolerance,
                                     uint64_t seed) {
  const ParamLayout layout = ParamLayout::from(bundle.scene);
  const auto res = compute_objective_gradient(bundle.scene, bundle.objective, layout);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<GradCheckRow> rows;
  for (ParamBlock block : blocks) {
    const int off = layout.offset(block);
    const int size = layout.block_size(block);
    if (size == 0) continue;
    const double eps0 = default_fd_eps(bundle, block);
    for (int k = 0; k < directions_per_block; ++k) {
      VecX dir = VecX::Zero(layout.size());
      for (int i = 0; i < size; ++i) dir(off + i) = normal(rng);
      dir /= dir.norm();

      GradCheckRow row;
      row.block = block;
      row.direction = k;
      row.adjoint = res.grad.data.dot(dir);
      row.rel_err = std::numeric_limits<double>::infinity();
      for (double eps : {eps0, eps0 * 0.1, eps0 * 10.0}) {
        const double fd = fd_directional(bundle, layout, dir, eps);
        const double rel =
            std::abs(fd - row.adjoint) / std::max(std::abs(fd), 1e-12);
        if (rel < row.rel_err) {
          row.rel_err = rel;
          row.fd = fd;
          row.eps = eps;
        }
        if (row.rel_err < tolerance) break;
      }
      row.pass = row.rel_err < tolerance;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace elastodiff
