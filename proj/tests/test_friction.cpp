#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <elastodiff/friction.hpp>
#include <elastodiff/mesh_shapes.hpp>

#include "test_utils.hpp"

using namespace elastodiff;
using namespace elastodiff::testing;

namespace {

struct FrictionFixture {
  Mesh mesh;
  BarrierParams barrier{0.08, 10.0};
  FrictionParams fric;
  VecX u, uprev;
  std::vector<ContactPair> pairs;

  explicit FrictionFixture(uint64_t seed, double slide_scale) {
    Mesh bottom = box_mesh(Vec2(-1, -1), Vec2(2, 1), 4, 2);
    Mesh top = box_mesh(Vec2(-0.6, barrier.dhat / 2), Vec2(1.2, 0.5), 3, 1);
    mesh = merge_meshes({bottom, top});
    fric.eta = 1e-3;
    fric.pairs.emplace_back(0, 1, 0.3);
    auto rng = make_rng(seed);
    uprev = random_vector(rng, 2 * mesh.n_vertices(), 1e-3);
    u = uprev + random_vector(rng, 2 * mesh.n_vertices(), slide_scale);
    pairs = build_active_set(mesh, mesh.rest_vertices, uprev, barrier);
  }

  VecX force(const VecX& ui, const VecX& up, const MatX2& shape,
             const FrictionParams& fp) const {
    VecX f = VecX::Zero(2 * mesh.n_vertices());
    const auto lagged = build_active_set(mesh, shape, up, barrier);
    add_friction_forces(mesh, shape, barrier, fp, lagged, ui, up, f, nullptr, nullptr,
                        1.0);
    return f;
  }
};

}  // namespace

TEST_CASE("no sliding and zero coefficient give zero force") {
  FrictionFixture fx(7, 1e-4);
  REQUIRE(!fx.pairs.empty());
  // u == uprev: tau = 0
  VecX f = fx.force(fx.uprev, fx.uprev, fx.mesh.rest_vertices, fx.fric);
  CHECK(f.norm() == 0.0);
  // gamma = 0
  FrictionParams off = fx.fric;
  std::get<2>(off.pairs[0]) = 0.0;
  f = fx.force(fx.u, fx.uprev, fx.mesh.rest_vertices, off);
  CHECK(f.norm() == 0.0);
}

TEST_CASE("saturated sliding: per-pair magnitude gamma N A and bound") {
  FrictionFixture fx(11, 0.0);
  // impose a uniform tangential slide on the top body, large against eta
  VecX u = fx.uprev;
  for (int v = 0; v < fx.mesh.n_vertices(); ++v)
    if (fx.mesh.vertex_body[v] == 1) u(2 * v) += 50.0 * fx.fric.eta;

  const MatX2 XP = deformed_vertex_positions(fx.mesh, fx.mesh.rest_vertices, fx.uprev);
  for (const auto& pair : fx.pairs) {
    VecX f = VecX::Zero(2 * fx.mesh.n_vertices());
    add_friction_forces(fx.mesh, fx.mesh.rest_vertices, fx.barrier, fx.fric, {pair}, u,
                        fx.uprev, f, nullptr, nullptr, 1.0);
    const auto de = pair_distance(pair, XP, false);
    double b, db, ddb;
    barrier(de.d, fx.barrier.dhat, b, db, ddb);
    const double N = fx.barrier.kappa * std::abs(db) * pair.area;
    const double gamma = 0.3;
    // force on the vertex primitive has magnitude gamma N A (f_eta = 1)
    const Vec2 fv(f(2 * pair.v), f(2 * pair.v + 1));
    CHECK(fv.norm() == doctest::Approx(gamma * N * pair.area).epsilon(1e-9));
    // and opposes the slide direction of the vertex relative to the edge
    const int body_v = fx.mesh.vertex_body[pair.v];
    const double slide_sign = body_v == 1 ? 1.0 : -1.0;
    CHECK(fv.x() * slide_sign < 0.0);
  }
}

TEST_CASE("friction force magnitude never exceeds gamma N A") {
  for (uint64_t seed : {1, 2, 3}) {
    FrictionFixture fx(seed, 5e-4);
    const MatX2 XP = deformed_vertex_positions(fx.mesh, fx.mesh.rest_vertices, fx.uprev);
    for (const auto& pair : fx.pairs) {
      VecX f = VecX::Zero(2 * fx.mesh.n_vertices());
      add_friction_forces(fx.mesh, fx.mesh.rest_vertices, fx.barrier, fx.fric, {pair},
                          fx.u, fx.uprev, f, nullptr, nullptr, 1.0);
      const auto de = pair_distance(pair, XP, false);
      double b, db, ddb;
      barrier(de.d, fx.barrier.dhat, b, db, ddb);
      const double cap = 0.3 * fx.barrier.kappa * std::abs(db) * pair.area * pair.area;
      const Vec2 fv(f(2 * pair.v), f(2 * pair.v + 1));
      CHECK(fv.norm() <= cap * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("derivative blocks match finite differences (below and above eta)") {
  for (double slide : {2e-4, 5e-3}) {  // |tau| below and above eta regimes
    for (uint64_t seed : {21, 22, 23, 24, 25, 26, 27, 28, 29, 30}) {
      FrictionFixture fx(seed, slide);
      REQUIRE(!fx.pairs.empty());
      const int nd = 2 * fx.mesh.n_vertices();

      VecX f0 = VecX::Zero(nd);
      std::vector<Triplet> ti, tp;
      add_friction_forces(fx.mesh, fx.mesh.rest_vertices, fx.barrier, fx.fric, fx.pairs,
                          fx.u, fx.uprev, f0, &ti, &tp, 1.0);
      REQUIRE(f0.norm() > 0.0);
      const MatX Ji = MatX(build_full(ti, nd));
      const MatX Jp = MatX(build_full(tp, nd));

      const double eps = 1e-7;
      for (int d = 0; d < nd; d += 5) {
        // d/du_i at fixed lagged state
        VecX up = fx.u, um = fx.u;
        up(d) += eps;
        um(d) -= eps;
        VecX fp = VecX::Zero(nd), fm = VecX::Zero(nd);
        add_friction_forces(fx.mesh, fx.mesh.rest_vertices, fx.barrier, fx.fric,
                            fx.pairs, up, fx.uprev, fp, nullptr, nullptr, 1.0);
        add_friction_forces(fx.mesh, fx.mesh.rest_vertices, fx.barrier, fx.fric,
                            fx.pairs, um, fx.uprev, fm, nullptr, nullptr, 1.0);
        VecX fd = (fp - fm) / (2 * eps);
        CHECK((VecX(Ji.col(d)) - fd).lpNorm<Eigen::Infinity>() <
              1e-5 * std::max(1.0, fd.lpNorm<Eigen::Infinity>()));

        // d/du_prev: the lagged active set is rebuilt from the perturbed state
        VecX pp = fx.uprev, pm = fx.uprev;
        pp(d) += eps;
        pm(d) -= eps;
        fp.setZero();
        fm.setZero();
        add_friction_forces(fx.mesh, fx.mesh.rest_vertices, fx.barrier, fx.fric,
                            build_active_set(fx.mesh, fx.mesh.rest_vertices, pp, fx.barrier),
                            fx.u, pp, fp, nullptr, nullptr, 1.0);
        add_friction_forces(fx.mesh, fx.mesh.rest_vertices, fx.barrier, fx.fric,
                            build_active_set(fx.mesh, fx.mesh.rest_vertices, pm, fx.barrier),
                            fx.u, pm, fm, nullptr, nullptr, 1.0);
        fd = (fp - fm) / (2 * eps);
        CHECK((VecX(Jp.col(d)) - fd).lpNorm<Eigen::Infinity>() <
              1e-5 * std::max(1.0, fd.lpNorm<Eigen::Infinity>()));
      }
    }
  }
}

TEST_CASE("gamma product matches finite differences and linearity") {
  FrictionFixture fx(31, 1e-3);
  const int nd = 2 * fx.mesh.n_vertices();
  auto rng = make_rng(33);
  const VecX p = random_vector(rng, nd, 1.0);

  const VecX gp = friction_gamma_product(fx.mesh, fx.mesh.rest_vertices, fx.barrier,
                                         fx.fric, fx.pairs, fx.u, fx.uprev, p);
  REQUIRE(gp.size() == 1);
  const double eps = 1e-6;
  FrictionParams fplus = fx.fric, fminus = fx.fric;
  std::get<2>(fplus.pairs[0]) += eps;
  std::get<2>(fminus.pairs[0]) -= eps;
  const double fd = (p.dot(fx.force(fx.u, fx.uprev, fx.mesh.rest_vertices, fplus)) -
                     p.dot(fx.force(fx.u, fx.uprev, fx.mesh.rest_vertices, fminus))) /
                    (2 * eps);
  CHECK(rel_err(gp(0), fd) < 1e-8);  // force is linear in gamma

  // gamma product is defined at gamma = 0 as well
  FrictionParams zero = fx.fric;
  std::get<2>(zero.pairs[0]) = 0.0;
  const VecX gp0 = friction_gamma_product(fx.mesh, fx.mesh.rest_vertices, fx.barrier,
                                          zero, fx.pairs, fx.u, fx.uprev, p);
  CHECK(rel_err(gp0(0), gp(0)) < 1e-12);
}

TEST_CASE("shape product matches finite differences") {
  FrictionFixture fx(41, 1e-3);
  const int nd = 2 * fx.mesh.n_vertices();
  auto rng = make_rng(43);
  const VecX p = random_vector(rng, nd, 1.0);

  const VecX sp = friction_shape_product(fx.mesh, fx.mesh.rest_vertices, fx.barrier,
                                         fx.fric, fx.pairs, fx.u, fx.uprev, p);
  const double eps = 1e-7;
  int checked = 0;
  for (int d = 0; d < sp.size(); d += 3) {
    auto eval = [&](double sign) {
      MatX2 shape = fx.mesh.rest_vertices;
      shape(d / 2, d % 2) += sign * eps;
      return p.dot(fx.force(fx.u, fx.uprev, shape, fx.fric));
    };
    const double fd = (eval(1.0) - eval(-1.0)) / (2 * eps);
    CHECK(std::abs(sp(d) - fd) < 1e-5 * std::max(1.0, std::abs(fd)));
    if (fd != 0.0) ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("tau -> 0 has zero force but finite nonzero stiffness") {
  FrictionFixture fx(51, 0.0);
  REQUIRE(!fx.pairs.empty());
  const int nd = 2 * fx.mesh.n_vertices();
  VecX f = VecX::Zero(nd);
  std::vector<Triplet> ti;
  add_friction_forces(fx.mesh, fx.mesh.rest_vertices, fx.barrier, fx.fric, fx.pairs,
                      fx.uprev, fx.uprev, f, &ti, nullptr, 1.0);
  CHECK(f.norm() == 0.0);
  CHECK(build_full(ti, nd).norm() > 0.0);
}
