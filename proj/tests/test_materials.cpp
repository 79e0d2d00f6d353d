#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <elastodiff/assembly.hpp>
#include <elastodiff/errors.hpp>
#include <elastodiff/mesh_shapes.hpp>

#include "test_utils.hpp"

using namespace elastodiff;
using namespace elastodiff::testing;

namespace {

Mesh unit_right_triangle() {
  MatX2 v(3, 2);
  v << 0, 0, 1, 0, 0, 1;
  MatX3i t(1, 3);
  t << 0, 1, 2;
  return build_mesh(v, t);
}

// FD check of the four stress derivative blocks at one state.
void check_stress_derivatives(MaterialModel model, const Mat2& gu, double lambda,
                              double mu, double tol) {
  const auto s = eval_stress(model, gu, lambda, mu);
  const double eps = 1e-5 * std::max(1.0, gu.norm());
  for (int k = 0; k < 2; ++k) {
    for (int l = 0; l < 2; ++l) {
      Mat2 gp = gu, gm = gu;
      gp(k, l) += eps;
      gm(k, l) -= eps;
      const Mat2 dfd =
          (eval_stress(model, gp, lambda, mu).f - eval_stress(model, gm, lambda, mu).f) /
          (2.0 * eps);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          CHECK(std::abs(s.df_dgradu(i, j, k, l) - dfd(i, j)) <
                tol * std::max(1.0, std::abs(dfd(i, j))));
    }
  }
  const double el = 1e-5 * std::max(1.0, lambda);
  const Mat2 dfl = (eval_stress(model, gu, lambda + el, mu).f -
                    eval_stress(model, gu, lambda - el, mu).f) /
                   (2.0 * el);
  CHECK((s.df_dlambda - dfl).norm() < tol * std::max(1.0, dfl.norm()));
  const double em = 1e-5 * std::max(1.0, mu);
  const Mat2 dfm = (eval_stress(model, gu, lambda, mu + em).f -
                    eval_stress(model, gu, lambda, mu - em).f) /
                   (2.0 * em);
  CHECK((s.df_dmu - dfm).norm() < tol * std::max(1.0, dfm.norm()));
}

}  // namespace

TEST_CASE("linear stress closed-form values") {
  CHECK(linear_stress(Mat2::Zero(), 2.0, 3.0).f.norm() == 0.0);

  Mat2 gu;
  gu << 0.1, 0, 0, 0;
  const auto s = linear_stress(gu, 1.0, 1.0);
  CHECK(s.f(0, 0) == doctest::Approx(0.3));
  CHECK(s.f(1, 1) == doctest::Approx(0.1));
  CHECK(s.f(0, 1) == doctest::Approx(0.0));

  Mat2 rot;
  rot << 0, 1, -1, 0;  // antisymmetric: zero strain
  CHECK(linear_stress(rot, 1.0, 1.0).f.norm() < 1e-15);
}

TEST_CASE("neo-hookean stress closed-form values") {
  CHECK(neohookean_stress(Mat2::Zero(), 2.0, 3.0).f.norm() == 0.0);

  // rotation by 30 degrees: F orthogonal, det 1, stress-free
  const double c = std::cos(0.5235987755982988), sn = std::sin(0.5235987755982988);
  Mat2 g;
  g << c - 1.0, -sn, sn, c - 1.0;
  CHECK(neohookean_stress(g, 1.3, 0.7).f.norm() < 1e-14);

  // F = diag(2,1), lambda = 0, mu = 1
  Mat2 stretch = Mat2::Zero();
  stretch(0, 0) = 1.0;
  const auto s = neohookean_stress(stretch, 0.0, 1.0);
  CHECK(s.f(0, 0) == doctest::Approx(1.5));
  CHECK(s.f(1, 1) == doctest::Approx(0.0));

  Mat2 inverted = Mat2::Zero();
  inverted(0, 0) = -2.0;  // det F = -1
  CHECK_THROWS_AS(neohookean_stress(inverted, 1.0, 1.0), NonPositiveDeterminant);
}

TEST_CASE("constitutive derivative blocks match finite differences") {
  auto rng = make_rng(11);
  for (int it = 0; it < 50; ++it) {
    const Mat2 gu = random_mat2(rng, 0.15);
    const double lambda = uniform(rng, 0.2, 3.0);
    const double mu = uniform(rng, 0.2, 3.0);
    check_stress_derivatives(MaterialModel::Linear, gu, lambda, mu, 1e-6);
    if ((gu + Mat2::Identity()).determinant() > 0.2)
      check_stress_derivatives(MaterialModel::NeoHookean, gu, lambda, mu, 1e-6);
  }
}

TEST_CASE("major symmetry of hyperelastic tangent") {
  auto rng = make_rng(3);
  for (int it = 0; it < 10; ++it) {
    const Mat2 gu = random_mat2(rng, 0.1);
    for (auto model : {MaterialModel::Linear, MaterialModel::NeoHookean}) {
      const auto s = eval_stress(model, gu, 1.7, 0.9);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          for (int k = 0; k < 2; ++k)
            for (int l = 0; l < 2; ++l)
              CHECK(std::abs(s.df_dgradu(i, j, k, l) - s.df_dgradu(k, l, i, j)) < 1e-12);
    }
  }
}

TEST_CASE("damping stress: zero cases and FD consistency") {
  const double dt = 0.1;
  Mat2 g = random_mat2(*(new std::mt19937_64(5)), 0.1);  // any state
  const auto d0 = damping_stress(g, g, 1.0, 2.0, dt);
  CHECK(d0.P.norm() < 1e-15);
  const auto d1 = damping_stress(g, Mat2::Zero(), 0.0, 0.0, dt);
  CHECK(d1.P.norm() == 0.0);

  auto rng = make_rng(17);
  for (int it = 0; it < 20; ++it) {
    const Mat2 gi = random_mat2(rng, 0.2);
    const Mat2 gp = random_mat2(rng, 0.2);
    const double alpha = uniform(rng, 0.0, 2.0);
    const double beta = uniform(rng, 0.0, 2.0);
    const auto d = damping_stress(gi, gp, alpha, beta, dt);
    const double eps = 1e-6;
    for (int k = 0; k < 2; ++k) {
      for (int l = 0; l < 2; ++l) {
        Mat2 a = gi, b = gi;
        a(k, l) += eps;
        b(k, l) -= eps;
        const Mat2 fd =
            (damping_stress(a, gp, alpha, beta, dt).P - damping_stress(b, gp, alpha, beta, dt).P) /
            (2.0 * eps);
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j)
            CHECK(std::abs(d.dP_dgrad_i(i, j, k, l) - fd(i, j)) <
                  1e-5 * std::max(1.0, std::abs(fd(i, j))));
        Mat2 ap = gp, bp = gp;
        ap(k, l) += eps;
        bp(k, l) -= eps;
        const Mat2 fdp =
            (damping_stress(gi, ap, alpha, beta, dt).P - damping_stress(gi, bp, alpha, beta, dt).P) /
            (2.0 * eps);
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j)
            CHECK(std::abs(d.dP_dgrad_prev(i, j, k, l) - fdp(i, j)) <
                  1e-5 * std::max(1.0, std::abs(fdp(i, j))));
      }
    }
    // alpha/beta derivatives (P is linear in both)
    const Mat2 da = (damping_stress(gi, gp, alpha + 1e-5, beta, dt).P -
                     damping_stress(gi, gp, alpha - 1e-5, beta, dt).P) /
                    2e-5;
    CHECK((d.dP_dalpha - da).norm() < 1e-8 * std::max(1.0, da.norm()));
    const Mat2 db = (damping_stress(gi, gp, alpha, beta + 1e-5, dt).P -
                     damping_stress(gi, gp, alpha, beta - 1e-5, dt).P) /
                    2e-5;
    CHECK((d.dP_dbeta - db).norm() < 1e-8 * std::max(1.0, db.norm()));
  }
}

TEST_CASE("damping stress example: uniaxial rate with symbolic substitution") {
  // F_i = diag(1 + delta, 1), F_prev = I, alpha = 1, beta = 0, dt = 0.1
  const double delta = 0.1, dt = 0.1;
  Mat2 gi = Mat2::Zero();
  gi(0, 0) = delta;
  const auto d = damping_stress(gi, Mat2::Zero(), 1.0, 0.0, dt);
  // Fdot = diag(delta/dt, 0); Edot = 1/2 (Fdot^T F + F^T Fdot) = diag(delta/dt (1+delta), 0)
  // P = F * 2 Edot = diag(2 (1+delta)^2 delta/dt, 0)
  const double expect = 2.0 * (1.0 + delta) * (1.0 + delta) * delta / dt;
  CHECK(d.P(0, 0) == doctest::Approx(expect));
  CHECK(std::abs(d.P(1, 1)) < 1e-15);
}

TEST_CASE("single-element volume force matches dense hand assembly") {
  // P1 stiffness K = area * B^T C B against assemble_internal_force at
  // prescribed u (linear elasticity is exactly K u).
  const Mesh mesh = unit_right_triangle();
  const FESpace space = FESpace::build(mesh, 1);
  const auto cache = build_assembly_cache(mesh, space, mesh.rest_vertices);
  const double lambda = 1.0, mu = 1.0;
  const auto mat = uniform_material(1, lambda, mu, 1.0, MaterialModel::Linear);

  // engineering B-matrix (3x6), Voigt [xx, yy, 2*eps_xy]
  const double area = 0.5;
  // gradients of P1 hats on this triangle
  const Vec2 g0(-1, -1), g1(1, 0), g2(0, 1);
  Eigen::Matrix<double, 3, 6> B = Eigen::Matrix<double, 3, 6>::Zero();
  const Vec2 g[3] = {g0, g1, g2};
  for (int k = 0; k < 3; ++k) {
    B(0, 2 * k) = g[k].x();
    B(1, 2 * k + 1) = g[k].y();
    B(2, 2 * k) = g[k].y();
    B(2, 2 * k + 1) = g[k].x();
  }
  Eigen::Matrix3d C;
  C << lambda + 2 * mu, lambda, 0, lambda, lambda + 2 * mu, 0, 0, 0, mu;
  const Eigen::Matrix<double, 6, 6> K = area * B.transpose() * C * B;

  auto rng = make_rng(23);
  const VecX u = random_vector(rng, 6, 0.3);
  const VecX h = assemble_internal_force(cache, space, mat, u);
  const VecX expect = K * u;
  CHECK((h - expect).norm() < 1e-12 * std::max(1.0, expect.norm()));

  // zero and translation states give zero force
  CHECK(assemble_internal_force(cache, space, mat, VecX::Zero(6)).norm() == 0.0);
  VecX trans(6);
  trans << 0.3, -0.2, 0.3, -0.2, 0.3, -0.2;
  CHECK(assemble_internal_force(cache, space, mat, trans).norm() < 1e-14);
}

TEST_CASE("rigid motions: translations for both models, rotations for neo-hookean") {
  const Mesh mesh = disk_mesh(Vec2(0, 0), 1.0, 2);
  const FESpace space = FESpace::build(mesh, 1);
  const auto cache = build_assembly_cache(mesh, space, mesh.rest_vertices);
  for (auto model : {MaterialModel::Linear, MaterialModel::NeoHookean}) {
    const auto mat = uniform_material(mesh.n_triangles(), 1.3, 0.8, 1.0, model);
    VecX trans(space.n_dofs());
    for (int n = 0; n < space.n_nodes; ++n) {
      trans(2 * n) = 0.12;
      trans(2 * n + 1) = -0.05;
    }
    CHECK(assemble_internal_force(cache, space, mat, trans).lpNorm<Eigen::Infinity>() <
          1e-13);
  }
  // rotation: u = (R - I) x
  const auto nh = uniform_material(mesh.n_triangles(), 1.3, 0.8, 1.0,
                                   MaterialModel::NeoHookean);
  const double th = 0.4;
  Mat2 R;
  R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  VecX rot(space.n_dofs());
  const MatX2 pos = space.node_positions(mesh.rest_vertices);
  for (int n = 0; n < space.n_nodes; ++n) {
    const Vec2 x = pos.row(n);
    const Vec2 u = R * x - x;
    rot(2 * n) = u.x();
    rot(2 * n + 1) = u.y();
  }
  CHECK(assemble_internal_force(cache, space, nh, rot).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("force jacobian matches finite differences and is symmetric") {
  const Mesh mesh = box_mesh(Vec2(0, 0), Vec2(1, 1), 2, 1);
  for (int order : {1, 2}) {
    const FESpace space = FESpace::build(mesh, order);
    const auto cache = build_assembly_cache(mesh, space, mesh.rest_vertices);
    auto rng = make_rng(29 + order);
    for (auto model : {MaterialModel::Linear, MaterialModel::NeoHookean}) {
      const auto mat = uniform_material(mesh.n_triangles(), 1.1, 0.9, 1.0, model);
      const VecX u = random_vector(rng, space.n_dofs(), 0.02);
      std::vector<Triplet> trips;
      add_internal_force_jacobian(cache, space, mat, u, 1.0, trips);
      const SpMat A = build_full(trips, space.n_dofs());
      CHECK((MatX(A) - MatX(A).transpose()).norm() < 1e-12 * MatX(A).norm());
      const double eps = 1e-6;
      for (int c = 0; c < space.n_dofs(); c += 3) {
        VecX up = u, um = u;
        up(c) += eps;
        um(c) -= eps;
        const VecX fd = (assemble_internal_force(cache, space, mat, up) -
                         assemble_internal_force(cache, space, mat, um)) /
                        (2.0 * eps);
        const VecX col = VecX(MatX(A).col(c));
        CHECK((col - fd).norm() < 1e-6 * std::max(1.0, fd.norm()));
      }
      // neo-hookean at u = 0 linearizes to the linear stiffness
      if (model == MaterialModel::NeoHookean) {
        std::vector<Triplet> t0, t1;
        add_internal_force_jacobian(cache, space, mat, VecX::Zero(space.n_dofs()), 1.0, t0);
        const auto lin = uniform_material(mesh.n_triangles(), 1.1, 0.9, 1.0,
                                          MaterialModel::Linear);
        add_internal_force_jacobian(cache, space, lin, VecX::Zero(space.n_dofs()), 1.0, t1);
        const MatX D = MatX(build_full(t0, space.n_dofs())) -
                       MatX(build_full(t1, space.n_dofs()));
        CHECK(D.norm() < 1e-11 * MatX(build_full(t1, space.n_dofs())).norm());
      }
    }
  }
}

TEST_CASE("mass matrix: exact element values and scaling") {
  const Mesh mesh = unit_right_triangle();
  const FESpace space = FESpace::build(mesh, 1);
  const auto cache = build_assembly_cache(mesh, space, mesh.rest_vertices);
  const auto mat = uniform_material(1, 1.0, 1.0, 1.0, MaterialModel::Linear);
  const SpMat M = assemble_mass(cache, space, mat);
  const double area = 0.5;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 2; ++c)
        CHECK(MatX(M)(2 * a + c, 2 * b + c) ==
              doctest::Approx(area / 12.0 * (a == b ? 2.0 : 1.0)));

  // uniform scale by s scales M by s^2
  const MatX2 scaled = 1.7 * mesh.rest_vertices;
  const auto cache2 = build_assembly_cache(mesh, space, scaled);
  const SpMat M2 = assemble_mass(cache2, space, mat);
  CHECK((MatX(M2) - 1.7 * 1.7 * MatX(M)).norm() < 1e-12);
}

TEST_CASE("shape products match finite differences over vertex perturbations") {
  const Mesh mesh = box_mesh(Vec2(0, 0), Vec2(1, 1), 2, 2);
  const FESpace space = FESpace::build(mesh, 1);
  auto rng = make_rng(31);
  const int nd = space.n_dofs();
  const VecX u = random_vector(rng, nd, 0.02);
  const VecX uprev = random_vector(rng, nd, 0.02);
  const VecX p = random_vector(rng, nd, 1.0);
  const double dt = 0.05;
  const DampingParams damping{0.7, 1.3};
  const Vec2 g(0.3, -9.8);

  for (auto model : {MaterialModel::Linear, MaterialModel::NeoHookean}) {
    const auto mat = uniform_material(mesh.n_triangles(), 1.4, 0.6, 2.0, model);
    const auto cache = build_assembly_cache(mesh, space, mesh.rest_vertices);

    const VecX grad_elastic =
        internal_force_shape_product(cache, space, mat, u, p, mesh.n_vertices());
    const VecX grad_damping = damping_shape_product(cache, space, damping, u, uprev, dt,
                                                    p, mesh.n_vertices());
    const VecX grad_body =
        body_force_shape_product(cache, space, mat, g, p, mesh.n_vertices());
    const VecX grad_mass =
        mass_shape_product(cache, space, mat, p, uprev, mesh.n_vertices());

    const double eps = 1e-7;
    for (int vd = 0; vd < 2 * mesh.n_vertices(); vd += 3) {
      auto perturbed = [&](double sign) {
        MatX2 shape = mesh.rest_vertices;
        shape(vd / 2, vd % 2) += sign * eps;
        return build_assembly_cache(mesh, space, shape);
      };
      const auto cp = perturbed(1.0), cm = perturbed(-1.0);

      const double fd_e = (p.dot(assemble_internal_force(cp, space, mat, u)) -
                           p.dot(assemble_internal_force(cm, space, mat, u))) /
                          (2.0 * eps);
      CHECK(rel_err(grad_elastic(vd), fd_e) < 1e-5);

      const double fd_d =
          (p.dot(assemble_damping_force(cp, space, damping, u, uprev, dt)) -
           p.dot(assemble_damping_force(cm, space, damping, u, uprev, dt))) /
          (2.0 * eps);
      CHECK(rel_err(grad_damping(vd), fd_d) < 1e-5);

      const double fd_b = (p.dot(assemble_body_force(cp, space, mat, g)) -
                           p.dot(assemble_body_force(cm, space, mat, g))) /
                          (2.0 * eps);
      CHECK(rel_err(grad_body(vd), fd_b) < 1e-5);

      const double fd_m = (p.dot(assemble_mass(cp, space, mat) * uprev) -
                           p.dot(assemble_mass(cm, space, mat) * uprev)) /
                          (2.0 * eps);
      CHECK(rel_err(grad_mass(vd), fd_m) < 1e-5);
    }
  }
}

TEST_CASE("material parameter products match finite differences") {
  const Mesh mesh = box_mesh(Vec2(0, 0), Vec2(1, 1), 2, 1);
  const FESpace space = FESpace::build(mesh, 1);
  const auto cache = build_assembly_cache(mesh, space, mesh.rest_vertices);
  auto rng = make_rng(37);
  const VecX u = random_vector(rng, space.n_dofs(), 0.05);
  const VecX p = random_vector(rng, space.n_dofs(), 1.0);

  for (auto model : {MaterialModel::Linear, MaterialModel::NeoHookean}) {
    MaterialField mat = uniform_material(mesh.n_triangles(), 1.2, 0.8, 1.0, model);
    // rest state: both parameter sensitivities vanish
    VecX dl0, dm0;
    internal_force_material_products(cache, space, mat, VecX::Zero(space.n_dofs()), p,
                                     dl0, dm0);
    CHECK(dl0.norm() < 1e-14);
    CHECK(dm0.norm() < 1e-14);

    VecX dlam, dmu;
    internal_force_material_products(cache, space, mat, u, p, dlam, dmu);
    const double eps = 1e-6;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
      MaterialField mp = mat, mm = mat;
      mp.lambda(t) += eps;
      mm.lambda(t) -= eps;
      double fd = (p.dot(assemble_internal_force(cache, space, mp, u)) -
                   p.dot(assemble_internal_force(cache, space, mm, u))) /
                  (2.0 * eps);
      CHECK(rel_err(dlam(t), fd) < 1e-6);
      mp = mat;
      mm = mat;
      mp.mu(t) += eps;
      mm.mu(t) -= eps;
      fd = (p.dot(assemble_internal_force(cache, space, mp, u)) -
            p.dot(assemble_internal_force(cache, space, mm, u))) /
           (2.0 * eps);
      CHECK(rel_err(dmu(t), fd) < 1e-6);
    }
  }
}

TEST_CASE("damping coefficient products match finite differences") {
  const Mesh mesh = box_mesh(Vec2(0, 0), Vec2(1, 1), 2, 1);
  const FESpace space = FESpace::build(mesh, 1);
  const auto cache = build_assembly_cache(mesh, space, mesh.rest_vertices);
  auto rng = make_rng(41);
  const VecX u = random_vector(rng, space.n_dofs(), 0.05);
  const VecX uprev = random_vector(rng, space.n_dofs(), 0.05);
  const VecX p = random_vector(rng, space.n_dofs(), 1.0);
  const double dt = 0.07;
  const DampingParams damping{0.9, 0.4};

  double da, db;
  damping_coeff_products(cache, space, damping, u, uprev, dt, p, da, db);
  const double eps = 1e-6;
  auto eval = [&](double a, double b) {
    return p.dot(assemble_damping_force(cache, space, DampingParams{a, b}, u, uprev, dt));
  };
  CHECK(rel_err(da, (eval(damping.alpha + eps, damping.beta) -
                     eval(damping.alpha - eps, damping.beta)) /
                        (2 * eps)) < 1e-6);
  CHECK(rel_err(db, (eval(damping.alpha, damping.beta + eps) -
                     eval(damping.alpha, damping.beta - eps)) /
                        (2 * eps)) < 1e-6);
}
