#include <elastodiff/errors.hpp>
#include <elastodiff/materials.hpp>

#include <cmath>

namespace elastodiff {

StressEval linear_stress(const Mat2& grad_u, double lambda, double mu) {
  StressEval out;
  const Mat2 eps = 0.5 * (grad_u + grad_u.transpose());
  const double tr = eps.trace();
  out.f = lambda * tr * Mat2::Identity() + 2.0 * mu * eps;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l)
          out.df_dgradu(i, j, k, l) = lambda * (i == j) * (k == l) +
                                      mu * ((i == k) * (j == l) + (i == l) * (j == k));
  out.df_dlambda = tr * Mat2::Identity();
  out.df_dmu = 2.0 * eps;
  return out;
}

StressEval neohookean_stress(const Mat2& grad_u, double lambda, double mu) {
  StressEval out;
  const Mat2 F = grad_u + Mat2::Identity();
  const double J = F.determinant();
  if (J <= 0.0)
    throw NonPositiveDeterminant("det(F) = " + std::to_string(J));
  const Mat2 Q = F.inverse().transpose();
  const double logJ = std::log(J);
  out.f = mu * (F - Q) + lambda * logJ * Q;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l)
          out.df_dgradu(i, j, k, l) =
              mu * ((i == k) * (j == l) + Q(i, l) * Q(k, j)) +
              lambda * (Q(i, j) * Q(k, l) - logJ * Q(i, l) * Q(k, j));
  out.df_dlambda = logJ * Q;
  out.df_dmu = F - Q;
  return out;
}

StressEval eval_stress(MaterialModel model, const Mat2& grad_u, double lambda, double mu) {
  return model == MaterialModel::Linear ? linear_stress(grad_u, lambda, mu)
                                        : neohookean_stress(grad_u, lambda, mu);
}

void lame_from_young_poisson(double E, double nu, bool plane_stress, double& lambda,
                             double& mu) {
  mu = E / (2.0 * (1.0 + nu));
  if (plane_stress)
    lambda = E * nu / (1.0 - nu * nu);
  else
    lambda = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
}

DampingEval damping_stress(const Mat2& grad_u_i, const Mat2& grad_u_prev, double alpha,
                           double beta, double dt) {
  DampingEval out;
  const Mat2 F = grad_u_i + Mat2::Identity();
  const Mat2 Fdot = (grad_u_i - grad_u_prev) / dt;
  const Mat2 Edot = 0.5 * (Fdot.transpose() * F + F.transpose() * Fdot);
  const Mat2 S = 2.0 * alpha * Edot + beta * Edot.trace() * Mat2::Identity();
  out.P = F * S;
  out.dP_dalpha = 2.0 * F * Edot;
  out.dP_dbeta = Edot.trace() * F;

  for (int k = 0; k < 2; ++k) {
    for (int l = 0; l < 2; ++l) {
      Mat2 E_kl = Mat2::Zero();
      E_kl(k, l) = 1.0;
      // current-step gradient: F and Fdot both move
      {
        const Mat2 dEdot = 0.5 * ((E_kl.transpose() * F + F.transpose() * E_kl) / dt +
                                  Fdot.transpose() * E_kl + E_kl.transpose() * Fdot);
        const Mat2 dS = 2.0 * alpha * dEdot + beta * dEdot.trace() * Mat2::Identity();
        const Mat2 dP = E_kl * S + F * dS;
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) out.dP_dgrad_i(i, j, k, l) = dP(i, j);
      }
      // previous-step gradient: only Fdot moves
      {
        const Mat2 dEdot = -0.5 * (E_kl.transpose() * F + F.transpose() * E_kl) / dt;
        const Mat2 dS = 2.0 * alpha * dEdot + beta * dEdot.trace() * Mat2::Identity();
        const Mat2 dP = F * dS;
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) out.dP_dgrad_prev(i, j, k, l) = dP(i, j);
      }
    }
  }
  return out;
}

}  // namespace elastodiff
