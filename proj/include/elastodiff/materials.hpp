#pragma once

#include <elastodiff/types.hpp>

namespace elastodiff {

enum class MaterialModel { Linear, NeoHookean };

/// Per-element constitutive parameters (piecewise constant).
struct MaterialField {
  VecX lambda;
  VecX mu;
  VecX rho;
  MaterialModel model = MaterialModel::Linear;
};

/// Stress and its derivative blocks at one quadrature point.
struct StressEval {
  Mat2 f;
  Tensor4 df_dgradu;
  Mat2 df_dlambda;
  Mat2 df_dmu;
};

StressEval linear_stress(const Mat2& grad_u, double lambda, double mu);
/// Throws NonPositiveDeterminant if det(grad_u + I) <= 0.
StressEval neohookean_stress(const Mat2& grad_u, double lambda, double mu);
StressEval eval_stress(MaterialModel model, const Mat2& grad_u, double lambda, double mu);

/// Lame parameters from Young's modulus and Poisson ratio, 2D conversions.
void lame_from_young_poisson(double E, double nu, bool plane_stress, double& lambda,
                             double& mu);

struct DampingParams {
  double alpha = 0.0;
  double beta = 0.0;
  bool active() const { return alpha != 0.0 || beta != 0.0; }
};

/// Viscous first Piola-Kirchhoff stress P = F (2a Edot + b tr(Edot) I) with
/// Fdot = (F_i - F_prev)/dt, plus derivatives with respect to both
/// displacement gradients and the damping coefficients.
struct DampingEval {
  Mat2 P;
  Tensor4 dP_dgrad_i;
  Tensor4 dP_dgrad_prev;
  Mat2 dP_dalpha;
  Mat2 dP_dbeta;
};
DampingEval damping_stress(const Mat2& grad_u_i, const Mat2& grad_u_prev, double alpha,
                           double beta, double dt);

}  // namespace elastodiff
