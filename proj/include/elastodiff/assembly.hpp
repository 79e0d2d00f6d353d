#pragma once

#include <elastodiff/fe_space.hpp>
#include <elastodiff/materials.hpp>
#include <elastodiff/quadrature.hpp>

namespace elastodiff {

/// Precomputed per-element quadrature data for one shape configuration.
/// Geometry is piecewise linear, so jacobians are constant per element.
struct AssemblyCache {
  struct Elem {
    std::array<int, 6> nodes{};
    int nn = 3;
    double detJ = 0.0;
    MatX2 dxi;  // 3x2 physical gradients of the P1 geometry basis
    std::vector<double> w;
    std::vector<VecX> phi;
    std::vector<MatX2> dphi;
    std::vector<Vec2> xq;
  };
  std::vector<Elem> elems;
  Quadrature quad;
};

AssemblyCache build_assembly_cache(const Mesh& mesh, const FESpace& space,
                                   const MatX2& shape);

Vec2 element_value(const AssemblyCache::Elem& e, const VecX& u_full, int qp);
Mat2 element_grad(const AssemblyCache::Elem& e, const VecX& u_full, int qp);

SpMat build_full(const std::vector<Triplet>& trips, int n);
SpMat build_reduced(const std::vector<Triplet>& full_trips, const FESpace& space);

/// Weak-form stress integral, component l of the result is
/// integral of f(grad u) : grad(phi_l). Equals K*u for linear elasticity.
VecX assemble_internal_force(const AssemblyCache& cache, const FESpace& space,
                             const MaterialField& mat, const VecX& u_full);

void add_internal_force_jacobian(const AssemblyCache& cache, const FESpace& space,
                                 const MaterialField& mat, const VecX& u_full,
                                 double scale, std::vector<Triplet>& trips);

VecX assemble_damping_force(const AssemblyCache& cache, const FESpace& space,
                            const DampingParams& damping, const VecX& u_full,
                            const VecX& u_prev_full, double dt);

void add_damping_jacobians(const AssemblyCache& cache, const FESpace& space,
                           const DampingParams& damping, const VecX& u_full,
                           const VecX& u_prev_full, double dt, double scale,
                           std::vector<Triplet>* trips_i,
                           std::vector<Triplet>* trips_prev);

/// Mass matrix (full indices), symmetric positive definite.
SpMat assemble_mass(const AssemblyCache& cache, const FESpace& space,
                    const MaterialField& mat);

/// Body force: integral of rho g . phi_l (gravity).
VecX assemble_body_force(const AssemblyCache& cache, const FESpace& space,
                         const MaterialField& mat, const Vec2& g);

// ---- shape-derivative products (vectors over shape DOFs, 2 per vertex) ----

/// p^T d/dq of assemble_internal_force at fixed u coefficients.
VecX internal_force_shape_product(const AssemblyCache& cache, const FESpace& space,
                                  const MaterialField& mat, const VecX& u_full,
                                  const VecX& p_full, int n_vertices);

VecX damping_shape_product(const AssemblyCache& cache, const FESpace& space,
                           const DampingParams& damping, const VecX& u_full,
                           const VecX& u_prev_full, double dt, const VecX& p_full,
                           int n_vertices);

/// p^T d/dq of the body force: integral of rho (g . p) div(theta).
VecX body_force_shape_product(const AssemblyCache& cache, const FESpace& space,
                              const MaterialField& mat, const Vec2& g,
                              const VecX& p_full, int n_vertices);

/// a^T (d_q M) b = integral of rho (a . b) div(theta).
VecX mass_shape_product(const AssemblyCache& cache, const FESpace& space,
                        const MaterialField& mat, const VecX& a_full,
                        const VecX& b_full, int n_vertices);

/// Per-element products p^T d/d(lambda_e) and p^T d/d(mu_e) of the
/// internal force integral.
void internal_force_material_products(const AssemblyCache& cache, const FESpace& space,
                                      const MaterialField& mat, const VecX& u_full,
                                      const VecX& p_full, VecX& d_lambda, VecX& d_mu);

/// Products p^T d/d(alpha) and p^T d/d(beta) of the damping force integral.
void damping_coeff_products(const AssemblyCache& cache, const FESpace& space,
                            const DampingParams& damping, const VecX& u_full,
                            const VecX& u_prev_full, double dt, const VecX& p_full,
                            double& d_alpha, double& d_beta);

}  // namespace elastodiff
