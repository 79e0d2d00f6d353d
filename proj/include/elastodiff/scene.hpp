#pragma once

#include <elastodiff/assembly.hpp>
#include <elastodiff/contact.hpp>
#include <elastodiff/fe_space.hpp>
#include <elastodiff/friction.hpp>
#include <elastodiff/materials.hpp>

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace elastodiff {

/// Piecewise-linear-in-time scalar table; constant outside its span.
struct LinearTable {
  std::vector<std::pair<double, double>> samples;  // (t, value), sorted
  double operator()(double t) const;
  static LinearTable constant(double v) { return {{{0.0, v}}}; }
};

struct DirichletBC {
  int tag = 0;
  std::array<bool, 2> comp{true, true};
  std::array<LinearTable, 2> value{LinearTable::constant(0.0),
                                   LinearTable::constant(0.0)};
};

struct NeumannBC {
  int tag = 0;
  Vec2 traction = Vec2::Zero();
  LinearTable scale = LinearTable::constant(1.0);
};

enum class ICParameterization { PerNode, PerBody };

struct Scene {
  Mesh mesh;
  int order = 1;
  FESpace space;

  MaterialField material;
  DampingParams damping;

  bool contact_enabled = false;
  BarrierParams barrier;
  FrictionParams friction;

  Vec2 gravity = Vec2::Zero();
  std::vector<DirichletBC> dirichlet;
  std::vector<NeumannBC> neumann;
  std::set<int> obstacle_bodies;  // all their DOFs are fixed at zero

  // transient setup; n_steps == 0 means a static problem
  double dt = 0.0;
  int n_steps = 0;
  int bdf_order = 1;
  VecX u0, v0;  // full-size nodal fields
  ICParameterization ic_mode = ICParameterization::PerNode;

  bool transient() const { return n_steps > 0; }

  /// Builds the FE space, Dirichlet maps and checks invariants. Must be
  /// called after construction and after mesh/BC edits.
  void finalize();

  /// Rebuilds shape-dependent state after rest-vertex changes (topology,
  /// BCs and DOF reduction are unaffected).
  AssemblyCache build_cache() const;

  /// Overwrites prescribed entries of a full displacement vector with the
  /// Dirichlet data at time t.
  void apply_dirichlet(VecX& u_full, double t) const;

  /// Neumann load vector at time t (full indices, current shape).
  VecX neumann_force(double t) const;

  /// p^T d/dq of the Neumann load (boundary measure change).
  VecX neumann_shape_product(double t, const VecX& p_full) const;

  std::vector<int> optimizable_elements() const;  // non-obstacle triangles
  bool node_is_obstacle(int node) const;
};

// ---------------- parameter packing ----------------

enum class ParamBlock { Shape, Lambda, Mu, Gamma, Alpha, Beta, U0, V0 };

const char* param_block_name(ParamBlock b);
std::optional<ParamBlock> param_block_from_name(const std::string& name);

/// Flat layout of all optimization parameters
/// [shape | lambda | mu | gamma | alpha | beta | u0 | v0].
/// u0/v0 blocks are per-node fields or per-body 2-vectors depending on the
/// scene's ic_mode.
struct ParamLayout {
  int n_vertices = 0;
  int n_elements = 0;
  int n_gamma = 0;
  int n_ic = 0;  // entries in each of u0/v0
  std::vector<int> ic_bodies;  // body ids for PerBody mode

  static ParamLayout from(const Scene& scene);
  int offset(ParamBlock b) const;
  int block_size(ParamBlock b) const;
  int size() const;
  Eigen::VectorBlock<VecX> block(VecX& x, ParamBlock b) const;
  Eigen::VectorBlock<const VecX> block(const VecX& x, ParamBlock b) const;
};

VecX pack_parameters(const Scene& scene, const ParamLayout& layout);
/// Writes packed parameters back into the scene (rest vertices, material,
/// gamma table, damping, initial conditions) and refreshes Dirichlet-consistent
/// u0 values.
void unpack_parameters(Scene& scene, const ParamLayout& layout, const VecX& x);

/// Gradient of an objective, stored in the same flat layout.
struct GradientVector {
  ParamLayout layout;
  VecX data;

  explicit GradientVector(const ParamLayout& l) : layout(l), data(VecX::Zero(l.size())) {}
  Eigen::VectorBlock<VecX> block(ParamBlock b) { return layout.block(data, b); }
  Eigen::VectorBlock<const VecX> block(ParamBlock b) const {
    return layout.block(data, b);
  }
};

/// Scatters a per-node full-DOF gradient into the IC parameter block
/// (identity for PerNode, row sums per body for PerBody). Dirichlet DOFs
/// contribute zero.
void accumulate_ic_gradient(const Scene& scene, const ParamLayout& layout,
                            const VecX& full_grad, Eigen::VectorBlock<VecX> block);

/// Expands an IC parameter block into a full-DOF nodal field.
VecX expand_ic_parameters(const Scene& scene, const ParamLayout& layout,
                          const Eigen::Ref<const VecX>& block);

}  // namespace elastodiff
