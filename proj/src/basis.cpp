#include <elastodiff/basis.hpp>
#include <elastodiff/errors.hpp>

namespace elastodiff {

BasisSet BasisSet::lagrange(int order) {
  if (order != 1 && order != 2) throw Error("basis order must be 1 or 2");
  BasisSet b;
  b.order = order;
  b.nodes_per_element = order == 1 ? 3 : 6;
  b.ref_nodes.resize(b.nodes_per_element, 2);
  b.ref_nodes.row(0) << 0.0, 0.0;
  b.ref_nodes.row(1) << 1.0, 0.0;
  b.ref_nodes.row(2) << 0.0, 1.0;
  if (order == 2) {
    b.ref_nodes.row(3) << 0.5, 0.0;
    b.ref_nodes.row(4) << 0.5, 0.5;
    b.ref_nodes.row(5) << 0.0, 0.5;
  }
  return b;
}

void BasisSet::eval(const Vec2& local, VecX& values, MatX2& gradients) const {
  const double x = local.x(), y = local.y();
  const double l0 = 1.0 - x - y, l1 = x, l2 = y;
  const Vec2 d0(-1.0, -1.0), d1(1.0, 0.0), d2(0.0, 1.0);

  values.resize(nodes_per_element);
  gradients.resize(nodes_per_element, 2);
  if (order == 1) {
    values << l0, l1, l2;
    gradients.row(0) = d0;
    gradients.row(1) = d1;
    gradients.row(2) = d2;
    return;
  }
  values(0) = l0 * (2.0 * l0 - 1.0);
  values(1) = l1 * (2.0 * l1 - 1.0);
  values(2) = l2 * (2.0 * l2 - 1.0);
  values(3) = 4.0 * l0 * l1;
  values(4) = 4.0 * l1 * l2;
  values(5) = 4.0 * l2 * l0;
  gradients.row(0) = (4.0 * l0 - 1.0) * d0;
  gradients.row(1) = (4.0 * l1 - 1.0) * d1;
  gradients.row(2) = (4.0 * l2 - 1.0) * d2;
  gradients.row(3) = 4.0 * (l1 * d0 + l0 * d1);
  gradients.row(4) = 4.0 * (l2 * d1 + l1 * d2);
  gradients.row(5) = 4.0 * (l0 * d2 + l2 * d0);
}

void edge_basis(int order, double s, VecX& values, VecX& derivs) {
  if (order == 1) {
    values.resize(2);
    derivs.resize(2);
    values << 1.0 - s, s;
    derivs << -1.0, 1.0;
    return;
  }
  values.resize(3);
  derivs.resize(3);
  values << (1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s);
  derivs << 4.0 * s - 3.0, 4.0 * s - 1.0, 4.0 - 8.0 * s;
}

}  // namespace elastodiff
