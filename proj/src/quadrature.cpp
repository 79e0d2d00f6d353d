#include <elastodiff/errors.hpp>
#include <elastodiff/quadrature.hpp>

#include <cmath>

namespace elastodiff {

Quadrature Quadrature::triangle(int degree) {
  Quadrature q;
  q.degree = degree;
  if (degree <= 1) {
    q.points.resize(1, 2);
    q.points << 1.0 / 3.0, 1.0 / 3.0;
    q.weights.resize(1);
    q.weights << 0.5;
  } else if (degree <= 2) {
    q.points.resize(3, 2);
    q.points << 1.0 / 6.0, 1.0 / 6.0,
                2.0 / 3.0, 1.0 / 6.0,
                1.0 / 6.0, 2.0 / 3.0;
    q.weights = VecX::Constant(3, 1.0 / 6.0);
  } else if (degree <= 4) {
    // Dunavant degree-4 rule, 6 points.
    const double a = 0.445948490915965;
    const double b = 0.091576213509771;
    const double wa = 0.223381589678011 * 0.5;
    const double wb = 0.109951743655322 * 0.5;
    q.points.resize(6, 2);
    q.points << a, a,
                1.0 - 2.0 * a, a,
                a, 1.0 - 2.0 * a,
                b, b,
                1.0 - 2.0 * b, b,
                b, 1.0 - 2.0 * b;
    q.weights.resize(6);
    q.weights << wa, wa, wa, wb, wb, wb;
  } else {
    throw Error("triangle quadrature degree > 4 not provided");
  }
  return q;
}

Quadrature Quadrature::segment(int degree) {
  Quadrature q;
  q.degree = degree;
  if (degree <= 1) {
    q.points.resize(1, 2);
    q.points << 0.5, 0.0;
    q.weights = VecX::Constant(1, 1.0);
  } else if (degree <= 3) {
    const double d = 0.5 / std::sqrt(3.0);
    q.points.resize(2, 2);
    q.points << 0.5 - d, 0.0, 0.5 + d, 0.0;
    q.weights = VecX::Constant(2, 0.5);
  } else if (degree <= 5) {
    const double d = 0.5 * std::sqrt(3.0 / 5.0);
    q.points.resize(3, 2);
    q.points << 0.5, 0.0, 0.5 - d, 0.0, 0.5 + d, 0.0;
    q.weights.resize(3);
    q.weights << 8.0 / 18.0, 5.0 / 18.0, 5.0 / 18.0;
  } else {
    throw Error("segment quadrature degree > 5 not provided");
  }
  return q;
}

}  // namespace elastodiff
