#pragma once

#include <elastodiff/types.hpp>

namespace elastodiff {

/// Quadrature on the reference triangle {x,y >= 0, x+y <= 1} (weights sum
/// to 1/2) or the reference segment [0,1] (weights sum to 1).
struct Quadrature {
  MatX2 points;  // segment rules use column 0 only
  VecX weights;
  int degree = 0;

  int size() const { return static_cast<int>(weights.size()); }

  static Quadrature triangle(int degree);
  static Quadrature segment(int degree);
};

}  // namespace elastodiff
