#pragma once

#include <Eigen/Core>
#include <cmath>

namespace elastodiff {

/// Second-order forward-mode scalar over N independent variables.
/// Carries value, gradient and Hessian; used for geometric kernels
/// (point-segment distance, tangent frames) where hand derivatives
/// are error-prone.
template <int N>
struct Dual2 {
  using GradT = Eigen::Matrix<double, N, 1>;
  using HessT = Eigen::Matrix<double, N, N>;

  double val = 0.0;
  GradT grad = GradT::Zero();
  HessT hess = HessT::Zero();

  Dual2() = default;
  explicit Dual2(double v) : val(v) {}

  static Dual2 variable(double v, int index) {
    Dual2 d(v);
    d.grad(index) = 1.0;
    return d;
  }

  Dual2 operator-() const {
    Dual2 r;
    r.val = -val;
    r.grad = -grad;
    r.hess = -hess;
    return r;
  }

  friend Dual2 operator+(const Dual2& a, const Dual2& b) {
    Dual2 r;
    r.val = a.val + b.val;
    r.grad = a.grad + b.grad;
    r.hess = a.hess + b.hess;
    return r;
  }
  friend Dual2 operator-(const Dual2& a, const Dual2& b) {
    Dual2 r;
    r.val = a.val - b.val;
    r.grad = a.grad - b.grad;
    r.hess = a.hess - b.hess;
    return r;
  }
  friend Dual2 operator*(const Dual2& a, const Dual2& b) {
    Dual2 r;
    r.val = a.val * b.val;
    r.grad = a.grad * b.val + b.grad * a.val;
    r.hess = a.hess * b.val + b.hess * a.val + a.grad * b.grad.transpose() +
             b.grad * a.grad.transpose();
    return r;
  }
  friend Dual2 operator/(const Dual2& a, const Dual2& b) { return a * inverse(b); }

  friend Dual2 operator+(const Dual2& a, double c) { Dual2 r = a; r.val += c; return r; }
  friend Dual2 operator+(double c, const Dual2& a) { return a + c; }
  friend Dual2 operator-(const Dual2& a, double c) { Dual2 r = a; r.val -= c; return r; }
  friend Dual2 operator-(double c, const Dual2& a) { return -a + c; }
  friend Dual2 operator*(const Dual2& a, double c) {
    Dual2 r;
    r.val = a.val * c;
    r.grad = a.grad * c;
    r.hess = a.hess * c;
    return r;
  }
  friend Dual2 operator*(double c, const Dual2& a) { return a * c; }
  friend Dual2 operator/(const Dual2& a, double c) { return a * (1.0 / c); }
  friend Dual2 operator/(double c, const Dual2& a) { return inverse(a) * c; }

  friend Dual2 inverse(const Dual2& a) {
    Dual2 r;
    const double iv = 1.0 / a.val;
    r.val = iv;
    r.grad = -a.grad * (iv * iv);
    r.hess = -a.hess * (iv * iv) + 2.0 * (iv * iv * iv) * a.grad * a.grad.transpose();
    return r;
  }

  friend Dual2 sqrt(const Dual2& a) {
    Dual2 r;
    const double s = std::sqrt(a.val);
    r.val = s;
    r.grad = a.grad / (2.0 * s);
    r.hess = a.hess / (2.0 * s) - a.grad * a.grad.transpose() / (4.0 * s * s * s);
    return r;
  }

  friend Dual2 log(const Dual2& a) {
    Dual2 r;
    r.val = std::log(a.val);
    r.grad = a.grad / a.val;
    r.hess = a.hess / a.val - a.grad * a.grad.transpose() / (a.val * a.val);
    return r;
  }
};

}  // namespace elastodiff
