#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace elastodiff {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using MatX2 = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using MatX2i = Eigen::Matrix<int, Eigen::Dynamic, 2>;
using MatX3i = Eigen::Matrix<int, Eigen::Dynamic, 3>;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }
inline Vec2 perp(const Vec2& a) { return Vec2(-a.y(), a.x()); }

/// Fourth-order tensor on 2x2 matrices, T(i,j,k,l) = d out_ij / d in_kl.
struct Tensor4 {
  double v[2][2][2][2];

  Tensor4() { setZero(); }
  void setZero() {
    for (auto& a : v)
      for (auto& b : a)
        for (auto& c : b) c[0] = c[1] = 0.0;
  }
  double& operator()(int i, int j, int k, int l) { return v[i][j][k][l]; }
  double operator()(int i, int j, int k, int l) const { return v[i][j][k][l]; }

  // out_ij = sum_kl T_ijkl M_kl
  Mat2 contract_right(const Mat2& m) const {
    Mat2 out = Mat2::Zero();
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
          for (int l = 0; l < 2; ++l) out(i, j) += v[i][j][k][l] * m(k, l);
    return out;
  }

  // out_kl = sum_ij M_ij T_ijkl
  Mat2 contract_left(const Mat2& m) const {
    Mat2 out = Mat2::Zero();
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
          for (int l = 0; l < 2; ++l) out(k, l) += m(i, j) * v[i][j][k][l];
    return out;
  }
};

inline double ddot(const Mat2& a, const Mat2& b) { return a.cwiseProduct(b).sum(); }

}  // namespace elastodiff
