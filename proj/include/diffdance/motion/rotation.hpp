#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "diffdance/core/error.hpp"

namespace diffdance {

template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vector6 = Eigen::Matrix<Scalar, 6, 1>;

/// Continuous 6-number rotation representation: the first two columns of the
/// rotation matrix, re-orthonormalized with Gram-Schmidt on decode. The third
/// column is their cross product, so the result always has det = +1.
/// Throws DomainError when the first column is zero or the two columns are
/// parallel.
template <typename Scalar, typename Derived>
Matrix3<Scalar> rot6d_to_matrix(const Eigen::MatrixBase<Derived>& v) {
  using std::sqrt;
  const Vector3<Scalar> a1(v[0], v[1], v[2]);
  const Vector3<Scalar> a2(v[3], v[4], v[5]);
  const Scalar n1 = sqrt(a1.squaredNorm());
  if (!(n1 > Scalar(1e-12))) throw DomainError("rot6d_to_matrix: zero first column");
  const Vector3<Scalar> b1 = a1 / n1;
  const Vector3<Scalar> u = a2 - b1.dot(a2) * b1;
  const Scalar nu = sqrt(u.squaredNorm());
  if (!(nu > Scalar(1e-12))) throw DomainError("rot6d_to_matrix: parallel or zero columns");
  const Vector3<Scalar> b2 = u / nu;
  Matrix3<Scalar> r;
  r.col(0) = b1;
  r.col(1) = b2;
  r.col(2) = b1.cross(b2);
  return r;
}

/// Inverse of rot6d_to_matrix on proper rotations. Throws DomainError if `r`
/// is not orthonormal with det +1 to within `tol`.
template <typename Scalar>
Vector6<Scalar> matrix_to_rot6d(const Matrix3<Scalar>& r, double tol = 1e-6) {
  using std::abs;
  const Scalar ortho = (r.transpose() * r - Matrix3<Scalar>::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= Scalar(tol)) || !(abs(r.determinant() - Scalar(1)) <= Scalar(tol))) {
    throw DomainError("matrix_to_rot6d: input is not a rotation matrix");
  }
  Vector6<Scalar> v;
  v << r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1);
  return v;
}

}  // namespace diffdance
