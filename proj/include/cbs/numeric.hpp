#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <sstream>

#include "cbs/errors.hpp"
#include "cbs/types.hpp"

namespace cbs {

// log(sum_i exp(x_i)) with the usual max shift. Entries equal to -inf
// contribute zero mass; if every entry is -inf the result is -inf.
template <typename Derived>
typename Derived::Scalar logsumexp(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
  Scalar max = neg_inf;
  for (Index i = 0; i < x.size(); ++i) {
    if (x(i) > max) max = x(i);
  }
  if (max == neg_inf) return neg_inf;
  Scalar sum = 0;
  for (Index i = 0; i < x.size(); ++i) {
    sum += std::exp(x(i) - max);
  }
  return max + std::log(sum);
}

template <typename Derived>
typename Derived::Scalar frobenius_norm(const Eigen::MatrixBase<Derived>& C) {
  return C.norm();
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& x) {
  return x.allFinite();
}

template <typename Scalar>
Matrix<Scalar> symmetrized(const Matrix<Scalar>& C) {
  return ((C + C.transpose()) / Scalar(2)).eval();
}

template <typename Scalar>
void check_symmetric(const Matrix<Scalar>& C, double tol = kSymmetryTol) {
  if (C.rows() != C.cols()) {
    throw DimensionMismatchError("matrix is not square");
  }
  const Scalar scale = Scalar(1) + C.template lpNorm<Eigen::Infinity>();
  const Scalar asym = (C - C.transpose()).template lpNorm<Eigen::Infinity>();
  if (!(asym <= Scalar(tol) * scale)) {
    std::ostringstream msg;
    msg << "matrix is not symmetric: max asymmetry " << asym;
    throw NotPsdError(msg.str());
  }
}

// Symmetric square root of a symmetric PSD matrix through its
// eigendecomposition. Eigenvalues in [-floor, 0) with
// floor = floor_rel * |C|_op are treated as roundoff and clamped to zero;
// anything lower throws. Any factor S with S S^T = C yields the same law for
// S xi, and the symmetric root stays well defined when C is singular.
template <typename Scalar>
Matrix<Scalar> sym_sqrt(const Matrix<Scalar>& C,
                        double floor_rel = kEigenvalueFloorRel) {
  check_symmetric<Scalar>(C);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(C);
  if (eig.info() != Eigen::Success) {
    throw NotPsdError("eigendecomposition failed");
  }
  Vector<Scalar> values = eig.eigenvalues();
  const Scalar op_norm = values.cwiseAbs().maxCoeff();
  const Scalar floor = Scalar(floor_rel) * op_norm;
  for (Index i = 0; i < values.size(); ++i) {
    if (values(i) < -floor) {
      std::ostringstream msg;
      msg << "matrix is not PSD: eigenvalue " << values(i) << " below " << -floor;
      throw NotPsdError(msg.str());
    }
    if (values(i) < Scalar(0)) values(i) = Scalar(0);
  }
  Matrix<Scalar> S = eig.eigenvectors() * values.cwiseSqrt().asDiagonal() *
                     eig.eigenvectors().transpose();
  return symmetrized<Scalar>(S);
}

// Operator norm of a symmetric matrix (largest |eigenvalue|).
template <typename Scalar>
Scalar operator_norm_sym(const Matrix<Scalar>& X) {
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(X);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

// |v|_A = sqrt(v^T A^{-1} v) for SPD A.
template <typename Scalar>
Scalar mahalanobis_norm(const Vector<Scalar>& v, const Matrix<Scalar>& A) {
  Eigen::LLT<Matrix<Scalar>> llt(A);
  if (llt.info() != Eigen::Success) {
    throw SingularMatrixError("metric matrix is not SPD");
  }
  return std::sqrt(v.dot(llt.solve(v)));
}

// |X|_A = |A^{-1/2} X A^{-1/2}|_op for SPD A and symmetric X.
template <typename Scalar>
Scalar relative_operator_norm(const Matrix<Scalar>& X, const Matrix<Scalar>& A) {
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(A);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= Scalar(0)) {
    throw SingularMatrixError("metric matrix is not SPD");
  }
  Matrix<Scalar> inv_root = eig.eigenvectors() *
                            eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                            eig.eigenvectors().transpose();
  return operator_norm_sym<Scalar>(symmetrized<Scalar>(inv_root * X * inv_root));
}

}  // namespace cbs
