#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "cbs/errors.hpp"
#include "cbs/numeric.hpp"
#include "cbs/types.hpp"

// Weighted moments of a particle ensemble under Gibbs reweighting by
// e^{-beta f}. An ensemble is a J x d matrix, one particle per row; every
// entry must be finite. All weight handling is done on the log scale so that
// large beta * f products cannot overflow.

namespace cbs {

template <typename Derived>
void check_ensemble(const Eigen::MatrixBase<Derived>& particles) {
  if (particles.rows() < 1 || particles.cols() < 1) {
    throw ConfigInvalidError("ensemble must have J >= 1 and d >= 1");
  }
  if (!particles.allFinite()) {
    throw ConfigInvalidError("ensemble contains non-finite entries");
  }
}

template <typename Scalar = double>
struct LogWeights {
  Vector<Scalar> values;
  bool normalized = false;
};

namespace detail {

template <typename Scalar>
void check_normalized(const LogWeights<Scalar>& w) {
  if (!w.normalized) {
    throw ConfigInvalidError("log-weights are not normalized");
  }
}

}  // namespace detail

// Normalized log-weights -beta f_j - logsumexp_k(-beta f_k). A particle with
// non-finite objective value gets weight exactly zero, which keeps runs alive
// when a black-box forward model fails pointwise. The values are shifted by
// min f before scaling by beta, so adding a constant to f leaves the result
// unchanged whenever the shifted differences are exact.
template <typename DerivedE, typename DerivedF>
LogWeights<typename DerivedF::Scalar> log_weights(
    const Eigen::MatrixBase<DerivedE>& ensemble,
    const Eigen::MatrixBase<DerivedF>& f_values,
    typename DerivedF::Scalar beta) {
  using Scalar = typename DerivedF::Scalar;
  check_ensemble(ensemble);
  if (f_values.size() != ensemble.rows()) {
    throw DimensionMismatchError("f_values length does not match particle count");
  }
  if (!(beta > Scalar(0))) {
    throw ConfigInvalidError("beta must be positive");
  }

  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  Scalar f_min = inf;
  for (Index j = 0; j < f_values.size(); ++j) {
    const Scalar f = f_values(j);
    if (std::isfinite(f) && f < f_min) f_min = f;
  }
  if (f_min == inf) {
    throw AllInfiniteError("every objective value is infinite");
  }

  LogWeights<Scalar> w;
  w.values.resize(f_values.size());
  for (Index j = 0; j < f_values.size(); ++j) {
    const Scalar f = f_values(j);
    w.values(j) = std::isfinite(f) ? -beta * (f - f_min) : -inf;
  }
  w.values.array() -= logsumexp(w.values);
  w.normalized = true;
  return w;
}

// sum_j exp(w_j) theta_j, evaluated as theta_0 + sum_j exp(w_j)(theta_j -
// theta_0). The anchored form keeps an ensemble of identical particles
// exactly on its point and avoids cancellation once the ensemble has nearly
// collapsed far from the origin.
template <typename DerivedE, typename Scalar>
Vector<Scalar> weighted_mean(const Eigen::MatrixBase<DerivedE>& ensemble,
                             const LogWeights<Scalar>& w) {
  check_ensemble(ensemble);
  detail::check_normalized(w);
  if (w.values.size() != ensemble.rows()) {
    throw DimensionMismatchError("weight length does not match particle count");
  }
  const Vector<Scalar> weights = w.values.array().exp();
  const Vector<Scalar> anchor = ensemble.row(0).transpose();
  Vector<Scalar> mean = anchor;
  mean.noalias() +=
      (ensemble.rowwise() - anchor.transpose()).transpose() * weights;
  return mean;
}

// sum_j exp(w_j) (theta_j - mean)(theta_j - mean)^T, symmetrized.
template <typename DerivedE, typename Scalar>
Matrix<Scalar> weighted_covariance(const Eigen::MatrixBase<DerivedE>& ensemble,
                                   const LogWeights<Scalar>& w,
                                   const Vector<Scalar>& mean) {
  check_ensemble(ensemble);
  detail::check_normalized(w);
  if (w.values.size() != ensemble.rows() || mean.size() != ensemble.cols()) {
    throw DimensionMismatchError("weight or mean size does not match ensemble");
  }
  const Vector<Scalar> weights = w.values.array().exp();
  const Matrix<Scalar> centered = ensemble.rowwise() - mean.transpose();
  Matrix<Scalar> cov = centered.transpose() * weights.asDiagonal() * centered;
  return symmetrized<Scalar>(cov);
}

template <typename Scalar = double>
struct WeightedMoments {
  Vector<Scalar> mean;
  Matrix<Scalar> covariance;
};

template <typename DerivedE, typename Scalar>
WeightedMoments<Scalar> weighted_moments(const Eigen::MatrixBase<DerivedE>& ensemble,
                                         const LogWeights<Scalar>& w) {
  WeightedMoments<Scalar> out;
  out.mean = weighted_mean(ensemble, w);
  out.covariance = weighted_covariance(ensemble, w, out.mean);
  return out;
}

// Plain (uniform-weight) ensemble mean and population covariance.
template <typename DerivedE>
WeightedMoments<typename DerivedE::Scalar> ensemble_moments(
    const Eigen::MatrixBase<DerivedE>& ensemble) {
  using Scalar = typename DerivedE::Scalar;
  check_ensemble(ensemble);
  LogWeights<Scalar> uniform;
  uniform.values = Vector<Scalar>::Constant(
      ensemble.rows(), -std::log(Scalar(ensemble.rows())));
  uniform.normalized = true;
  return weighted_moments(ensemble, uniform);
}

}  // namespace cbs
