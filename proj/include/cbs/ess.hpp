#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "cbs/errors.hpp"
#include "cbs/numeric.hpp"
#include "cbs/types.hpp"

// Effective sample size J_eff(beta) = (sum_j w_j)^2 / sum_j w_j^2 with
// w_j = e^{-beta f_j}, and the inverse-temperature schedule that keeps
// J_eff at a fixed fraction eta of J each iteration. J_eff is continuous and
// non-increasing in beta, with J_eff(0) = J and limit 1 for beta -> inf, so
// the equation J_eff(beta) = eta J has a unique positive solution whenever
// the target is attainable.

namespace cbs {

template <typename DerivedF>
typename DerivedF::Scalar effective_sample_size(
    const Eigen::MatrixBase<DerivedF>& f_values,
    typename DerivedF::Scalar beta) {
  using Scalar = typename DerivedF::Scalar;
  if (f_values.size() < 1) {
    throw ConfigInvalidError("need at least one objective value");
  }
  if (!(beta >= Scalar(0))) {
    throw ConfigInvalidError("beta must be nonnegative");
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

  // exp(2 logsumexp(-beta g) - logsumexp(-2 beta g)) with g = f - min f.
  // The shift cancels in the ratio and keeps the exponents well scaled.
  Vector<Scalar> x1(f_values.size());
  Vector<Scalar> x2(f_values.size());
  for (Index j = 0; j < f_values.size(); ++j) {
    const Scalar f = f_values(j);
    if (std::isfinite(f)) {
      const Scalar g = f - f_min;
      x1(j) = -beta * g;
      x2(j) = -2 * beta * g;
    } else {
      x1(j) = -inf;
      x2(j) = -inf;
    }
  }
  return std::exp(2 * logsumexp(x1) - logsumexp(x2));
}

struct EssSolveReport {
  double beta = 0;
  double j_eff_achieved = 0;
  bool clamped = false;
  int bisection_iterations = 0;
};

// Solves J_eff(beta) = eta J by doubling an upper bracket from 1 and then
// bisecting. Monotonicity makes bisection safe; Newton would need the
// derivative sums for no real gain on a 1D root. When even beta_max cannot
// push J_eff below the target (all f equal, say) the result is clamped at
// beta_max; when too few particles are feasible for the target to be
// reachable at all, the result is clamped at a vanishing beta, giving
// uniform weights over the feasible particles.
template <typename DerivedF>
EssSolveReport solve_beta(const Eigen::MatrixBase<DerivedF>& f_values,
                          double eta, double beta_max,
                          double tol_frac = 1e-6, int max_bisections = 200) {
  const double J = static_cast<double>(f_values.size());
  if (f_values.size() < 2) {
    throw ConfigInvalidError("beta adaptation needs at least two particles");
  }
  if (!(eta > 1.0 / J && eta < 1.0)) {
    throw ConfigInvalidError("eta must lie in (1/J, 1)");
  }
  if (!(beta_max > 0)) {
    throw ConfigInvalidError("beta_max must be positive");
  }

  const double target = eta * J;
  const double tol = tol_frac * J;

  EssSolveReport report;
  if (effective_sample_size(f_values, 0.0) <= target) {
    // Not enough feasible particles to reach eta J at any beta.
    report.beta = std::numeric_limits<double>::min();
    report.j_eff_achieved = effective_sample_size(f_values, 0.0);
    report.clamped = true;
    return report;
  }

  double lo = 0.0;
  double hi = 1.0;
  while (effective_sample_size(f_values, hi) > target) {
    lo = hi;
    hi *= 2;
    if (hi >= beta_max) {
      hi = beta_max;
      const double at_max = effective_sample_size(f_values, hi);
      if (at_max > target) {
        report.beta = beta_max;
        report.j_eff_achieved = at_max;
        report.clamped = true;
        return report;
      }
      break;
    }
  }

  double mid = hi;
  double val = effective_sample_size(f_values, mid);
  for (int i = 0; i < max_bisections && std::abs(val - target) > tol; ++i) {
    mid = 0.5 * (lo + hi);
    val = effective_sample_size(f_values, mid);
    if (val > target) {
      lo = mid;
    } else {
      hi = mid;
    }
    ++report.bisection_iterations;
  }
  report.beta = mid;
  report.j_eff_achieved = val;
  report.clamped = false;
  return report;
}

}  // namespace cbs
