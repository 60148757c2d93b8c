#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

#include "cbs/errors.hpp"
#include "cbs/ess.hpp"
#include "cbs/moments.hpp"
#include "cbs/numeric.hpp"
#include "cbs/objectives.hpp"
#include "cbs/rng.hpp"
#include "cbs/types.hpp"

// The consensus iteration on a finite ensemble:
//
//   theta_j <- M_beta + alpha (theta_j - M_beta)
//             + sqrt((1 - alpha^2) / lambda) S xi_j,   S S = C_beta,
//
// with (M_beta, C_beta) the empirical weighted moments of the current
// ensemble. lambda is always derived from the mode, never stored: sampling
// uses lambda = 1/(1 + beta) recomputed from the current beta, optimization
// uses lambda = 1.

namespace cbs {

struct CbsConfig {
  double alpha = 0.0;           // damping, in [0, 1)
  double beta = 1.0;            // inverse temperature (initial value if adaptive)
  Mode mode = Mode::Optimization;
  bool adaptive_beta = false;
  double eta = 0.5;             // ESS fraction, used iff adaptive_beta
  double beta_max = 1e15;
  int max_iters = 10000;
  double cov_frobenius_tol = 1e-12;
  std::uint64_t seed = 0;
  bool record_trajectory = false;
  int eval_threads = 1;         // objective evaluations fan out when > 1
};

enum class StopReason { CovarianceCollapse, MaxIters };

struct TrajectoryPoint {
  int iteration = 0;
  Eigen::VectorXd mean;        // plain ensemble mean after the step
  double cov_frobenius = 0;    // |C(rho^J)|_F after the step
  double beta = 0;             // beta used for the step
};

struct RunResult {
  Eigen::MatrixXd final_ensemble;
  int iterations = 0;
  StopReason stop_reason = StopReason::MaxIters;
  std::vector<TrajectoryPoint> trajectory;
  int beta_clamped_iterations = 0;  // times the ESS solve hit beta_max
};

inline double lambda_for(Mode mode, double beta) {
  return mode == Mode::Sampling ? 1.0 / (1.0 + beta) : 1.0;
}

inline void validate_config(const CbsConfig& config, Index J) {
  if (!(config.alpha >= 0.0 && config.alpha < 1.0)) {
    throw ConfigInvalidError("alpha must lie in [0, 1)");
  }
  if (!(config.beta > 0.0)) {
    throw ConfigInvalidError("beta must be positive");
  }
  if (config.adaptive_beta) {
    if (J < 2) throw ConfigInvalidError("adaptive beta needs J >= 2");
    if (!(config.eta > 1.0 / static_cast<double>(J) && config.eta < 1.0)) {
      throw ConfigInvalidError("eta must lie in (1/J, 1)");
    }
    if (!(config.beta_max > 0.0)) {
      throw ConfigInvalidError("beta_max must be positive");
    }
  }
  if (config.max_iters < 1) {
    throw ConfigInvalidError("max_iters must be positive");
  }
  if (!(config.cov_frobenius_tol > 0.0)) {
    throw ConfigInvalidError("cov_frobenius_tol must be positive");
  }
  if (config.eval_threads < 1) {
    throw ConfigInvalidError("eval_threads must be >= 1");
  }
}

// Evaluates f on every particle. With n_threads > 1 the evaluations fan out
// over contiguous row blocks; each thread writes only its own slots, so the
// result does not depend on scheduling.
inline Eigen::VectorXd evaluate_all(const Objective& objective,
                                    const Eigen::MatrixXd& ensemble,
                                    int n_threads = 1) {
  const Index J = ensemble.rows();
  Eigen::VectorXd f_values(J);
  auto worker = [&](Index begin, Index end) {
    for (Index j = begin; j < end; ++j) {
      f_values(j) = objective(ensemble.row(j).transpose());
    }
  };
  if (n_threads <= 1 || J < 2 * n_threads) {
    worker(0, J);
    return f_values;
  }
  std::vector<std::thread> threads;
  const Index chunk = (J + n_threads - 1) / n_threads;
  for (int t = 0; t < n_threads; ++t) {
    const Index begin = t * chunk;
    const Index end = std::min<Index>(begin + chunk, J);
    if (begin >= end) break;
    threads.emplace_back(worker, begin, end);
  }
  for (auto& th : threads) th.join();
  return f_values;
}

// One update of the whole ensemble. Noise is injected by the caller: a J x d
// matrix of standard normal draws.
template <typename Scalar>
Matrix<Scalar> cbs_step(const Matrix<Scalar>& ensemble,
                        const Vector<Scalar>& f_values,
                        Scalar alpha, Scalar beta, Scalar lambda,
                        const Matrix<Scalar>& noise) {
  check_ensemble(ensemble);
  if (!(lambda > Scalar(0) && lambda <= Scalar(1))) {
    throw ConfigInvalidError("lambda must lie in (0, 1]");
  }
  if (noise.rows() != ensemble.rows() || noise.cols() != ensemble.cols()) {
    throw DimensionMismatchError("noise shape does not match ensemble");
  }
  const LogWeights<Scalar> w = log_weights(ensemble, f_values, beta);
  const Vector<Scalar> mean = weighted_mean(ensemble, w);
  const Matrix<Scalar> cov = weighted_covariance(ensemble, w, mean);
  const Matrix<Scalar> root = sym_sqrt<Scalar>(cov);

  const Scalar noise_scale = std::sqrt((1 - alpha * alpha) / lambda);
  Matrix<Scalar> next = ensemble.rowwise() - mean.transpose();
  next *= alpha;
  next.noalias() += noise_scale * noise * root;  // root is symmetric
  next.rowwise() += mean.transpose();
  return next;
}

// Observer gets (iteration, ensemble mean, |C|_F, beta) after each step and
// must not mutate the ensemble.
using Observer =
    std::function<void(int, const Eigen::VectorXd&, double, double)>;

// Full run. Objective values are computed once per iteration and shared
// between the beta adaptation and the weights; when adaptive, beta is solved
// from the current values first and lambda is then derived from the mode and
// that beta. Stops as soon as the plain ensemble covariance satisfies
// |C(rho^J)|_F < cov_frobenius_tol, or after max_iters steps. Identical seed
// and config give a bit-identical trajectory.
inline RunResult run(const Eigen::MatrixXd& initial, const Objective& objective,
                     const CbsConfig& config, const Observer& observer = {}) {
  check_ensemble(initial);
  validate_config(config, initial.rows());
  if (objective.dim != initial.cols()) {
    throw DimensionMismatchError("objective dimension does not match ensemble");
  }

  RunResult result;
  Eigen::MatrixXd ensemble = initial;
  double beta = config.beta;

  int n = 0;
  StopReason reason = StopReason::MaxIters;
  while (true) {
    const WeightedMoments<double> plain = ensemble_moments(ensemble);
    if (frobenius_norm(plain.covariance) < config.cov_frobenius_tol) {
      reason = StopReason::CovarianceCollapse;
      break;
    }
    if (n >= config.max_iters) break;

    const Eigen::VectorXd f_values =
        evaluate_all(objective, ensemble, config.eval_threads);
    if (config.adaptive_beta) {
      const EssSolveReport ess = solve_beta(f_values, config.eta, config.beta_max);
      beta = ess.beta;
      if (ess.clamped) ++result.beta_clamped_iterations;
    }
    const double lambda = lambda_for(config.mode, beta);
    const Eigen::MatrixXd noise = standard_normal_matrix(
        derive_seed(config.seed, static_cast<std::uint64_t>(n) + 1),
        ensemble.rows(), ensemble.cols());
    ensemble = cbs_step<double>(ensemble, f_values, config.alpha, beta, lambda,
                                noise);
    ++n;

    const WeightedMoments<double> after = ensemble_moments(ensemble);
    const double cov_norm = frobenius_norm(after.covariance);
    if (observer) observer(n, after.mean, cov_norm, beta);
    if (config.record_trajectory) {
      result.trajectory.push_back({n, after.mean, cov_norm, beta});
    }
  }

  result.final_ensemble = std::move(ensemble);
  result.iterations = n;
  result.stop_reason = reason;
  return result;
}

}  // namespace cbs
