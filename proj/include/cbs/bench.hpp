#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "cbs/engine.hpp"
#include "cbs/errors.hpp"
#include "cbs/moments.hpp"
#include "cbs/objectives.hpp"
#include "cbs/rng.hpp"

// Experiment protocols: repeated optimization runs with a success-rate
// summary, and posterior-moment reproduction for sampling runs. Runs execute
// concurrently; each run derives its seeds from the master seed and its own
// index, so the aggregate does not depend on execution order.

namespace cbs {

namespace detail {

inline constexpr std::uint64_t kInitStream = 0x696e6974;  // distinct from iteration streams

template <typename Fn>
void parallel_for_index(int count, int n_threads, Fn&& fn) {
  n_threads = std::max(1, std::min(n_threads, count));
  if (n_threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  const int chunk = (count + n_threads - 1) / n_threads;
  for (int t = 0; t < n_threads; ++t) {
    const int begin = t * chunk;
    const int end = std::min(begin + chunk, count);
    if (begin >= end) break;
    threads.emplace_back([begin, end, &fn] {
      for (int i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& th : threads) th.join();
}

inline int default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw, 1u, 8u));
}

}  // namespace detail

struct RunRecord {
  std::uint64_t seed = 0;
  bool success = false;
  int iterations = 0;
  double final_error_inf = 0;  // |mean - minimizer|_inf
  Eigen::VectorXd final_mean;
  StopReason stop_reason = StopReason::MaxIters;
  bool beta_clamped = false;
  std::string error;  // non-empty when the run failed outright
};

struct SuccessRateReport {
  int runs = 0;
  double success_rate = 0;
  double mean_iterations = 0;      // over all runs
  double mean_final_error = 0;     // over successful runs only
  std::vector<RunRecord> records;
};

inline constexpr double kSuccessThresholdInf = 0.25;

// n_runs independent runs from fresh N(0, init_std^2 I_d) ensembles. A run
// is successful when the final ensemble mean lies within 0.25 of the known
// minimizer in infinity norm. Runs that throw are recorded as unsuccessful
// with the reason kept.
inline SuccessRateReport success_rate_experiment(const Objective& objective,
                                                 const CbsConfig& config,
                                                 int n_runs, Index J,
                                                 double init_std,
                                                 std::uint64_t master_seed,
                                                 int n_threads = 0) {
  if (!objective.minimizer) {
    throw ConfigInvalidError("objective does not expose a minimizer");
  }
  if (n_runs < 1) throw ConfigInvalidError("n_runs must be positive");
  if (n_threads <= 0) n_threads = detail::default_threads();

  std::vector<RunRecord> records(n_runs);
  detail::parallel_for_index(n_runs, n_threads, [&](int i) {
    RunRecord& rec = records[i];
    rec.seed = derive_seed(master_seed, static_cast<std::uint64_t>(i));
    CbsConfig run_config = config;
    run_config.seed = rec.seed;
    try {
      const Eigen::MatrixXd initial = gaussian_ensemble(
          derive_seed(rec.seed, detail::kInitStream), J, objective.dim, init_std);
      const RunResult result = run(initial, objective, run_config);
      rec.iterations = result.iterations;
      rec.stop_reason = result.stop_reason;
      rec.beta_clamped = result.beta_clamped_iterations > 0;
      rec.final_mean = ensemble_moments(result.final_ensemble).mean;
      rec.final_error_inf =
          (rec.final_mean - *objective.minimizer).lpNorm<Eigen::Infinity>();
      rec.success = rec.final_error_inf < kSuccessThresholdInf;
    } catch (const Error& e) {
      rec.error = e.what();
      rec.success = false;
    }
  });

  SuccessRateReport report;
  report.runs = n_runs;
  report.records = std::move(records);
  int successes = 0;
  double iter_sum = 0;
  double err_sum = 0;
  for (const RunRecord& rec : report.records) {
    iter_sum += rec.iterations;
    if (rec.success) {
      ++successes;
      err_sum += rec.final_error_inf;
    }
  }
  report.success_rate = static_cast<double>(successes) / n_runs;
  report.mean_iterations = iter_sum / n_runs;
  report.mean_final_error = successes > 0 ? err_sum / successes : 0.0;
  return report;
}

struct PosteriorReport {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd reference_mean;
  Eigen::MatrixXd reference_covariance;
  Eigen::VectorXd mean_deviation;        // elementwise, vs reference
  Eigen::MatrixXd covariance_deviation;
  int iterations = 0;
  bool collapsed = false;
};

// Sampling run for a posterior target; returns the empirical moments of the
// final ensemble next to the supplied reference moments.
inline PosteriorReport posterior_experiment(const Objective& objective,
                                            Index J, const CbsConfig& config,
                                            int n_iters, double init_std,
                                            const Eigen::VectorXd& reference_mean,
                                            const Eigen::MatrixXd& reference_cov) {
  if (config.mode != Mode::Sampling) {
    throw ConfigInvalidError("posterior_experiment requires sampling mode");
  }
  CbsConfig run_config = config;
  run_config.max_iters = n_iters;
  const Eigen::MatrixXd initial = gaussian_ensemble(
      derive_seed(config.seed, detail::kInitStream), J, objective.dim, init_std);
  const RunResult result = run(initial, objective, run_config);

  PosteriorReport report;
  const WeightedMoments<double> moments = ensemble_moments(result.final_ensemble);
  report.mean = moments.mean;
  report.covariance = moments.covariance;
  report.reference_mean = reference_mean;
  report.reference_covariance = reference_cov;
  report.mean_deviation = moments.mean - reference_mean;
  report.covariance_deviation = moments.covariance - reference_cov;
  report.iterations = result.iterations;
  report.collapsed = J < 2 || frobenius_norm(moments.covariance) <
                                 run_config.cov_frobenius_tol;
  return report;
}

// Published moments for the two-parameter elliptic posterior: the exact
// values and the particle-approximation values they are compared against.
inline void elliptic_2d_reference(Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
  mean = Eigen::Vector2d(-2.714, 104.346);
  cov = Eigen::MatrixXd(2, 2);
  cov << 0.0129, 0.0288, 0.0288, 0.0808;
}

inline void elliptic_2d_particle_reference(Eigen::VectorXd& mean,
                                           Eigen::MatrixXd& cov) {
  mean = Eigen::Vector2d(-2.712, 104.356);
  cov = Eigen::MatrixXd(2, 2);
  cov << 0.0135, 0.0302, 0.0302, 0.0829;
}

// Switches a sampled ensemble into optimization mode for a fixed number of
// iterations; the refined ensemble mean approximates the MAP point.
inline Eigen::MatrixXd map_refinement(const Eigen::MatrixXd& ensemble,
                                      const Objective& objective,
                                      const CbsConfig& config,
                                      int refine_iters = 50) {
  CbsConfig run_config = config;
  run_config.mode = Mode::Optimization;
  run_config.max_iters = refine_iters;
  run_config.seed = derive_seed(config.seed, 0x6d6170);  // separate stream
  return run(ensemble, objective, run_config).final_ensemble;
}

}  // namespace cbs
