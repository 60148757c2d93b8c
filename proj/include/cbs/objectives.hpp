#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>

#include "cbs/errors.hpp"
#include "cbs/types.hpp"

// Objective functions theta -> f(theta) in [0, +inf]. Objectives are
// immutable after construction and safe to evaluate concurrently. A failed
// forward model is encoded as the value +inf rather than an exception, which
// keeps particle runs total.

namespace cbs {

struct Objective {
  std::string name;
  Index dim = 0;
  std::function<double(const Eigen::VectorXd&)> value;
  std::optional<Eigen::VectorXd> minimizer;  // for benchmarking only

  double operator()(const Eigen::VectorXd& theta) const { return value(theta); }
};

// f(theta) = 1/2 (theta - a)^T A^{-1} (theta - a) through a pre-factored
// Cholesky solve.
inline Objective quadratic(const Eigen::VectorXd& a, const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols() || A.rows() != a.size()) {
    throw DimensionMismatchError("quadratic: a and A sizes do not match");
  }
  auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(A);
  if (llt->info() != Eigen::Success) {
    throw NotPsdError("quadratic: A is not SPD");
  }
  Objective obj;
  obj.name = "quadratic";
  obj.dim = a.size();
  obj.minimizer = a;
  obj.value = [a, llt](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd r = theta - a;
    return 0.5 * r.dot(llt->solve(r));
  };
  return obj;
}

// Translated Ackley function, minimized at (b, ..., b) with value 0.
inline Objective ackley(Index d, double b) {
  if (d < 1) throw ConfigInvalidError("ackley: d must be >= 1");
  Objective obj;
  obj.name = "ackley";
  obj.dim = d;
  obj.minimizer = Eigen::VectorXd::Constant(d, b);
  obj.value = [d, b](const Eigen::VectorXd& x) {
    const double inv_d = 1.0 / static_cast<double>(d);
    double sq = 0.0;
    double cs = 0.0;
    for (Index i = 0; i < d; ++i) {
      const double t = x(i) - b;
      sq += t * t;
      cs += std::cos(2.0 * std::numbers::pi * t);
    }
    return -20.0 * std::exp(-0.2 * std::sqrt(inv_d * sq)) -
           std::exp(inv_d * cs) + std::numbers::e + 20.0;
  };
  return obj;
}

// Translated Rastrigin function, minimized at (b, ..., b) with value 0.
inline Objective rastrigin(Index d, double b) {
  if (d < 1) throw ConfigInvalidError("rastrigin: d must be >= 1");
  Objective obj;
  obj.name = "rastrigin";
  obj.dim = d;
  obj.minimizer = Eigen::VectorXd::Constant(d, b);
  obj.value = [d, b](const Eigen::VectorXd& x) {
    double sum = 0.0;
    for (Index i = 0; i < d; ++i) {
      const double t = x(i) - b;
      sum += t * t - 10.0 * std::cos(2.0 * std::numbers::pi * t) + 10.0;
    }
    return sum;
  };
  return obj;
}

// Gaussian-noise, Gaussian-prior inversion setup y = G(theta) + eta.
struct BayesSetup {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> forward;
  Eigen::VectorXd y;
  Eigen::MatrixXd noise_cov;  // Gamma, SPD
  Eigen::MatrixXd prior_cov;  // Sigma, SPD
};

// Negative log posterior f(theta) = 1/2 |y - G(theta)|^2_Gamma
// + 1/2 |theta|^2_Sigma. Non-finite forward outputs map to f = +inf.
inline Objective bayes_potential(const BayesSetup& setup, Index d) {
  auto noise_llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(setup.noise_cov);
  auto prior_llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(setup.prior_cov);
  if (noise_llt->info() != Eigen::Success || prior_llt->info() != Eigen::Success) {
    throw NotPsdError("bayes_potential: covariances must be SPD");
  }
  Objective obj;
  obj.name = "bayes";
  obj.dim = d;
  obj.value = [setup, noise_llt, prior_llt](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd g = setup.forward(theta);
    if (!g.allFinite()) return std::numeric_limits<double>::infinity();
    const Eigen::VectorXd r = setup.y - g;
    return 0.5 * r.dot(noise_llt->solve(r)) +
           0.5 * theta.dot(prior_llt->solve(theta));
  };
  return obj;
}

// Solution of -e^{u1} p'' = 1 on [0, 1] with p(0) = 0 and p(1) = u2,
// evaluated at x.
inline double elliptic_solution(double u1, double u2, double x) {
  return u2 * x + std::exp(-u1) * (-0.5 * x * x + 0.5 * x);
}

// Forward map (u1, u2) -> (p(0.25), p(0.75)).
inline Eigen::Vector2d elliptic_forward(double u1, double u2) {
  return {elliptic_solution(u1, u2, 0.25), elliptic_solution(u1, u2, 0.75)};
}

// The low-dimensional inversion preset: known data, N(0, 100 I) prior and
// N(0, 0.01 I) observational noise around the explicit forward solution.
inline BayesSetup elliptic_2d_setup() {
  BayesSetup setup;
  setup.forward = [](const Eigen::VectorXd& theta) -> Eigen::VectorXd {
    return elliptic_forward(theta(0), theta(1));
  };
  setup.y = Eigen::Vector2d(27.5, 79.7);
  setup.noise_cov = 0.1 * 0.1 * Eigen::MatrixXd::Identity(2, 2);
  setup.prior_cov = 10.0 * 10.0 * Eigen::MatrixXd::Identity(2, 2);
  return setup;
}

inline Objective elliptic_2d_posterior() {
  Objective obj = bayes_potential(elliptic_2d_setup(), 2);
  obj.name = "elliptic-2d";
  return obj;
}

// f(theta) = theta^2/2 + log cosh(theta) in one dimension. Minimum at 0,
// f''(0) = 2, and 1 <= f'' <= 2 everywhere. log cosh is evaluated through
// |theta| so large arguments cannot overflow and f(-t) == f(t) bitwise.
inline Objective logcosh_target() {
  Objective obj;
  obj.name = "logcosh";
  obj.dim = 1;
  obj.minimizer = Eigen::VectorXd::Zero(1);
  obj.value = [](const Eigen::VectorXd& theta) {
    const double t = std::abs(theta(0));
    const double log_cosh = t + std::log1p(std::exp(-2.0 * t)) - std::numbers::ln2;
    return 0.5 * t * t + log_cosh;
  };
  return obj;
}

// Registry for CLI and config use. b is the translation parameter of the
// benchmark functions; it is ignored by objectives that do not use it.
inline Objective make_objective(const std::string& name, Index d, double b) {
  if (name == "quadratic") {
    return quadratic(Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d));
  }
  if (name == "ackley") return ackley(d, b);
  if (name == "rastrigin") return rastrigin(d, b);
  if (name == "elliptic-2d") return elliptic_2d_posterior();
  if (name == "logcosh") return logcosh_target();
  throw ConfigInvalidError("unknown objective: " + name);
}

}  // namespace cbs
