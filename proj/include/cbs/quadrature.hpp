#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <utility>
#include <vector>

#include "cbs/errors.hpp"
#include "cbs/types.hpp"

// Weighted moments of the one-dimensional density
//
//   rho_beta(theta) ~ exp(-(theta - m)^2 / (2C) - beta f(theta)),
//
// computed by composite Gauss-Legendre quadrature, and the fixed-point
// iteration (m, C) <- (m_beta, (1+beta) C_beta) whose limit is the Gaussian
// steady state of the sampling dynamics. The integration window starts at
// m +/- 12 sqrt(C) and is widened until the outermost panels carry less than
// 1e-12 of the mass; panels are refined by doubling until the moments are
// stable to the relative target.

namespace cbs {

namespace detail {

inline constexpr int kGaussOrder = 20;

struct GaussRule {
  std::array<double, kGaussOrder> nodes;    // ascending, symmetric on [-1, 1]
  std::array<double, kGaussOrder> weights;
};

// Nodes and weights by Newton iteration on the Legendre polynomial. The
// positive roots are computed and mirrored, so the stored rule is exactly
// symmetric.
inline const GaussRule& gauss_rule() {
  static const GaussRule rule = [] {
    GaussRule r{};
    const int n = kGaussOrder;
    for (int i = 0; i < n / 2; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0;
      for (int iter = 0; iter < 100; ++iter) {
        double p0 = 1.0;
        double p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      const double w = 2.0 / ((1.0 - x * x) * dp * dp);
      r.nodes[i] = -std::abs(x);
      r.nodes[n - 1 - i] = std::abs(x);
      r.weights[i] = w;
      r.weights[n - 1 - i] = w;
    }
    return r;
  }();
  return rule;
}

struct QuadratureSums {
  double mass = 0;          // integral of exp(-(V - V_ref))
  double first_centered = 0;  // integral of (theta - c) * ...
  std::vector<double> offsets;  // left-half node offsets (negative)
  std::vector<double> left_values;
  std::vector<double> right_values;
  double outer_mass = 0;    // mass in the outermost panel pair
};

}  // namespace detail

struct QuadratureOptions {
  double window_start = 12.0;   // in units of sqrt(C)
  double window_max = 60.0;
  double window_grow = 1.5;
  double tail_tol = 1e-12;      // outermost-panel mass relative to total
  double rel_tol = 1e-10;       // relative target for the moments
  int panels_start = 64;
  int panels_max = 8192;
};

namespace detail {

// One sweep over a symmetric window [c - W, c + W] with K panels. Node
// positions are enumerated on the left half and mirrored by exact negation,
// and mirrored nodes are accumulated pairwise, so an even integrand yields a
// first moment of exactly zero.
inline QuadratureSums sweep(const std::function<double(double)>& potential,
                            double center, double half_width, int panels,
                            double v_ref) {
  const GaussRule& rule = gauss_rule();
  const double h = 2.0 * half_width / panels;
  QuadratureSums sums;
  const int half_panels = panels / 2;
  sums.offsets.reserve(half_panels * kGaussOrder);
  sums.left_values.reserve(half_panels * kGaussOrder);
  sums.right_values.reserve(half_panels * kGaussOrder);
  const double half_h = h / 2.0;
  for (int k = 0; k < half_panels; ++k) {
    const double panel_mid = -half_width + (k + 0.5) * h;
    double panel_mass = 0;
    for (int i = 0; i < kGaussOrder; ++i) {
      const double offset = panel_mid + half_h * rule.nodes[i];
      const double left = std::exp(-(potential(center + offset) - v_ref));
      const double right = std::exp(-(potential(center - offset) - v_ref));
      const double w = rule.weights[i] * half_h;
      panel_mass += w * (left + right);
      sums.first_centered += w * offset * (left - right);
      sums.offsets.push_back(offset);
      sums.left_values.push_back(w * left);
      sums.right_values.push_back(w * right);
    }
    sums.mass += panel_mass;
    if (k == 0) sums.outer_mass = panel_mass;
  }
  return sums;
}

}  // namespace detail

// Mean and variance of exp(-(theta - m)^2/(2C) - beta f(theta)). beta = 0 is
// allowed and reproduces (m, C).
inline std::pair<double, double> quadrature_weighted_moments_1d(
    double m, double C, const std::function<double(double)>& f, double beta,
    const QuadratureOptions& options = {}) {
  if (!(C > 0)) throw ConfigInvalidError("C must be positive");
  if (!(beta >= 0)) throw ConfigInvalidError("beta must be nonnegative");
  const double sigma = std::sqrt(C);
  auto potential = [&](double theta) {
    const double z = theta - m;
    return z * z / (2.0 * C) + (beta > 0 ? beta * f(theta) : 0.0);
  };

  double window = options.window_start;
  while (true) {
    const double half_width = window * sigma;
    // Reference value to keep the exponentials in range.
    double v_ref = potential(m);
    for (int i = 1; i <= 32; ++i) {
      const double x = half_width * i / 32.0;
      v_ref = std::min(v_ref, std::min(potential(m + x), potential(m - x)));
    }

    detail::QuadratureSums sums;
    double prev_mass = 0, prev_first = 0, prev_second = 0;
    bool converged = false;
    for (int panels = options.panels_start; panels <= options.panels_max;
         panels *= 2) {
      sums = detail::sweep(potential, m, half_width, panels, v_ref);
      // Second moment about the window center, from the stored node values.
      double second = 0;
      for (std::size_t i = 0; i < sums.offsets.size(); ++i) {
        const double d = sums.offsets[i];
        second += d * d * (sums.left_values[i] + sums.right_values[i]);
      }
      if (panels > options.panels_start) {
        const bool mass_ok =
            std::abs(sums.mass - prev_mass) <= options.rel_tol * sums.mass / 10;
        const bool first_ok = std::abs(sums.first_centered - prev_first) <=
                              options.rel_tol * (sums.mass * sigma) / 10;
        const bool second_ok =
            std::abs(second - prev_second) <= options.rel_tol * second / 10;
        if (mass_ok && first_ok && second_ok) {
          converged = true;
        }
      }
      prev_mass = sums.mass;
      prev_first = sums.first_centered;
      prev_second = second;
      if (converged) break;
      if (panels * 2 > options.panels_max) {
        throw QuadratureFailureError(
            "panel refinement did not reach the relative target");
      }
    }

    if (sums.outer_mass <= options.tail_tol * sums.mass) {
      const double mean = m + sums.first_centered / sums.mass;
      // Second pass about the computed mean to avoid cancellation.
      const double shift = mean - m;
      double variance = 0;
      for (std::size_t i = 0; i < sums.offsets.size(); ++i) {
        const double dl = sums.offsets[i] - shift;
        const double dr = -sums.offsets[i] - shift;
        variance += dl * dl * sums.left_values[i] + dr * dr * sums.right_values[i];
      }
      variance /= sums.mass;
      return {mean, variance};
    }

    if (window >= options.window_max) {
      throw QuadratureFailureError(
          "tail mass did not converge within the maximum window");
    }
    window = std::min(window * options.window_grow, options.window_max);
  }
}

struct LaplaceFixedPoint {
  double m = 0;
  double C = 0;
  int iterations = 0;
};

// Iterates (m, C) <- (m_beta(m, C), (1 + beta) C_beta(m, C)) until the
// successive change drops below tol. The limit is the Gaussian steady state
// of the sampling dynamics, which approaches the Laplace point
// (theta_star, 1/f''(theta_star)) as beta grows. theta_star and
// f_second_at_min identify that point; the iteration should be started in a
// ball around it.
inline LaplaceFixedPoint laplace_fixed_point(
    const std::function<double(double)>& f, double f_second_at_min,
    double theta_star, double beta, std::pair<double, double> init,
    double tol = 1e-10, int max_iters = 10000,
    const QuadratureOptions& options = {}) {
  if (!(beta > 0)) throw ConfigInvalidError("beta must be positive");
  if (!(f_second_at_min > 0)) {
    throw ConfigInvalidError("f_second_at_min must be positive");
  }
  (void)theta_star;
  double m = init.first;
  double C = init.second;
  if (!(C > 0)) throw ConfigInvalidError("initial C must be positive");
  for (int n = 1; n <= max_iters; ++n) {
    const auto [m_beta, c_beta] = quadrature_weighted_moments_1d(m, C, f, beta,
                                                                 options);
    const double next_C = (1.0 + beta) * c_beta;
    const double change = std::max(std::abs(m_beta - m), std::abs(next_C - C));
    m = m_beta;
    C = next_C;
    if (change < tol) {
      return {m, C, n};
    }
  }
  throw NoConvergenceError(
      "fixed-point iteration did not converge; beta may be below the "
      "contraction threshold");
}

}  // namespace cbs
