#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "cbs/errors.hpp"
#include "cbs/numeric.hpp"
#include "cbs/types.hpp"

// Exact mean-field moment dynamics for a Gaussian target N(a, A), i.e. the
// quadratic potential f(theta) = 1/2 |theta - a|^2_A. For a Gaussian state
// N(m, C) the Gibbs reweighting by e^{-beta f} is again Gaussian with
//
//   C_beta = (C^{-1} + beta A^{-1})^{-1},
//   m_beta = C_beta (beta A^{-1} a + C^{-1} m),
//
// and Gaussianity is preserved along both the discrete recursion and the
// continuous-time flow, so the full law is characterized by (m, C). This
// module is the noise-free laboratory against which the particle system is
// checked, together with the scalar recursions and rate envelopes used by
// the convergence tests.

namespace cbs {

template <typename Scalar = double>
struct GaussianTarget {
  Vector<Scalar> a;  // posterior mean
  Matrix<Scalar> A;  // posterior covariance, SPD
};

template <typename Scalar = double>
struct GaussianState {
  Vector<Scalar> m;
  Matrix<Scalar> C;  // SPD
};

template <typename Scalar>
std::pair<Vector<Scalar>, Matrix<Scalar>> gaussian_weighted_moments(
    const GaussianState<Scalar>& state, const GaussianTarget<Scalar>& target,
    Scalar beta) {
  const Index d = state.m.size();
  if (target.a.size() != d || state.C.rows() != d || target.A.rows() != d) {
    throw DimensionMismatchError("state and target dimensions do not match");
  }
  Eigen::LLT<Matrix<Scalar>> C_llt(state.C);
  Eigen::LLT<Matrix<Scalar>> A_llt(target.A);
  if (C_llt.info() != Eigen::Success || A_llt.info() != Eigen::Success) {
    throw SingularMatrixError("state covariance or target covariance not SPD");
  }
  const Matrix<Scalar> identity = Matrix<Scalar>::Identity(d, d);
  // The precision sum is formed once and then used only through a symmetric
  // solve; the possibly ill-conditioned sum itself is never inverted twice.
  const Matrix<Scalar> precision =
      symmetrized<Scalar>(C_llt.solve(identity) + beta * A_llt.solve(identity));
  Eigen::LLT<Matrix<Scalar>> P_llt(precision);
  if (P_llt.info() != Eigen::Success) {
    throw SingularMatrixError("C^{-1} + beta A^{-1} is numerically singular");
  }
  const Vector<Scalar> rhs = beta * A_llt.solve(target.a) + C_llt.solve(state.m);
  Vector<Scalar> m_beta = P_llt.solve(rhs);
  Matrix<Scalar> C_beta = symmetrized<Scalar>(P_llt.solve(identity));
  return {std::move(m_beta), std::move(C_beta)};
}

// m' = alpha m + (1 - alpha) m_beta,  C' = alpha^2 C + (1 - alpha^2)/lambda C_beta.
template <typename Scalar>
GaussianState<Scalar> discrete_moment_step(const GaussianState<Scalar>& state,
                                           Scalar alpha, Scalar lambda,
                                           Scalar beta,
                                           const GaussianTarget<Scalar>& target) {
  auto [m_beta, C_beta] = gaussian_weighted_moments(state, target, beta);
  GaussianState<Scalar> next;
  next.m = alpha * state.m + (1 - alpha) * m_beta;
  next.C = symmetrized<Scalar>(
      Matrix<Scalar>(alpha * alpha * state.C +
                     ((1 - alpha * alpha) / lambda) * C_beta));
  return next;
}

namespace detail {

// Right-hand side of the continuous-time moment system
//   dm/dt = -beta C (A + beta C)^{-1} (m - a)
//   dC/dt = -2 beta C (A + beta C)^{-1} (C - (1-lambda)/(beta lambda) A).
template <typename Scalar>
std::pair<Vector<Scalar>, Matrix<Scalar>> moment_flow_rhs(
    const GaussianState<Scalar>& state, const GaussianTarget<Scalar>& target,
    Scalar lambda, Scalar beta) {
  const Matrix<Scalar> sum = symmetrized<Scalar>(
      Matrix<Scalar>(target.A + beta * state.C));
  Eigen::LLT<Matrix<Scalar>> llt(sum);
  if (llt.info() != Eigen::Success) {
    throw SingularMatrixError("A + beta C is numerically singular");
  }
  const Scalar steady_coeff = (1 - lambda) / (beta * lambda);
  Vector<Scalar> dm = -beta * state.C * llt.solve(state.m - target.a);
  Matrix<Scalar> dC = -2 * beta * state.C *
                      llt.solve(Matrix<Scalar>(state.C - steady_coeff * target.A));
  return {std::move(dm), symmetrized<Scalar>(dC)};
}

}  // namespace detail

// Classical fixed-step RK4 for the moment ODEs, symmetrizing C after every
// step. The optional callback receives (t, state) after each step. Throws
// StepRejected when C loses positive definiteness, which signals that dt is
// too large.
template <typename Scalar>
GaussianState<Scalar> continuous_moment_flow(
    const GaussianState<Scalar>& state0, const GaussianTarget<Scalar>& target,
    Scalar lambda, Scalar beta, Scalar t_end, Scalar dt,
    const std::function<void(Scalar, const GaussianState<Scalar>&)>& callback = {}) {
  if (!(dt > Scalar(0) && dt <= t_end)) {
    throw ConfigInvalidError("need 0 < dt <= t_end");
  }
  GaussianState<Scalar> state = state0;
  Scalar t = 0;
  auto rk4_step = [&](Scalar h) {
    const auto [k1m, k1c] = detail::moment_flow_rhs(state, target, lambda, beta);
    GaussianState<Scalar> s2{state.m + (h / 2) * k1m, state.C + (h / 2) * k1c};
    const auto [k2m, k2c] = detail::moment_flow_rhs(s2, target, lambda, beta);
    GaussianState<Scalar> s3{state.m + (h / 2) * k2m, state.C + (h / 2) * k2c};
    const auto [k3m, k3c] = detail::moment_flow_rhs(s3, target, lambda, beta);
    GaussianState<Scalar> s4{state.m + h * k3m, state.C + h * k3c};
    const auto [k4m, k4c] = detail::moment_flow_rhs(s4, target, lambda, beta);
    state.m += (h / 6) * (k1m + 2 * k2m + 2 * k3m + k4m);
    state.C = symmetrized<Scalar>(
        Matrix<Scalar>(state.C + (h / 6) * (k1c + 2 * k2c + 2 * k3c + k4c)));
    Eigen::LLT<Matrix<Scalar>> check(state.C);
    if (check.info() != Eigen::Success) {
      throw StepRejectedError("covariance lost positive definiteness; reduce dt");
    }
  };
  const Scalar eps = dt * Scalar(1e-9);
  while (t + dt <= t_end + eps) {
    rk4_step(dt);
    t += dt;
    if (callback) callback(t, state);
  }
  if (t_end - t > eps) {
    rk4_step(t_end - t);
    t = t_end;
    if (callback) callback(t, state);
  }
  return state;
}

// Scalar form of the discrete moment recursion after diagonalization:
//   u_{n+1} = [alpha + (1-alpha) (1+v_n)^{-1}] u_n
//   v_{n+1} = [alpha^2 + (1-alpha^2) lambda^{-1} (1+v_n)^{-1}] v_n.
// Returns (u_n, v_n) for n = 0, ..., n_steps.
template <typename Scalar>
std::vector<std::pair<Scalar, Scalar>> scalar_recursion(Scalar u0, Scalar v0,
                                                        Scalar alpha,
                                                        Scalar lambda,
                                                        int n_steps) {
  if (!(v0 > Scalar(0))) throw ConfigInvalidError("v0 must be positive");
  if (!(alpha >= Scalar(0) && alpha < Scalar(1))) {
    throw ConfigInvalidError("alpha must lie in [0, 1)");
  }
  if (!(lambda > Scalar(0) && lambda <= Scalar(1))) {
    throw ConfigInvalidError("lambda must lie in (0, 1]");
  }
  std::vector<std::pair<Scalar, Scalar>> path;
  path.reserve(n_steps + 1);
  Scalar u = u0;
  Scalar v = v0;
  path.emplace_back(u, v);
  for (int n = 0; n < n_steps; ++n) {
    const Scalar shrink = 1 / (1 + v);
    u = (alpha + (1 - alpha) * shrink) * u;
    v = (alpha * alpha + (1 - alpha * alpha) * shrink / lambda) * v;
    path.emplace_back(u, v);
  }
  return path;
}

// Scalar continuous-time counterpart
//   du/dt = -(v / (1+v)) u,   dv/dt = -2 (v / (1+v)) (v - v_inf),
// with v_inf = (1 - lambda)/lambda, integrated by fixed-step RK4. Returns
// (t, u, v) samples at every step including t = 0.
template <typename Scalar>
std::vector<std::array<Scalar, 3>> scalar_moment_flow(Scalar u0, Scalar v0,
                                                      Scalar lambda,
                                                      Scalar t_end, Scalar dt) {
  if (!(v0 > Scalar(0))) throw ConfigInvalidError("v0 must be positive");
  if (!(lambda > Scalar(0) && lambda <= Scalar(1))) {
    throw ConfigInvalidError("lambda must lie in (0, 1]");
  }
  const Scalar v_inf = (1 - lambda) / lambda;
  auto du = [](Scalar u, Scalar v) { return -(v / (1 + v)) * u; };
  auto dv = [v_inf](Scalar v) { return -2 * (v / (1 + v)) * (v - v_inf); };
  std::vector<std::array<Scalar, 3>> path;
  const int n_steps = static_cast<int>(std::llround(t_end / dt));
  path.reserve(n_steps + 1);
  Scalar t = 0;
  Scalar u = u0;
  Scalar v = v0;
  path.push_back({t, u, v});
  for (int n = 0; n < n_steps; ++n) {
    const Scalar k1u = du(u, v), k1v = dv(v);
    const Scalar k2u = du(u + dt / 2 * k1u, v + dt / 2 * k1v);
    const Scalar k2v = dv(v + dt / 2 * k1v);
    const Scalar k3u = du(u + dt / 2 * k2u, v + dt / 2 * k2v);
    const Scalar k3v = dv(v + dt / 2 * k2v);
    const Scalar k4u = du(u + dt * k3u, v + dt * k3v);
    const Scalar k4v = dv(v + dt * k3v);
    u += dt / 6 * (k1u + 2 * k2u + 2 * k3u + k4u);
    v += dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
    t += dt;
    path.push_back({t, u, v});
  }
  return path;
}

// k0 = |A^{1/2} C0^{-1} A^{1/2}|, the conditioning constant in the Gaussian
// convergence prefactors.
template <typename Scalar>
Scalar k0_constant(const Matrix<Scalar>& C0, const Matrix<Scalar>& A) {
  const Matrix<Scalar> root = sym_sqrt<Scalar>(A);
  Eigen::LLT<Matrix<Scalar>> llt(C0);
  if (llt.info() != Eigen::Success) {
    throw SingularMatrixError("C0 must be SPD");
  }
  return operator_norm_sym<Scalar>(
      symmetrized<Scalar>(Matrix<Scalar>(root * llt.solve(root))));
}

enum class AlphaCase { Zero, Open01, One };

// Sharp convergence-rate envelopes for a Gaussian target: the bound is
//   |m_n - a|_A      <= mean_prefactor * mean_factor(n) * |m_0 - a|_A
//   |C_n - A|_A      <= cov_prefactor * cov_factor(n) * |C_0 - A|_A (sampling)
//   C_n             <=  cov_factor(n) * C_0 in the PSD order   (optimization)
// with n replaced by t in the continuous-time case.
struct RateEnvelope {
  Mode mode = Mode::Sampling;
  AlphaCase alpha_case = AlphaCase::Zero;
  double alpha = 0;
  double beta = 1;
  double k0 = 1;
  double mean_prefactor = 1;
  double cov_prefactor = 1;

  double mean_factor(double s) const {
    switch (mode) {
      case Mode::Sampling:
        switch (alpha_case) {
          case AlphaCase::Zero:
            return std::pow(1.0 / (1.0 + beta), s);
          case AlphaCase::Open01:
            return std::pow((1.0 + alpha * beta) / (1.0 + beta), s);
          case AlphaCase::One:
            return std::exp(-(beta / (1.0 + beta)) * s);
        }
        break;
      case Mode::Optimization:
        switch (alpha_case) {
          case AlphaCase::Zero:
            return k0 / (k0 + beta * s);
          case AlphaCase::Open01:
            return std::pow(
                (k0 + beta) / (k0 + beta + beta * (1.0 - alpha * alpha) * s),
                1.0 / (1.0 + alpha));
          case AlphaCase::One:
            return std::sqrt((k0 + beta) / (k0 + beta + 2.0 * beta * s));
        }
        break;
    }
    return 1.0;
  }

  double cov_factor(double s) const {
    switch (mode) {
      case Mode::Sampling:
        switch (alpha_case) {
          case AlphaCase::Zero:
            return std::pow(1.0 / (1.0 + beta), s);
          case AlphaCase::Open01:
            return std::pow((1.0 + alpha * alpha * beta) / (1.0 + beta), s);
          case AlphaCase::One:
            return std::exp(-(2.0 * beta / (1.0 + beta)) * s);
        }
        break;
      case Mode::Optimization:
        switch (alpha_case) {
          case AlphaCase::Zero:
            return k0 / (k0 + beta * s);
          case AlphaCase::Open01:
            return (k0 + beta) / (k0 + beta + beta * (1.0 - alpha * alpha) * s);
          case AlphaCase::One:
            return (k0 + beta) / (k0 + beta + 2.0 * beta * s);
        }
        break;
    }
    return 1.0;
  }
};

inline RateEnvelope rate_envelope(Mode mode, AlphaCase alpha_case, double alpha,
                                  double beta, double k0) {
  RateEnvelope env;
  env.mode = mode;
  env.alpha_case = alpha_case;
  env.alpha = alpha;
  env.beta = beta;
  env.k0 = k0;
  if (mode == Mode::Sampling) {
    const double grow = std::max(1.0, k0);
    switch (alpha_case) {
      case AlphaCase::Zero:
        env.mean_prefactor = grow;
        env.cov_prefactor = grow;
        break;
      case AlphaCase::Open01:
        env.mean_prefactor = std::pow(grow, 1.0 / (1.0 + alpha));
        env.cov_prefactor = grow;
        break;
      case AlphaCase::One: {
        const double lambda = 1.0 / (1.0 + beta);
        env.mean_prefactor = std::max(1.0, std::pow(k0, lambda / 2.0));
        env.cov_prefactor = std::max(1.0, std::pow(k0, lambda));
        break;
      }
    }
  }
  return env;
}

}  // namespace cbs
