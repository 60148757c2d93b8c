#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>

#include "cbs/moments.hpp"
#include "cbs/numeric.hpp"
#include "test_helpers.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

MatrixXd particles_1d(std::initializer_list<double> values) {
  MatrixXd m(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index i = 0;
  for (double v : values) m(i++, 0) = v;
  return m;
}

}  // namespace

TEST_CASE("log_weights: constant objective gives uniform weights") {
  const MatrixXd ensemble = MatrixXd::Random(3, 2);
  const VectorXd f = VectorXd::Constant(3, 4.2);
  const auto w = cbs::log_weights(ensemble, f, 7.0);
  CHECK(w.normalized);
  for (int j = 0; j < 3; ++j) {
    CHECK(std::exp(w.values(j)) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  }
}

TEST_CASE("log_weights: beta -> 0 gives uniform weights") {
  const MatrixXd ensemble = MatrixXd::Random(4, 1);
  VectorXd f(4);
  f << 0.0, 3.0, -1.0, 10.0;
  const auto w = cbs::log_weights(ensemble, f, 1e-15);
  for (int j = 0; j < 4; ++j) {
    CHECK(std::exp(w.values(j)) == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("log_weights: two-term softmax against direct evaluation") {
  const MatrixXd ensemble = MatrixXd::Random(2, 1);
  VectorXd f(2);
  f << 0.0, 1.0;
  const auto w = cbs::log_weights(ensemble, f, 1.0);
  // Direct two-term evaluation: w = (1, e^{-1}) / (1 + e^{-1}).
  const double e1 = std::exp(-1.0);
  CHECK(std::exp(w.values(0)) == doctest::Approx(1.0 / (1.0 + e1)).epsilon(1e-15));
  CHECK(std::exp(w.values(1)) == doctest::Approx(e1 / (1.0 + e1)).epsilon(1e-15));
  // Normalization: logsumexp of the log-weights vanishes.
  CHECK(std::abs(cbs::logsumexp(w.values)) <= 1e-12);
}

TEST_CASE("log_weights: infinite objective values get zero weight") {
  const MatrixXd ensemble = MatrixXd::Random(3, 1);
  VectorXd f(3);
  f << 1.0, kInf, 2.0;
  const auto w = cbs::log_weights(ensemble, f, 2.0);
  CHECK(std::exp(w.values(1)) == 0.0);
  CHECK(std::exp(w.values(0)) + std::exp(w.values(2)) ==
        doctest::Approx(1.0).epsilon(1e-14));

  const VectorXd all_inf = VectorXd::Constant(3, kInf);
  CHECK_THROWS_AS(cbs::log_weights(ensemble, all_inf, 1.0),
                  cbs::AllInfiniteError);
}

TEST_CASE("log_weights: large beta does not overflow") {
  const MatrixXd ensemble = MatrixXd::Random(3, 1);
  VectorXd f(3);
  f << 1e8, 1e8 + 1.0, 2e8;
  const auto w = cbs::log_weights(ensemble, f, 1e12);
  CHECK(std::exp(w.values(0)) == doctest::Approx(1.0));
  CHECK(w.values.array().isNaN().sum() == 0);
}

TEST_CASE("log_weights: translation of f leaves the weights unchanged") {
  // Dyadic values make every subtraction exact, so the invariance holds
  // bitwise, not just to rounding.
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> ints(-(1 << 20), 1 << 20);
  for (int rep = 0; rep < 50; ++rep) {
    const int J = 5;
    const MatrixXd ensemble = MatrixXd::Random(J, 1);
    VectorXd f(J);
    for (int j = 0; j < J; ++j) f(j) = ints(rng) / 1024.0;
    const double c = ints(rng) / 1024.0;
    const auto w0 = cbs::log_weights(ensemble, f, 3.5);
    const auto w1 = cbs::log_weights(ensemble, VectorXd(f.array() + c), 3.5);
    CHECK(w0.values == w1.values);
  }
}

TEST_CASE("weighted_mean: uniform average and single particle") {
  MatrixXd two(2, 2);
  two << 0, 0, 2, 0;
  const auto w = cbs::log_weights(two, VectorXd::Zero(2), 1.0);
  const VectorXd mean = cbs::weighted_mean(two, w);
  CHECK(mean(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(mean(1) == 0.0);

  MatrixXd one(1, 3);
  one << 0.25, -1.5, 7.0;
  const auto w1 = cbs::log_weights(one, VectorXd::Zero(1), 1.0);
  CHECK(cbs::weighted_mean(one, w1) == one.row(0).transpose());
}

TEST_CASE("weighted_mean: symmetric configuration has zero mean") {
  const MatrixXd ensemble = particles_1d({-1.0, 0.0, 1.0});
  const VectorXd f = ensemble.col(0).array().square();
  const auto w = cbs::log_weights(ensemble, f, 1.0);
  CHECK(std::abs(cbs::weighted_mean(ensemble, w)(0)) <= 1e-16);
}

TEST_CASE("weighted_mean: dimension mismatch throws") {
  const MatrixXd ensemble = MatrixXd::Random(3, 2);
  cbs::LogWeights<double> w;
  w.values = VectorXd::Constant(4, -std::log(4.0));
  w.normalized = true;
  CHECK_THROWS_AS(cbs::weighted_mean(ensemble, w), cbs::DimensionMismatchError);
}

TEST_CASE("weighted_covariance: collapsed ensemble gives the zero matrix") {
  MatrixXd ensemble(3, 2);
  ensemble << 1.5, -2.0, 1.5, -2.0, 1.5, -2.0;
  const auto w = cbs::log_weights(ensemble, VectorXd::Zero(3), 2.0);
  const VectorXd mean = cbs::weighted_mean(ensemble, w);
  CHECK(mean == ensemble.row(0).transpose());  // anchored form is exact here
  const MatrixXd cov = cbs::weighted_covariance(ensemble, w, mean);
  CHECK(cov == MatrixXd::Zero(2, 2));
}

TEST_CASE("weighted_covariance: population variance of {-1, 0, 1}") {
  const MatrixXd ensemble = particles_1d({-1.0, 0.0, 1.0});
  const auto w = cbs::log_weights(ensemble, VectorXd::Zero(3), 1.0);
  const VectorXd mean = cbs::weighted_mean(ensemble, w);
  const MatrixXd cov = cbs::weighted_covariance(ensemble, w, mean);
  CHECK(cov(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("weighted_covariance: three-term brute force for f = theta^2") {
  const MatrixXd ensemble = particles_1d({-1.0, 0.0, 1.0});
  const VectorXd f = ensemble.col(0).array().square();
  const auto w = cbs::log_weights(ensemble, f, 1.0);
  const VectorXd mean = cbs::weighted_mean(ensemble, w);
  const MatrixXd cov = cbs::weighted_covariance(ensemble, w, mean);
  // Brute force over the three terms: weights proportional to
  // (e^{-1}, 1, e^{-1}); the mean vanishes by symmetry.
  const double e1 = std::exp(-1.0);
  const double expected = 2.0 * e1 / (1.0 + 2.0 * e1);
  CHECK(std::abs(mean(0)) <= 1e-16);
  CHECK(cov(0, 0) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("weighted_covariance: uniform weights match the two-pass formula") {
  std::mt19937_64 rng(7);
  const MatrixXd ensemble = test::random_matrix(rng, 40, 3);
  const auto w = cbs::log_weights(ensemble, VectorXd::Zero(40), 1.0);
  const auto moments = cbs::weighted_moments(ensemble, w);
  // Textbook two-pass population covariance.
  VectorXd mean = VectorXd::Zero(3);
  for (int j = 0; j < 40; ++j) mean += ensemble.row(j).transpose();
  mean /= 40.0;
  MatrixXd cov = MatrixXd::Zero(3, 3);
  for (int j = 0; j < 40; ++j) {
    const VectorXd d = ensemble.row(j).transpose() - mean;
    cov += d * d.transpose();
  }
  cov /= 40.0;
  CHECK((moments.mean - mean).norm() <= 1e-13 * (1.0 + mean.norm()));
  CHECK((moments.covariance - cov).norm() <= 1e-13 * (1.0 + cov.norm()));
}

TEST_CASE("weighted moments invariants: symmetry and PSD") {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    const MatrixXd ensemble = test::random_matrix(rng, 15, 4);
    const VectorXd f = test::random_vector(rng, 15);
    const auto w = cbs::log_weights(ensemble, f, 2.0);
    const auto moments = cbs::weighted_moments(ensemble, w);
    const MatrixXd& C = moments.covariance;
    const double scale = 1.0 + C.lpNorm<Eigen::Infinity>();
    CHECK((C - C.transpose()).lpNorm<Eigen::Infinity>() <= 1e-12 * scale);
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(C);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * (1.0 + C.norm()));
  }
}

TEST_CASE("sym_sqrt: identity and diagonal cases") {
  CHECK(cbs::sym_sqrt<double>(MatrixXd::Identity(3, 3)) ==
        MatrixXd::Identity(3, 3));
  MatrixXd diag = MatrixXd::Zero(2, 2);
  diag(0, 0) = 4.0;
  diag(1, 1) = 9.0;
  const MatrixXd root = cbs::sym_sqrt<double>(diag);
  CHECK(root(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(root(1, 1) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(std::abs(root(0, 1)) <= 1e-14);
}

TEST_CASE("sym_sqrt: multiply-back oracle on random SPD matrices") {
  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 20; ++rep) {
    const MatrixXd C = test::random_spd(rng, 5);
    const MatrixXd S = cbs::sym_sqrt<double>(C);
    CHECK((S * S - C).norm() <= 1e-9 * C.norm());
    CHECK((S - S.transpose()).norm() <= 1e-12 * (1.0 + S.norm()));
  }
}

TEST_CASE("sym_sqrt: negative eigenvalues beyond tolerance throw") {
  MatrixXd bad = MatrixXd::Identity(2, 2);
  bad(1, 1) = -1e-3;
  CHECK_THROWS_AS(cbs::sym_sqrt<double>(bad), cbs::NotPsdError);

  // Tiny negative eigenvalues from roundoff are clamped to zero.
  MatrixXd nearly = MatrixXd::Identity(2, 2);
  nearly(1, 1) = -1e-12;
  const MatrixXd root = cbs::sym_sqrt<double>(nearly);
  CHECK(root(1, 1) == 0.0);

  const MatrixXd zero = MatrixXd::Zero(3, 3);
  CHECK(cbs::sym_sqrt<double>(zero) == zero);
}

TEST_CASE("affine equivariance of the weighted moments") {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    const int J = 25;
    const int d = 3;
    const MatrixXd ensemble = test::random_matrix(rng, J, d);
    const VectorXd f = test::random_vector(rng, J);
    const MatrixXd B = test::random_invertible(rng, d);
    const VectorXd b = test::random_vector(rng, d);

    // theta~ = B theta + b with f~(theta~) = f(theta): the objective values
    // per particle are the same sequence, so the log-weights are identical.
    MatrixXd mapped = (ensemble * B.transpose()).rowwise() + b.transpose();
    const auto w = cbs::log_weights(ensemble, f, 1.7);
    const auto w_mapped = cbs::log_weights(mapped, f, 1.7);
    CHECK(w.values == w_mapped.values);

    const auto moments = cbs::weighted_moments(ensemble, w);
    const auto moments_mapped = cbs::weighted_moments(mapped, w_mapped);
    const VectorXd expected_mean = B * moments.mean + b;
    const MatrixXd expected_cov = B * moments.covariance * B.transpose();
    CHECK((moments_mapped.mean - expected_mean).norm() <=
          1e-9 * (1.0 + expected_mean.norm()));
    CHECK((moments_mapped.covariance - expected_cov).norm() <=
          1e-9 * (1.0 + expected_cov.norm()));
  }
}

TEST_CASE("check_ensemble rejects empty and non-finite input") {
  CHECK_THROWS_AS(cbs::check_ensemble(MatrixXd(0, 2)), cbs::ConfigInvalidError);
  MatrixXd nan_ensemble = MatrixXd::Zero(2, 2);
  nan_ensemble(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(cbs::check_ensemble(nan_ensemble), cbs::ConfigInvalidError);
}
