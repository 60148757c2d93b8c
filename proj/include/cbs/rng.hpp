#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

#include "cbs/types.hpp"

// Seed derivation and noise generation. A run owns one master seed; every
// iteration (and every experiment run) draws from its own substream derived
// by a counter, so concurrent evaluation cannot reorder draws and permuting
// runs cannot change their individual streams.

namespace cbs {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

// rows x cols matrix of independent standard normal draws, filled in a fixed
// row-major order.
inline Eigen::MatrixXd standard_normal_matrix(std::uint64_t seed,
                                              Index rows, Index cols) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      out(r, c) = normal(engine);
    }
  }
  return out;
}

// J particles drawn independently from N(mean, std^2 I_d).
inline Eigen::MatrixXd gaussian_ensemble(std::uint64_t seed, Index J, Index d,
                                         double std_dev,
                                         const Eigen::VectorXd& mean =
                                             Eigen::VectorXd()) {
  Eigen::MatrixXd ensemble = std_dev * standard_normal_matrix(seed, J, d);
  if (mean.size() > 0) {
    ensemble.rowwise() += mean.transpose();
  }
  return ensemble;
}

}  // namespace cbs
