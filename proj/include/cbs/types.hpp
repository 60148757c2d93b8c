#pragma once

#include <Eigen/Dense>

namespace cbs {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

// Noise scale selection: sampling targets e^{-f}, optimization collapses at
// the minimizer.
enum class Mode { Sampling, Optimization };

// Default numeric tolerances. Functions that use them accept an override.
inline constexpr double kSymmetryTol = 1e-12;       // |C - C^T| relative to |C|
inline constexpr double kEigenvalueFloorRel = 1e-10; // PSD slack relative to |C|
inline constexpr double kNormalizedLogWeightTol = 1e-12;

}  // namespace cbs
