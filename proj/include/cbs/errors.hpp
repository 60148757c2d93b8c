#pragma once

#include <stdexcept>
#include <string>

namespace cbs {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every objective value is +inf, so the reweighted measure has no mass.
struct AllInfiniteError : Error {
  using Error::Error;
};

struct DimensionMismatchError : Error {
  using Error::Error;
};

// A matrix that must be positive semidefinite has an eigenvalue below the
// tolerated floor.
struct NotPsdError : Error {
  using Error::Error;
};

struct SingularMatrixError : Error {
  using Error::Error;
};

// Covariance lost positive definiteness during time integration.
struct StepRejectedError : Error {
  using Error::Error;
};

struct QuadratureFailureError : Error {
  using Error::Error;
};

struct NoConvergenceError : Error {
  using Error::Error;
};

struct ConfigInvalidError : Error {
  using Error::Error;
};

}  // namespace cbs
