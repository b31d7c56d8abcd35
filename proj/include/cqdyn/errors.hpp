#pragma once

#include <stdexcept>
#include <string>

namespace cqdyn {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of matrices or model fields do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be Hermitian / positive semi-definite is not, or a
/// model violates the complete-positivity conditions.
class PositivityError : public Error {
 public:
  using Error::Error;
};

/// An operation was called outside its contract (e.g. pure-state unravelling
/// of a model that does not saturate the trade-off).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// The integration step is too coarse: trace or weight collapsed, or the grid
/// solver's stability bound is violated.
class StepSizeError : public Error {
 public:
  using Error::Error;
};

/// Bad caller input: empty ensembles, mismatched grids, malformed configs.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Requested size exceeds what the library is willing to allocate.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// A trajectory left the model's phase-space domain (q <= 0 for the square-root
/// well, the exclusion ball around a point mass, ...).
class DomainExitError : public Error {
 public:
  using Error::Error;
};

}  // namespace cqdyn
