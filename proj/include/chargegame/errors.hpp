#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace chargegame {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched sizes or empty inputs.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A function was evaluated outside the set where it is defined or differentiable.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameters or model input.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A constraint set turned out to be empty. When available, `certificate()`
/// holds Farkas multipliers lambda >= 0 over the set's halfspace rows with
/// A^T lambda = 0 and b^T lambda < 0.
class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what, std::vector<double> certificate = {})
      : Error(what), certificate_(std::move(certificate)) {}

  const std::vector<double>& certificate() const { return certificate_; }

 private:
  std::vector<double> certificate_;
};

/// Counterexample geometry could not be built (aligned operators, no interior witness).
class GeometryError : public Error {
 public:
  using Error::Error;
};

}  // namespace chargegame
