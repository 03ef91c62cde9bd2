#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lce {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was not met by its arguments.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A step-length tensor (or other SPD argument) is singular or indefinite.
class SingularityError : public Error {
 public:
  SingularityError(const std::string& what, double lambda_min) : Error(what), lambda_min_(lambda_min) {}
  double lambda_min() const noexcept { return lambda_min_; }

 private:
  double lambda_min_;
};

/// A state violates det F >= delta0 or the order-tensor eigenvalue bounds.
/// `where()` is the cell (for Jacobians) or node (for order tensors) index.
class InfeasibleError : public Error {
 public:
  enum class Kind { jacobian, order_tensor };

  InfeasibleError(const std::string& what, Kind kind, std::size_t where, double value)
      : Error(what), kind_(kind), where_(where), value_(value) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t where() const noexcept { return where_; }
  double value() const noexcept { return value_; }

 private:
  Kind kind_;
  std::size_t where_;
  double value_;
};

/// det of a deformation-like argument is not positive.
class OrientationError : public Error {
 public:
  OrientationError(const std::string& what, double det) : Error(what), det_(det) {}
  double det() const noexcept { return det_; }

 private:
  double det_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lce
