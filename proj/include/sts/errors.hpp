#pragma once

#include <stdexcept>
#include <string>

namespace sts {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not line up for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument value (out-of-range index, zero extent, odd width, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Mathematical domain violation, e.g. log of a non-positive value.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a documented precondition (non-scalar backward, mismatched stats).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a diverging optimisation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data, including I/O failures.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace sts
