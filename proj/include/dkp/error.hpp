// Copyright 2026 The dkp Authors. Apache 2.0 License.

#ifndef DKP_ERROR_HPP_
#define DKP_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace dkp {

// Base of every error the library throws on bad input.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension or length mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or schedule argument.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed, truncated or version-mismatched file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Training diverged (NaN/Inf loss or gradient).
class NumericalAbort : public Error {
 public:
  using Error::Error;
};

}  // namespace dkp

#endif  // DKP_ERROR_HPP_
