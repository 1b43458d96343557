#pragma once

#include <stdexcept>
#include <string>

namespace hdrsr {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unsupported file content (images, weights, patch stores).
class FormatError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public FormatError {
 public:
  DecodeError(const std::string& format, const std::string& what)
      : FormatError(format + " decode error: " + what), format_(format) {}
  const std::string& format() const noexcept { return format_; }

 private:
  std::string format_;
};

class WriteError : public Error {
 public:
  using Error::Error;
};

/// A sample or argument outside its admissible numeric range.
class RangeError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: a solver that did not converge, a NaN loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class SolverError : public NumericalError {
 public:
  SolverError(const std::string& what, double residual, int iterations)
      : NumericalError(what + " (relative residual " + std::to_string(residual) + " after " +
                       std::to_string(iterations) + " iterations)"),
        residual_(residual),
        iterations_(iterations) {}
  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

}  // namespace hdrsr
