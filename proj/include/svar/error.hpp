#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace svar {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions between model fields or inputs.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// An argument outside its documented domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A sampling scheme that cannot be decomposed into anchored blocks.
class SchemeError : public Error {
 public:
  using Error::Error;
};

/// A computation that would exceed a configured size budget.
class CapacityError : public Error {
 public:
  CapacityError(const std::string& what, double required)
      : Error(what), required_(required) {}
  double required() const noexcept { return required_; }

 private:
  double required_;
};

/// Loss of numerical validity (singular matrices, non-finite likelihoods).
/// `time_index` is the offending time within a block when one applies, else -1.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what, long time_index = -1)
      : Error(what), time_index_(time_index) {}
  long time_index() const noexcept { return time_index_; }

 private:
  long time_index_;
};

/// A mixture component whose total responsibility vanished.
class DegenerateComponentError : public Error {
 public:
  DegenerateComponentError(const std::string& what, int series, int component)
      : Error(what), series_(series), component_(component) {}
  int series() const noexcept { return series_; }
  int component() const noexcept { return component_; }

 private:
  int series_;
  int component_;
};

/// Malformed input files.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace svar
