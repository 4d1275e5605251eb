#pragma once

#include <stdexcept>
#include <string>

namespace zipcwm {

/// Broad failure category. The CLI maps each category onto an exit code.
enum class ErrorKind { usage, data, numerical, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::numerical, what) {}
};

// Argument outside the mathematical domain of a density (e.g. Poisson mean <= 0).
class DomainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// A parameter value that would make a log density -inf (zero probability level,
// covariance that fails to factorize).
class DegenerateParameterError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// A mixture component whose total responsibility fell below the empty threshold.
class EmptyComponentError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Every EM restart failed; the message lists per-restart causes.
class FitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace zipcwm
