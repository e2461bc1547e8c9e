#pragma once

#include <stdexcept>
#include <string>

namespace causalbb {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// dgp
class UnknownScenario : public Error {
 public:
  explicit UnknownScenario(const std::string& name) : Error("unknown scenario: " + name) {}
};
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// numopt
class NumericalError : public Error {
 public:
  using Error::Error;
};
class SingularDesign : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class Separation : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class MaxIterations : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class DivergedStep : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// bboot
class ExtremePropensity : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class NonPositiveOutcome : public Error {
 public:
  using Error::Error;
};

// harness
class UnknownParameter : public Error {
 public:
  explicit UnknownParameter(const std::string& name) : Error("unknown parameter: " + name) {}
};

// cli
class ParseError : public Error {
 public:
  using Error::Error;
};
class ValidationError : public Error {
 public:
  using Error::Error;
};
class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace causalbb
