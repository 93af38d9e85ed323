#pragma once

#include <stdexcept>
#include <string>

namespace polsens {

// Base of every error raised by the library. The CLI maps subclasses onto
// exit codes, so keep the hierarchy flat and specific.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data does not match the declared schema (missing/extra columns,
// width mismatch between a fit and the dataset it is applied to).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A value violates a domain invariant (non-binary treatment, duplicate id).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A cell could not be parsed as a number.
class ParseError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Fitting target has a single class on the requested subset.
class DegenerateTargetError : public Error {
 public:
  using Error::Error;
};

// Argument outside its mathematical domain (negative lambda, K > n, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Vectors that must be aligned unit-for-unit have different lengths.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

class EmptyGroupError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Sampler could not find a finite starting point.
class InitializationError : public Error {
 public:
  using Error::Error;
};

// Intercept calibration cannot reach a requested marginal.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

// Too few chains or draws for a diagnostic.
class InsufficientDrawsError : public Error {
 public:
  using Error::Error;
};

// Raised by pipelines when the convergence gate fails.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// A CLI command needs an artifact produced by an earlier command.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace polsens
