#pragma once

#include <stdexcept>
#include <string>

namespace pfl {

/// Base class for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch between tensors, or an indivisible split.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, failed convergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Caller supplied an argument outside the operation's domain.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A configuration violates its invariants.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Batch construction impossible with the given dataset.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint does not fit the requested model.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Analysis preconditions on the data are not met.
class AnalysisError : public Error {
 public:
  using Error::Error;
};

}  // namespace pfl
