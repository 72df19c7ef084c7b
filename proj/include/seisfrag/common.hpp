#pragma once

#include <stdexcept>
#include <string>

namespace seisfrag {

inline constexpr double kGravity = 9.81;  // m/s^2
inline constexpr double kPi = 3.14159265358979323846;

// Error hierarchy. The CLI maps these onto exit codes, so keep them distinct.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input or configuration (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A function was called outside its documented domain.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// A numerical procedure failed (no root, singular matrix, divergence).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// The sampled scenario admits no modulating function; callers resample.
class InfeasibleScenario : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// A record has zero energy, so Arias-based time instants are undefined.
class UndefinedMeasure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace seisfrag
