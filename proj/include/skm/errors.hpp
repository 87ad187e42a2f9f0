#pragma once

#include <stdexcept>
#include <string>

namespace skm {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A reaction fired that would drive a population negative.
class InvalidTransition : public Error {
 public:
  using Error::Error;
};

/// Hazards became non-finite (bad rate constants) during simulation.
class NonFiniteHazard : public Error {
 public:
  using Error::Error;
};

/// More reactions than the configured cap fired inside one interval.
class EventCapExceeded : public Error {
 public:
  using Error::Error;
};

/// Every importance weight in a population is zero.
class DegeneratePopulation : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace skm
