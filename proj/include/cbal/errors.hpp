#pragma once

#include <stdexcept>
#include <string>

namespace cbal {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Objective or gradient evaluated to a non-finite value.
struct InvalidObjectiveError : Error {
  using Error::Error;
};

// Data cannot support the requested fit (e.g. no treated rows).
struct DegenerateDataError : Error {
  using Error::Error;
};

// A cross-validation fold lacks the observations the objective needs.
struct DegenerateFoldError : Error {
  using Error::Error;
};

struct UnsupportedLinkError : Error {
  using Error::Error;
};

// Outcome vector incompatible with the requested family.
struct InvalidOutcomeError : Error {
  using Error::Error;
};

// Selected support larger than the treated sample; balance equations unsolvable.
struct OverSaturatedSupportError : Error {
  using Error::Error;
};

struct InvalidLevelError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// CSV ingestion failure; message carries the 1-based row/column location.
struct ParseError : Error {
  using Error::Error;
};

struct SimulationError : Error {
  using Error::Error;
};

}  // namespace cbal
