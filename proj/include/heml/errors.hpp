#pragma once

#include <stdexcept>
#include <string>

namespace heml {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Matrix/parameter dimensions do not line up.
struct ShapeError : Error {
  using Error::Error;
};

// Caller violated an API precondition (bad argument, stale cache, ...).
struct UsageError : Error {
  using Error::Error;
};

// Input data is inconsistent (label disagreement, single-class batch, ...).
struct DataError : Error {
  using Error::Error;
};

// Binary file is corrupt, truncated or has the wrong magic/version.
struct FormatError : Error {
  using Error::Error;
};

// Structured text input (manifest, pairing plan) failed validation.
struct ParseError : Error {
  using Error::Error;
};

// A variance or norm fell below the degeneracy guard.
struct DegenerateError : Error {
  using Error::Error;
};

// A combination schedule could not be built.
struct ScheduleError : Error {
  using Error::Error;
};

// Training aborted (divergence, unusable dataset).
struct TrainingError : Error {
  using Error::Error;
};

// Function evaluated outside its mathematical domain.
struct DomainError : Error {
  using Error::Error;
};

// NaN/Inf appeared where every value must be finite.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace heml
