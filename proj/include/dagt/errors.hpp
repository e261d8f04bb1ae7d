#pragma once

#include <stdexcept>
#include <string>

namespace dagt {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Random graph stayed disconnected after the redraw budget was exhausted.
struct ConnectivityFailure : Error {
  using Error::Error;
};

// An iterative numerical routine failed to reach its tolerance.
struct ToleranceFailure : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

// An optimizer state stopped being finite; carries the iteration counter.
struct NonFiniteState : Error {
  NonFiniteState(const std::string& what, long iteration_)
      : Error(what), iteration(iteration_) {}
  long iteration;
};

struct ParseError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct LabelOutOfRange : Error {
  using Error::Error;
};

struct EmptyLocalDataset : Error {
  using Error::Error;
};

// A computation needed the previous iterate but none was supplied.
struct MissingPrevious : Error {
  using Error::Error;
};

struct SnapshotMissing : Error {
  using Error::Error;
};

// Parameter combination violates the feasibility condition of the gap bound.
struct InfeasibleConfig : Error {
  using Error::Error;
};

struct InternalError : Error {
  using Error::Error;
};

}  // namespace dagt
