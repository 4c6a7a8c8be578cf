#pragma once

#include <stdexcept>
#include <string>

namespace cortenc {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration values.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed or degenerate input data (NaN series, bad map files, ...).
struct DataError : Error {
  using Error::Error;
};

// Tensor dimension disagreements.
struct ShapeError : Error {
  using Error::Error;
};

// Numerical failure: divergence, singular systems, undefined statistics.
struct NumericError : Error {
  using Error::Error;
};

// Filesystem / serialization problems.
struct IoError : Error {
  using Error::Error;
};

// Decoding-protocol violations (e.g. test subject inside the train set).
struct ProtocolError : Error {
  using Error::Error;
};

}  // namespace cortenc
