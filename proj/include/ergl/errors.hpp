#pragma once

#include <stdexcept>
#include <string>

namespace ergl {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape violations (mismatched extents, bad axes).
struct DimensionError : Error {
  using Error::Error;
};

// API misuse: non-scalar loss, double backward, premature readout.
struct ContractError : Error {
  using Error::Error;
};

// Invalid configuration values (n out of range, empty mel filter, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Unparseable or malformed files (manifest, pseudo labels, checkpoint).
struct FormatError : Error {
  using Error::Error;
};

// Bad runtime input (unreadable wav, clip shorter than one window).
struct InputError : Error {
  using Error::Error;
};

// Non-finite loss or other numeric breakdown during training.
struct NumericError : Error {
  using Error::Error;
};

// Checkpoint incompatible with the data it is asked to process.
struct CompatError : Error {
  using Error::Error;
};

}  // namespace ergl
