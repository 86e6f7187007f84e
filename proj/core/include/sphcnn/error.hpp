#pragma once

#include <stdexcept>
#include <string>

namespace sphcnn {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain (bad order/mode, |x| > 1, ...).
struct DomainError : Error {
  using Error::Error;
};

// Matrix/tensor dimension mismatch.
struct ShapeError : Error {
  using Error::Error;
};

// Least-squares system condition number above the configured threshold,
// or a sampling set too small for the requested order.
struct IllConditionedError : Error {
  using Error::Error;
};

// Malformed input file; the message carries line context.
struct ParseError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Invalid run configuration; the message names the offending field.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace sphcnn
