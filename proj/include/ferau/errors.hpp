#ifndef FERAU_ERRORS_HPP_
#define FERAU_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace ferau {

// Base for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape / axis mismatch between tensors or maps.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid configuration (model, training, codebook, CLI config file).
struct ConfigError : Error {
  using Error::Error;
};

// Ill-formed or missing data files, bad sample content.
struct DataError : Error {
  using Error::Error;
};

// Invalid operation parameter (layer index, sigma, stride, ...).
struct ParamError : Error {
  using Error::Error;
};

// Non-finite values or other numerical failures during optimization.
struct NumericError : Error {
  using Error::Error;
};

// API contract violation (non-scalar backward root, etc).
struct ContractError : Error {
  using Error::Error;
};

}  // namespace ferau

#endif  // FERAU_ERRORS_HPP_
