#pragma once

#include <stdexcept>
#include <string>

namespace tactfl {

// Dimension or shape disagreement between tensors / parameter blocks.
struct shape_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// An argument outside its valid range (tau <= 0, alpha <= 0, ...).
struct parameter_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed serialized data (feature files, checkpoints, manifests).
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A federated-protocol contract was violated (e.g. client heads diverged).
struct protocol_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Experiment configuration rejected during validation.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite arithmetic was required.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tactfl
