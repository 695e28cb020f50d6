#pragma once

#include <stdexcept>
#include <string>

namespace hotet {

/// Structural problems: mismatched shapes, malformed parameters, bad files.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// NaN/Inf encountered at an operation boundary. Training steps that hit
/// this abort with a diagnostic instead of propagating garbage.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration or command-line input.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hotet
