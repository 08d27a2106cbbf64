#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ftx {

// Invalid configuration or user input. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Tensor shape mismatch; the message names the offending shapes.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input data: CSV parse failures, ordering violations, schema gaps.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss during training. The CLI maps this to exit code 3.
struct DivergedError : std::runtime_error {
  std::size_t step;
  DivergedError(std::size_t step_, const std::string& what)
      : std::runtime_error(what), step(step_) {}
};

}  // namespace ftx
