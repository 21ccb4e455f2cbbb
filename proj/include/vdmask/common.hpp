#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vdm {

// Shape/contract violations: an op was fed tensors it cannot combine.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or evaluation outside an op's domain (log of <= 0, ...).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse: caller broke a documented precondition.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Bad run configuration (unreachable training targets, invalid settings).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file; `offset` is the byte position of the problem.
struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (byte " + std::to_string(offset) + ")"),
        offset(offset) {}
  std::size_t offset;
};

// Raised when a training guardrail identifies a known failure mode.
struct TrainingDivergedError : std::runtime_error {
  TrainingDivergedError(const std::string& mode, const std::string& detail)
      : std::runtime_error("training diverged: " + mode + " -- " + detail),
        mode(mode) {}
  std::string mode;
};

}  // namespace vdm
