#pragma once

#include <stdexcept>
#include <string>

namespace shimkit {

inline constexpr const char* kVersion = "0.1.0";

/// Shape or channel-count disagreement between arguments.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Input outside the operation's domain (empty mask, zero coil count, ...).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Invalid configuration (phantom overflowing its grid, bad ratios, ...).
struct SpecError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Numeric failure carrying diagnostics (non-finite objective, divergence).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// I/O and format failures (truncated payload, version mismatch).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace shimkit
