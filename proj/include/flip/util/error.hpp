#pragma once

#include <stdexcept>
#include <string>

namespace flip {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input data or configuration (CSV rows, schema files, world files).
struct ValidationError : Error {
  using Error::Error;
};

// A weight/propensity combination for which the target functional is not
// identified: the intervention puts mass on an arm whose observed propensity
// is exactly zero, and the weight does not vanish there.
struct IdentificationError : Error {
  using Error::Error;
};

// A regression backend failed to fit or produced non-finite predictions.
struct BackendError : Error {
  using Error::Error;
};

// Bad CLI flags or config-file contents.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace flip
