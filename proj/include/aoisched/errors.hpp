#pragma once

#include <stdexcept>
#include <string>

namespace aoisched {

/// Malformed input: bad config values, unparsable files, out-of-range arguments.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine could not produce a valid result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The index threshold is not reached within the waiting-time bound.
class ThresholdNotCrossed : public NumericalError {
 public:
  ThresholdNotCrossed()
      : NumericalError("threshold never crossed within tau_bound") {}
};

}  // namespace aoisched
