// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace rsed {

/// Violated precondition on dimensions or index ranges.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Invalid configuration value or missing required field.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated file contents.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unusable input (missing file, too-short waveform, ...).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Inputs that parse but disagree with each other (dims, utterance ids).
struct ConsistencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// ER or F1 requested on counts where it is not defined.
struct MetricError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Training diverged (non-finite loss).
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw ContractError(what);
}

}  // namespace rsed
