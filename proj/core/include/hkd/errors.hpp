// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hkd {

/// Operand shapes are incompatible with an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An architecture, transform or run configuration is inconsistent.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data violates its declared domain (e.g. a label outside [0, K)).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An API precondition unrelated to shapes was violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A training step produced a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A metric was requested over an empty evaluation set.
class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Archive or dataset bytes do not follow the expected layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hkd
