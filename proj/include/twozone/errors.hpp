#pragma once

#include <stdexcept>
#include <string>

namespace twozone {

/// Malformed scenario input (bad JSON, missing field, wrong type).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scenario parsed but violates a model invariant. `field()` names the
/// offending entry as a dotted path, e.g. "markets.A.beta".
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Failure inside a numerical routine (non-PSD covariance, cap exceeded, ...).
class NumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace twozone
