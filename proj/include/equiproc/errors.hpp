#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace equiproc {

/// A precondition on user-supplied input failed.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Several validation failures collected before any work starts.
class AggregateValidationError : public ValidationError {
 public:
  explicit AggregateValidationError(std::vector<std::string> messages)
      : ValidationError(join(messages)), messages_(std::move(messages)) {}

  const std::vector<std::string>& messages() const noexcept { return messages_; }

 private:
  static std::string join(const std::vector<std::string>& m) {
    std::string out = "invalid configuration:";
    for (const auto& s : m) out += "\n  - " + s;
    return out;
  }
  std::vector<std::string> messages_;
};

/// The bracketing-integral hypothesis of the equicontinuity bound does not
/// hold for the requested (family, gamma, Q).
class DivergentBracketingIntegral : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A simulated draw contradicted the declared structure of a coupling spec.
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace equiproc
