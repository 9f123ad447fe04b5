#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace resilinet {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not line up.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// NaN or Inf reached a layer boundary or optimizer.
class NumericError : public Error {
public:
  using Error::Error;
};

/// API called out of order (e.g. backward without a cached forward).
class UsageError : public Error {
public:
  using Error::Error;
};

/// Scenario enumeration would exceed the 2^V guard.
class CapacityError : public Error {
public:
  using Error::Error;
};

/// Serialized model or report is unreadable.
class ArtifactError : public Error {
public:
  using Error::Error;
};

/// A plan, config or setting failed validation. Carries every violation found,
/// each prefixed with the offending field.
class ValidationError : public Error {
public:
  explicit ValidationError(std::vector<std::string> violations)
      : Error(join(violations)), violations_(std::move(violations)) {}

  explicit ValidationError(const std::string& violation)
      : ValidationError(std::vector<std::string>{violation}) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }

  std::vector<std::string> violations_;
};

/// Scheme / failout / run-config combination that cannot be honoured.
class ConfigError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

}  // namespace resilinet
