#pragma once

#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace cavspin {

/// Base class for numerical failures (as opposed to invalid input, which is
/// reported with std::invalid_argument). Carries a JSON payload describing
/// the failure so the CLI can emit it verbatim.
class NumericalError : public std::runtime_error {
public:
  NumericalError(const std::string& what, nlohmann::json payload = {})
      : std::runtime_error(what), payload_(std::move(payload)) {}

  const nlohmann::json& payload() const noexcept { return payload_; }

private:
  nlohmann::json payload_;
};

class QuadratureError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// Raised by the avoided-crossing extractor when no column shows two branches.
class UnresolvedSplitting : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class FeatureError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

}  // namespace cavspin
