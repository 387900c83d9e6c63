#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace slowfast {

enum class ErrorKind {
  kInvalidModel,
  kInvalidInput,
  kBlowUp,
  kInsufficientData,
  kValidation,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidModelError : public Error {
 public:
  explicit InvalidModelError(const std::string& what) : Error(ErrorKind::kInvalidModel, what) {}
};

class InvalidInputError : public Error {
 public:
  explicit InvalidInputError(const std::string& what) : Error(ErrorKind::kInvalidInput, what) {}
};

/// Raised when a simulated state leaves the finite region (non-finite or
/// norm above the blow-up threshold). Carries the simulation time of failure
/// and, when raised from a Monte Carlo loop, the failing sample index.
class BlowUpError : public Error {
 public:
  BlowUpError(double time, std::optional<std::size_t> sample = std::nullopt)
      : Error(ErrorKind::kBlowUp, describe(time, sample)), time_(time), sample_(sample) {}

  double time() const noexcept { return time_; }
  std::optional<std::size_t> sample() const noexcept { return sample_; }

  BlowUpError with_sample(std::size_t sample) const { return BlowUpError(time_, sample); }

 private:
  static std::string describe(double time, std::optional<std::size_t> sample) {
    std::string s = "simulation blow-up at t=" + std::to_string(time);
    if (sample) s += " (sample " + std::to_string(*sample) + ")";
    return s;
  }

  double time_;
  std::optional<std::size_t> sample_;
};

struct ExcludedPoint {
  double epsilon = 0.0;
  double error = 0.0;
  double std_error = 0.0;
  std::string reason;
};

class InsufficientDataError : public Error {
 public:
  InsufficientDataError(const std::string& what, std::vector<ExcludedPoint> excluded)
      : Error(ErrorKind::kInsufficientData, what), excluded_(std::move(excluded)) {}
  const std::vector<ExcludedPoint>& excluded() const noexcept { return excluded_; }

 private:
  std::vector<ExcludedPoint> excluded_;
};

/// Configuration validation failure; `field()` names the offending key.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(ErrorKind::kValidation, field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace slowfast
