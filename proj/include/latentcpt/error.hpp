#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace latentcpt {

enum class ErrorKind {
  EmptyBin,
  NonPositiveValue,
  LengthMismatch,
  TooFewItems,
  DuplicateId,
  WindowOutOfRange,
  InvalidInput,
  ZeroStd,
  NonFiniteInput,
  DivergedLoss,
  RankDeficient,
  MissingInput,
  SingleClassTraining,
  DimensionMismatch,
  UndefinedMetric,
  EmptyBackground,
  UnknownFeature,
  IndexOutOfRange,
  MissingArtifact,
  ConfigError,
  FormatError,
  IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure raised by the library. `kind()` is the machine-readable name
// reported by the CLI; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace latentcpt
