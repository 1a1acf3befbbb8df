#include "latentcpt/error.hpp"

namespace latentcpt {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::EmptyBin: return "EmptyBin";
    case ErrorKind::NonPositiveValue: return "NonPositiveValue";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::TooFewItems: return "TooFewItems";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::WindowOutOfRange: return "WindowOutOfRange";
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::ZeroStd: return "ZeroStd";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::MissingInput: return "MissingInput";
    case ErrorKind::SingleClassTraining: return "SingleClassTraining";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::UndefinedMetric: return "UndefinedMetric";
    case ErrorKind::EmptyBackground: return "EmptyBackground";
    case ErrorKind::UnknownFeature: return "UnknownFeature";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::MissingArtifact: return "MissingArtifact";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace latentcpt
