#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tnn {

enum class ErrorKind {
  NonOrthogonal,
  DimensionMismatch,
  TransformChannelMismatch,
  NumericalFailure,
  RankOutOfRange,
  ZeroTensor,
  NonPositiveScale,
  EmptyDataset,
  NotSeparated,
  DivergenceDetected,
  InvalidInputs,
  BadMagic,
  TruncatedFile,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above so that
/// callers (tests, the CLI) can branch on the category rather than the text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonOrthogonal: return "NonOrthogonal";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::TransformChannelMismatch: return "TransformChannelMismatch";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::RankOutOfRange: return "RankOutOfRange";
    case ErrorKind::ZeroTensor: return "ZeroTensor";
    case ErrorKind::NonPositiveScale: return "NonPositiveScale";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::NotSeparated: return "NotSeparated";
    case ErrorKind::DivergenceDetected: return "DivergenceDetected";
    case ErrorKind::InvalidInputs: return "InvalidInputs";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace tnn
