#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hydro_embed {

enum class ErrorCode {
  // ingest
  MalformedLine,
  NonConsecutiveDates,
  EmptyFile,
  NegativeDischarge,
  DuplicateBasinId,
  NonNumericAttribute,
  InconsistentColumnCount,
  MissingAttributeFile,
  NoValidBasins,
  InvalidDate,
  // pipeline
  EmptyTrainingPeriod,
  EmptySampleSet,
  InvalidSplit,
  // net
  BasinIndexOutOfRange,
  NonFiniteActivation,
  TapeReuse,
  ShapeMismatch,
  // train
  MissingBasinStd,
  VersionMismatch,
  CorruptFile,
  IoFailure,
  // eval
  ZeroVarianceObserved,
  LengthMismatch,
  IncompatibleCheckpoint,
  // cli
  InvalidConfig,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::NonConsecutiveDates: return "NonConsecutiveDates";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::NegativeDischarge: return "NegativeDischarge";
    case ErrorCode::DuplicateBasinId: return "DuplicateBasinId";
    case ErrorCode::NonNumericAttribute: return "NonNumericAttribute";
    case ErrorCode::InconsistentColumnCount: return "InconsistentColumnCount";
    case ErrorCode::MissingAttributeFile: return "MissingAttributeFile";
    case ErrorCode::NoValidBasins: return "NoValidBasins";
    case ErrorCode::InvalidDate: return "InvalidDate";
    case ErrorCode::EmptyTrainingPeriod: return "EmptyTrainingPeriod";
    case ErrorCode::EmptySampleSet: return "EmptySampleSet";
    case ErrorCode::InvalidSplit: return "InvalidSplit";
    case ErrorCode::BasinIndexOutOfRange: return "BasinIndexOutOfRange";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::TapeReuse: return "TapeReuse";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingBasinStd: return "MissingBasinStd";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ZeroVarianceObserved: return "ZeroVarianceObserved";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hydro_embed
