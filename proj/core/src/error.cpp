// SPDX-License-Identifier: Apache-2.0
#include "keygaze/error.hpp"

namespace keygaze {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::TooFewKeypoints: return "TooFewKeypoints";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::ZeroLengthGaze: return "ZeroLengthGaze";
    case ErrorCode::DegenerateMean: return "DegenerateMean";
    case ErrorCode::DegeneratePrediction: return "DegeneratePrediction";
    case ErrorCode::DegenerateVector: return "DegenerateVector";
    case ErrorCode::DegenerateLabel: return "DegenerateLabel";
    case ErrorCode::MissingNose: return "MissingNose";
    case ErrorCode::MissingEyes: return "MissingEyes";
    case ErrorCode::NoSubjectMatch: return "NoSubjectMatch";
    case ErrorCode::CorruptModel: return "CorruptModel";
    case ErrorCode::ArchMismatch: return "ArchMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

ErrorClass classify(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidRecord:
    case ErrorCode::InvalidConfig:
    case ErrorCode::CorruptModel:
    case ErrorCode::ArchMismatch:
    case ErrorCode::EmptyDataset:
      return ErrorClass::Validation;
    case ErrorCode::Io:
      return ErrorClass::Io;
    default:
      return ErrorClass::Runtime;
  }
}

}  // namespace keygaze
