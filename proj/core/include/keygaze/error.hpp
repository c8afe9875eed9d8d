// SPDX-License-Identifier: Apache-2.0
/**
 * @file   error.hpp
 * @brief  Error codes and the exception type shared by every keygaze module.
 */
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace keygaze {

enum class ErrorCode {
  TooFewKeypoints,
  DegenerateGeometry,
  ZeroLengthGaze,
  DegenerateMean,
  DegeneratePrediction,
  DegenerateVector,
  DegenerateLabel,
  MissingNose,
  MissingEyes,
  NoSubjectMatch,
  CorruptModel,
  ArchMismatch,
  EmptyDataset,
  NonFiniteLoss,
  InvalidRecord,
  InvalidConfig,
  Io,
};

/// Stable, human-readable name for an error code. Used as the skip reason in
/// prediction records, so the spelling is part of the file format.
std::string_view to_string(ErrorCode code) noexcept;

/// Broad failure classes; the CLI maps each to a distinct exit code.
enum class ErrorClass { Validation, Runtime, Io };

ErrorClass classify(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace keygaze
