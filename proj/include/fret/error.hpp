// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fret {

enum class ErrorKind {
  kUnsupportedArchitecture,
  kEmptySelection,
  kNonFiniteLoss,
  kShapeMismatch,
  kNoNormLayers,
  kUnsupportedCorruption,
  kInsufficientSamples,
  kInvalidArgument,
  kConfigError,
  kRuntimeFailure,
  kEmptyRecords,
  kIoError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUnsupportedArchitecture: return "UnsupportedArchitecture";
    case ErrorKind::kEmptySelection: return "EmptySelection";
    case ErrorKind::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kNoNormLayers: return "NoNormLayers";
    case ErrorKind::kUnsupportedCorruption: return "UnsupportedCorruption";
    case ErrorKind::kInsufficientSamples: return "InsufficientSamples";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kConfigError: return "ConfigError";
    case ErrorKind::kRuntimeFailure: return "RuntimeFailure";
    case ErrorKind::kEmptyRecords: return "EmptyRecords";
    case ErrorKind::kIoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define FRET_CHECK(cond, kind, msg)                      \
  do {                                                   \
    if (!(cond)) throw ::fret::Error((kind), (msg));     \
  } while (0)

}  // namespace fret
