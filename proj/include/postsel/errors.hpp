// Copyright 2026 The postsel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace postsel {

enum class ErrorCode {
  InvalidArgument,
  ZeroPostselection,
  ZeroStrength,
  DegenerateConditional,
  SaturatedWeakValue,
  OrthogonalPostselection,
  EmptyGrid,
  GateStarved,
  EmptyChannel,
  OutOfRange,
  AmbiguousBranch,
  FlatCurve,
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ZeroPostselection: return "ZeroPostselection";
    case ErrorCode::ZeroStrength: return "ZeroStrength";
    case ErrorCode::DegenerateConditional: return "DegenerateConditional";
    case ErrorCode::SaturatedWeakValue: return "SaturatedWeakValue";
    case ErrorCode::OrthogonalPostselection: return "OrthogonalPostselection";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::GateStarved: return "GateStarved";
    case ErrorCode::EmptyChannel: return "EmptyChannel";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::AmbiguousBranch: return "AmbiguousBranch";
    case ErrorCode::FlatCurve: return "FlatCurve";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above; the
/// message names the offending quantity.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

// Probabilities at or below this are treated as numerically zero.
inline constexpr double kProbabilityFloor = 1e-20;

}  // namespace postsel
