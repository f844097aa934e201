/*
 * Copyright 2026 The fjlab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FJLAB_ERROR_HPP_
#define FJLAB_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace fjlab {

enum class ErrorCode {
  // Validation.
  kAllZeroVector,
  kNegativeEntry,
  kInvariantViolation,
  kShapeMismatch,
  kTooFewAgents,
  kLabelOutOfRange,
  kWeightNotSimplex,
  kTooFewPoints,
  kDegenerateTrajectory,
  kEmptyInput,
  kInsufficientSamples,
  kInvalidScenario,
  kUnbalancedScenario,
  kConfidenceOrderViolated,
  kParseError,
  kSchemaVersionUnsupported,
  kMissingParams,
  kMissingLabels,
  kConfigError,
  kIoError,
  // Numerical.
  kNoConvergence,
  kNotContractive,
  kSingularSystem,
  kDegenerateStubbornness,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kAllZeroVector: return "AllZeroVector";
    case ErrorCode::kNegativeEntry: return "NegativeEntry";
    case ErrorCode::kInvariantViolation: return "InvariantViolation";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kTooFewAgents: return "TooFewAgents";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kWeightNotSimplex: return "WeightNotSimplex";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kDegenerateTrajectory: return "DegenerateTrajectory";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kInsufficientSamples: return "InsufficientSamples";
    case ErrorCode::kInvalidScenario: return "InvalidScenario";
    case ErrorCode::kUnbalancedScenario: return "UnbalancedScenario";
    case ErrorCode::kConfidenceOrderViolated: return "ConfidenceOrderViolated";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kSchemaVersionUnsupported: return "SchemaVersionUnsupported";
    case ErrorCode::kMissingParams: return "MissingParams";
    case ErrorCode::kMissingLabels: return "MissingLabels";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kNotContractive: return "NotContractive";
    case ErrorCode::kSingularSystem: return "SingularSystem";
    case ErrorCode::kDegenerateStubbornness: return "DegenerateStubbornness";
  }
  return "Unknown";
}

// Numerical failures map to exit code 2 in the CLI, everything else to 1.
constexpr bool is_numerical(ErrorCode code) {
  return code == ErrorCode::kNoConvergence ||
         code == ErrorCode::kNotContractive ||
         code == ErrorCode::kSingularSystem ||
         code == ErrorCode::kDegenerateStubbornness;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fjlab

#endif  // FJLAB_ERROR_HPP_
