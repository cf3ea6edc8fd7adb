/* Copyright 2026 The AtlasFuse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef ATLASFUSE_ERROR_HPP_
#define ATLASFUSE_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace atlasfuse {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  // connectome
  kZeroVarianceRow,
  kTooFewTimepoints,
  kManifestMissing,
  kAtlasMismatch,
  kLabelOutOfRange,
  kNonFiniteEntry,
  kIoFailure,
  // synthgen
  kEmptyRoi,
  kDegenerateCovariance,
  // model
  kRankDeficientInit,
  kNonFiniteActivation,
  kKTooLarge,
  kZeroDegreeNode,
  // losses
  kZeroNormRow,
  kNegativeProbability,
  kBatchTooSmall,
  kZeroNormReadout,
  // training
  kNonFiniteGradient,
  kEmptySplit,
  kTooFewSubjects,
  kLengthMismatch,
  // interpret
  kEmptyCohort,
  // cli
  kUnknownCommand,
  kConfigParse,
};

std::string_view to_string(ErrorCode code);

// All library failures surface as this exception; `code()` is stable and
// printed by the CLI as a machine-readable token.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace atlasfuse

#endif  // ATLASFUSE_ERROR_HPP_
