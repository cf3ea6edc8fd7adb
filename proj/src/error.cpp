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
#include "atlasfuse/error.hpp"

namespace atlasfuse {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kZeroVarianceRow: return "ZeroVarianceRow";
    case ErrorCode::kTooFewTimepoints: return "TooFewTimepoints";
    case ErrorCode::kManifestMissing: return "ManifestMissing";
    case ErrorCode::kAtlasMismatch: return "AtlasMismatch";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kNonFiniteEntry: return "NonFiniteEntry";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kEmptyRoi: return "EmptyROI";
    case ErrorCode::kDegenerateCovariance: return "DegenerateCovariance";
    case ErrorCode::kRankDeficientInit: return "RankDeficientInit";
    case ErrorCode::kNonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kZeroDegreeNode: return "ZeroDegreeNode";
    case ErrorCode::kZeroNormRow: return "ZeroNormRow";
    case ErrorCode::kNegativeProbability: return "NegativeProbability";
    case ErrorCode::kBatchTooSmall: return "BatchTooSmall";
    case ErrorCode::kZeroNormReadout: return "ZeroNormReadout";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kEmptySplit: return "EmptySplit";
    case ErrorCode::kTooFewSubjects: return "TooFewSubjects";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyCohort: return "EmptyCohort";
    case ErrorCode::kUnknownCommand: return "UnknownCommand";
    case ErrorCode::kConfigParse: return "ConfigParse";
  }
  return "Unknown";
}

}  // namespace atlasfuse
