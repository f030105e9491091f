// Copyright 2026 The CaDRe Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cadre/core/error.h"

namespace cadre {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "InvalidInput";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kNonSquare: return "NonSquare";
    case ErrorKind::kInvalidLatents: return "InvalidLatents";
    case ErrorKind::kUnknownViolation: return "UnknownViolation";
    case ErrorKind::kCyclicSem: return "CyclicSEM";
    case ErrorKind::kInsufficientSamples: return "InsufficientSamples";
    case ErrorKind::kDimensionTooLarge: return "DimensionTooLarge";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kRaggedRows: return "RaggedRows";
    case ErrorKind::kNonNumericCell: return "NonNumericCell";
    case ErrorKind::kEmptyData: return "EmptyData";
    case ErrorKind::kMissingGroundTruth: return "MissingGroundTruth";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kDivergedTrajectory: return "DivergedTrajectory";
    case ErrorKind::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::kSingularMixing: return "SingularMixing";
  }
  return "Unknown";
}

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDivergedTrajectory:
    case ErrorKind::kNonFiniteLoss:
    case ErrorKind::kSingularMixing:
      return 3;
    default:
      return 2;
  }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message), kind_(kind) {}

void Fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace cadre
