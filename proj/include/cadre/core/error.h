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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cadre {

enum class ErrorKind {
  kInvalidInput,
  kShapeMismatch,
  kNonSquare,
  kInvalidLatents,
  kUnknownViolation,
  kCyclicSem,
  kInsufficientSamples,
  kDimensionTooLarge,
  kInvalidConfig,
  kRaggedRows,
  kNonNumericCell,
  kEmptyData,
  kMissingGroundTruth,
  kIo,
  // numerical failures
  kDivergedTrajectory,
  kNonFiniteLoss,
  kSingularMixing,
};

std::string_view ErrorKindName(ErrorKind kind);

/// CLI exit code for an error kind: 2 for invalid input, 3 for numerical failure.
int ExitCodeFor(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return ExitCodeFor(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] void Fail(ErrorKind kind, const std::string& message);

inline void Require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) Fail(kind, message);
}

}  // namespace cadre
