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

#include <optional>
#include <vector>

#include "cadre/core/rng.h"
#include "cadre/core/types.h"

namespace cadre {

/// Kahn's algorithm over adj(src, dst) != 0. Empty optional when cyclic.
std::optional<std::vector<int>> TopologicalOrder(const RowMatrix& adj);

/// Exhaustive simple-path enumeration; exponential, meant for d <= 8 and as a
/// test oracle. Self-loops count as cycles.
bool HasCycleByPathEnumeration(const RowMatrix& adj);

/// Path enumeration for d <= 8, Kahn otherwise.
bool IsAcyclic(const RowMatrix& adj);

double SpectralNorm(const RowMatrix& m);
double ConditionNumber(const RowMatrix& m);

/// rows x cols matrix with orthonormal columns (rows >= cols), Haar-distributed.
RowMatrix RandomOrthonormalColumns(Index rows, Index cols, Rng& rng);

}  // namespace cadre
