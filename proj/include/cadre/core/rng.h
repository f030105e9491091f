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

#include <cstdint>
#include <random>
#include <vector>

#include "cadre/core/types.h"

namespace cadre {

/// SplitMix64 finalizer; derives independent sub-seeds from (base, stream).
std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t stream);

/// Pinned random source: mt19937_64 bits with hand-written transforms, so a
/// seed produces the same doubles with any conforming standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  /// Standard normal via Box-Muller.
  double Normal();
  /// Uniform integer on [0, n).
  std::uint64_t Below(std::uint64_t n);
  bool Bernoulli(double p) { return Uniform() < p; }
  std::vector<int> Permutation(int n);

  RowMatrix NormalMatrix(Index rows, Index cols, double stddev = 1.0);
  RowMatrix UniformMatrix(Index rows, Index cols, double lo, double hi);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cadre
