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

#include <cstdlib>
#include <string>

#include "cadre/simd/kernels.h"

namespace cadre::simd {
namespace {

constexpr KernelTable kGenericTable{
    Isa::kGeneric,    generic::Gemm, generic::LeakyRelu,         generic::LeakyReluSlope,
    generic::Tanh,    generic::Exp,  generic::GaussianKernelSums,
};

#if defined(CADRE_HAVE_AVX2)
constexpr KernelTable kAvx2Table{
    Isa::kAvx2,    avx2::Gemm, avx2::LeakyRelu,         avx2::LeakyReluSlope,
    avx2::Tanh,    avx2::Exp,  avx2::GaussianKernelSums,
};
#endif

const KernelTable& SelectAtStartup() {
  const char* forced = std::getenv("CADRE_SIMD");
  if (forced != nullptr && std::string(forced) == "generic") return kGenericTable;
  if (IsaAvailable(Isa::kAvx2)) return KernelsFor(Isa::kAvx2);
  return kGenericTable;
}

}  // namespace

bool IsaAvailable(Isa isa) {
  switch (isa) {
    case Isa::kGeneric:
      return true;
    case Isa::kAvx2:
#if defined(CADRE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

std::string_view IsaName(Isa isa) {
  switch (isa) {
    case Isa::kGeneric:
      return "generic";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable& KernelsFor(Isa isa) {
#if defined(CADRE_HAVE_AVX2)
  if (isa == Isa::kAvx2 && IsaAvailable(Isa::kAvx2)) return kAvx2Table;
#else
  (void)isa;
#endif
  return kGenericTable;
}

const KernelTable& Kernels() {
  static const KernelTable& table = SelectAtStartup();
  return table;
}

}  // namespace cadre::simd
