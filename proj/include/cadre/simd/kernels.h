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

#include <cstddef>
#include <string_view>

// Data-parallel inner loops. Every kernel has a scalar reference in
// `generic::` and, where the build enables it, an AVX2/FMA variant in
// `avx2::`. The active table is chosen once at startup from CPUID and can be
// forced with CADRE_SIMD=generic|avx2.
namespace cadre::simd {

enum class Isa { kGeneric, kAvx2 };

/// Row-major GEMM: C = op(A) * op(B) + beta * C.
/// op(A) is m x k, op(B) is k x n. When trans_a is set, A is stored k x m.
using GemmFn = void (*)(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                        const double* a, std::size_t lda, const double* b, std::size_t ldb,
                        double beta, double* c, std::size_t ldc);

using UnaryFn = void (*)(const double* x, double* y, std::size_t n);
using SlopeFn = void (*)(const double* x, double* y, std::size_t n, double slope);

/// Nadaraya-Watson accumulation for a single query point.
/// `points_t` is d x n (one contiguous row per dimension), `targets_t` is m x n.
/// Writes weight_sum = sum_j w_j and weighted[t] = sum_j w_j * targets_t[t][j]
/// with w_j = exp(-|q - p_j|^2 * inv_two_h2).
using KernelSumsFn = void (*)(const double* query, const double* points_t, std::size_t n,
                              std::size_t d, const double* targets_t, std::size_t m,
                              double inv_two_h2, double* weight_sum, double* weighted);

struct KernelTable {
  Isa isa;
  GemmFn gemm;
  SlopeFn leaky_relu;
  SlopeFn leaky_relu_slope;  // derivative of leaky_relu: 1 or slope
  UnaryFn tanh;
  UnaryFn exp;
  KernelSumsFn gaussian_kernel_sums;
};

namespace generic {
void Gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc);
void LeakyRelu(const double* x, double* y, std::size_t n, double slope);
void LeakyReluSlope(const double* x, double* y, std::size_t n, double slope);
void Tanh(const double* x, double* y, std::size_t n);
void Exp(const double* x, double* y, std::size_t n);
void GaussianKernelSums(const double* query, const double* points_t, std::size_t n, std::size_t d,
                        const double* targets_t, std::size_t m, double inv_two_h2,
                        double* weight_sum, double* weighted);
}  // namespace generic

#if defined(CADRE_HAVE_AVX2)
namespace avx2 {
void Gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc);
void LeakyRelu(const double* x, double* y, std::size_t n, double slope);
void LeakyReluSlope(const double* x, double* y, std::size_t n, double slope);
void Tanh(const double* x, double* y, std::size_t n);
void Exp(const double* x, double* y, std::size_t n);
void GaussianKernelSums(const double* query, const double* points_t, std::size_t n, std::size_t d,
                        const double* targets_t, std::size_t m, double inv_two_h2,
                        double* weight_sum, double* weighted);
}  // namespace avx2
#endif

bool IsaAvailable(Isa isa);
std::string_view IsaName(Isa isa);

/// Table for a specific ISA. Falls back to generic when `isa` is unavailable.
const KernelTable& KernelsFor(Isa isa);

/// Table selected at startup.
const KernelTable& Kernels();

inline void Gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
                 double* c, std::size_t ldc) {
  Kernels().gemm(trans_a, trans_b, m, n, k, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace cadre::simd
