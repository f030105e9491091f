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

#include <cmath>

#include "cadre/simd/kernels.h"

namespace cadre::simd::generic {

void Gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (beta == 0.0) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    } else if (beta != 1.0) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = trans_a ? a[p * lda + i] : a[i * lda + p];
      if (aip == 0.0) continue;
      if (trans_b) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * b[j * ldb + p];
      } else {
        const double* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  }
}

void LeakyRelu(const double* x, double* y, std::size_t n, double slope) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void LeakyReluSlope(const double* x, double* y, std::size_t n, double slope) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? 1.0 : slope;
}

void Tanh(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void Exp(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

void GaussianKernelSums(const double* query, const double* points_t, std::size_t n, std::size_t d,
                        const double* targets_t, std::size_t m, double inv_two_h2,
                        double* weight_sum, double* weighted) {
  double wsum = 0.0;
  for (std::size_t t = 0; t < m; ++t) weighted[t] = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = query[k] - points_t[k * n + j];
      d2 += diff * diff;
    }
    const double w = std::exp(-d2 * inv_two_h2);
    wsum += w;
    for (std::size_t t = 0; t < m; ++t) weighted[t] += w * targets_t[t * n + j];
  }
  *weight_sum = wsum;
}

}  // namespace cadre::simd::generic
