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

// Compiled with -mavx2 -mfma. Nothing in here may run before the dispatcher
// has confirmed CPU support.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cadre/simd/kernels.h"

namespace cadre::simd::avx2 {
namespace {

constexpr std::size_t kMr = 4;
constexpr std::size_t kNr = 8;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 128;

inline double HorizontalSum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// exp(x) for 4 lanes: Cody-Waite reduction by ln2, degree-13 Taylor on
// |r| <= ln2/2, exponent reconstruction through the IEEE bit pattern.
inline __m256d Exp4(__m256d x) {
  const __m256d kMax = _mm256_set1_pd(709.78);
  const __m256d kMin = _mm256_set1_pd(-708.39);
  const __m256d kLog2e = _mm256_set1_pd(1.4426950408889634074);
  const __m256d kLn2Hi = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d kLn2Lo = _mm256_set1_pd(1.42860682030941723212e-6);

  const __m256d underflow = _mm256_cmp_pd(x, kMin, _CMP_LT_OQ);
  __m256d xc = _mm256_min_pd(_mm256_max_pd(x, kMin), kMax);
  __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, kLog2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, kLn2Hi, xc);
  r = _mm256_fnmadd_pd(n, kLn2Lo, r);

  // 1/k! for k = 13 .. 0
  __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  n64 = _mm256_add_epi64(n64, _mm256_set1_epi64x(1023));
  n64 = _mm256_slli_epi64(n64, 52);
  __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(n64));
  return _mm256_andnot_pd(underflow, result);
}

inline __m256d Tanh4(__m256d x) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d one = _mm256_set1_pd(1.0);
  __m256d ax = _mm256_andnot_pd(sign_mask, x);
  ax = _mm256_min_pd(ax, _mm256_set1_pd(40.0));
  __m256d e = Exp4(_mm256_mul_pd(_mm256_set1_pd(-2.0), ax));
  __m256d t = _mm256_div_pd(_mm256_sub_pd(one, e), _mm256_add_pd(one, e));
  return _mm256_or_pd(t, _mm256_and_pd(sign_mask, x));
}

inline double OpA(bool trans, const double* a, std::size_t lda, std::size_t i, std::size_t p) {
  return trans ? a[p * lda + i] : a[i * lda + p];
}

inline double OpB(bool trans, const double* b, std::size_t ldb, std::size_t p, std::size_t j) {
  return trans ? b[j * ldb + p] : b[p * ldb + j];
}

void PackB(bool trans_b, const double* b, std::size_t ldb, std::size_t pc, std::size_t kc,
           std::size_t n, double* out) {
  const std::size_t panels = (n + kNr - 1) / kNr;
  for (std::size_t jp = 0; jp < panels; ++jp) {
    double* dst = out + jp * kc * kNr;
    const std::size_t j0 = jp * kNr;
    const std::size_t width = std::min(kNr, n - j0);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t jj = 0; jj < kNr; ++jj) {
        dst[p * kNr + jj] = jj < width ? OpB(trans_b, b, ldb, pc + p, j0 + jj) : 0.0;
      }
    }
  }
}

void PackA(bool trans_a, const double* a, std::size_t lda, std::size_t ic, std::size_t mc,
           std::size_t pc, std::size_t kc, double* out) {
  const std::size_t panels = (mc + kMr - 1) / kMr;
  for (std::size_t ip = 0; ip < panels; ++ip) {
    double* dst = out + ip * kc * kMr;
    const std::size_t i0 = ic + ip * kMr;
    const std::size_t height = std::min(kMr, ic + mc - i0);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t ii = 0; ii < kMr; ++ii) {
        dst[p * kMr + ii] = ii < height ? OpA(trans_a, a, lda, i0 + ii, pc + p) : 0.0;
      }
    }
  }
}

// 4x8 register tile over one packed k-block.
void MicroKernel(std::size_t kc, const double* ap, const double* bp, double beta, double* c,
                 std::size_t ldc, std::size_t rows, std::size_t cols) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(bp + p * kNr);
    const __m256d b1 = _mm256_loadu_pd(bp + p * kNr + 4);
    const double* arow = ap + p * kMr;
    __m256d a = _mm256_broadcast_sd(arow + 0);
    c00 = _mm256_fmadd_pd(a, b0, c00);
    c01 = _mm256_fmadd_pd(a, b1, c01);
    a = _mm256_broadcast_sd(arow + 1);
    c10 = _mm256_fmadd_pd(a, b0, c10);
    c11 = _mm256_fmadd_pd(a, b1, c11);
    a = _mm256_broadcast_sd(arow + 2);
    c20 = _mm256_fmadd_pd(a, b0, c20);
    c21 = _mm256_fmadd_pd(a, b1, c21);
    a = _mm256_broadcast_sd(arow + 3);
    c30 = _mm256_fmadd_pd(a, b0, c30);
    c31 = _mm256_fmadd_pd(a, b1, c31);
  }
  if (rows == kMr && cols == kNr) {
    __m256d acc[4][2] = {{c00, c01}, {c10, c11}, {c20, c21}, {c30, c31}};
    for (std::size_t r = 0; r < kMr; ++r) {
      double* crow = c + r * ldc;
      if (beta == 0.0) {
        _mm256_storeu_pd(crow, acc[r][0]);
        _mm256_storeu_pd(crow + 4, acc[r][1]);
      } else {
        const __m256d vb = _mm256_set1_pd(beta);
        _mm256_storeu_pd(crow, _mm256_fmadd_pd(vb, _mm256_loadu_pd(crow), acc[r][0]));
        _mm256_storeu_pd(crow + 4, _mm256_fmadd_pd(vb, _mm256_loadu_pd(crow + 4), acc[r][1]));
      }
    }
    return;
  }
  alignas(32) double tile[kMr * kNr];
  _mm256_store_pd(tile + 0, c00);
  _mm256_store_pd(tile + 4, c01);
  _mm256_store_pd(tile + 8, c10);
  _mm256_store_pd(tile + 12, c11);
  _mm256_store_pd(tile + 16, c20);
  _mm256_store_pd(tile + 20, c21);
  _mm256_store_pd(tile + 24, c30);
  _mm256_store_pd(tile + 28, c31);
  for (std::size_t r = 0; r < rows; ++r) {
    double* crow = c + r * ldc;
    for (std::size_t j = 0; j < cols; ++j) {
      crow[j] = beta == 0.0 ? tile[r * kNr + j] : beta * crow[j] + tile[r * kNr + j];
    }
  }
}

}  // namespace

void Gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] = beta == 0.0 ? 0.0 : beta * c[i * ldc + j];
    return;
  }
  thread_local std::vector<double> packed_a;
  thread_local std::vector<double> packed_b;
  const std::size_t n_panels = (n + kNr - 1) / kNr;
  packed_b.resize(n_panels * kNr * std::min(k, kKc));
  packed_a.resize(((std::min(m, kMc) + kMr - 1) / kMr) * kMr * std::min(k, kKc));

  for (std::size_t pc = 0; pc < k; pc += kKc) {
    const std::size_t kc = std::min(kKc, k - pc);
    const double beta_eff = pc == 0 ? beta : 1.0;
    PackB(trans_b, b, ldb, pc, kc, n, packed_b.data());
    for (std::size_t ic = 0; ic < m; ic += kMc) {
      const std::size_t mc = std::min(kMc, m - ic);
      PackA(trans_a, a, lda, ic, mc, pc, kc, packed_a.data());
      const std::size_t m_panels = (mc + kMr - 1) / kMr;
      for (std::size_t jp = 0; jp < n_panels; ++jp) {
        const std::size_t j0 = jp * kNr;
        const std::size_t cols = std::min(kNr, n - j0);
        for (std::size_t ip = 0; ip < m_panels; ++ip) {
          const std::size_t i0 = ic + ip * kMr;
          const std::size_t rows = std::min(kMr, ic + mc - i0);
          MicroKernel(kc, packed_a.data() + ip * kc * kMr, packed_b.data() + jp * kc * kNr,
                      beta_eff, c + i0 * ldc + j0, ldc, rows, cols);
        }
      }
    }
  }
}

void LeakyRelu(const double* x, double* y, std::size_t n, double slope) {
  const __m256d vs = _mm256_set1_pd(slope);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d pos = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(y + i, _mm256_blendv_pd(_mm256_mul_pd(v, vs), v, pos));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void LeakyReluSlope(const double* x, double* y, std::size_t n, double slope) {
  const __m256d vs = _mm256_set1_pd(slope);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d pos = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(y + i, _mm256_blendv_pd(vs, one, pos));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? 1.0 : slope;
}

void Tanh(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, Tanh4(_mm256_loadu_pd(x + i)));
  if (i < n) {
    alignas(32) double buf[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t j = i; j < n; ++j) buf[j - i] = x[j];
    _mm256_store_pd(buf, Tanh4(_mm256_load_pd(buf)));
    for (std::size_t j = i; j < n; ++j) y[j] = buf[j - i];
  }
}

void Exp(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, Exp4(_mm256_loadu_pd(x + i)));
  if (i < n) {
    alignas(32) double buf[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t j = i; j < n; ++j) buf[j - i] = x[j];
    _mm256_store_pd(buf, Exp4(_mm256_load_pd(buf)));
    for (std::size_t j = i; j < n; ++j) y[j] = buf[j - i];
  }
}

void GaussianKernelSums(const double* query, const double* points_t, std::size_t n, std::size_t d,
                        const double* targets_t, std::size_t m, double inv_two_h2,
                        double* weight_sum, double* weighted) {
  constexpr std::size_t kMaxTargets = 16;
  if (m > kMaxTargets) {
    generic::GaussianKernelSums(query, points_t, n, d, targets_t, m, inv_two_h2, weight_sum,
                                weighted);
    return;
  }
  const __m256d neg_c = _mm256_set1_pd(-inv_two_h2);
  __m256d wsum = _mm256_setzero_pd();
  __m256d acc[kMaxTargets];
  for (std::size_t t = 0; t < m; ++t) acc[t] = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    __m256d d2 = _mm256_setzero_pd();
    for (std::size_t k = 0; k < d; ++k) {
      const __m256d diff = _mm256_sub_pd(_mm256_set1_pd(query[k]), _mm256_loadu_pd(points_t + k * n + j));
      d2 = _mm256_fmadd_pd(diff, diff, d2);
    }
    const __m256d w = Exp4(_mm256_mul_pd(d2, neg_c));
    wsum = _mm256_add_pd(wsum, w);
    for (std::size_t t = 0; t < m; ++t) {
      acc[t] = _mm256_fmadd_pd(w, _mm256_loadu_pd(targets_t + t * n + j), acc[t]);
    }
  }
  double total = HorizontalSum(wsum);
  for (std::size_t t = 0; t < m; ++t) weighted[t] = HorizontalSum(acc[t]);
  for (; j < n; ++j) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = query[k] - points_t[k * n + j];
      d2 += diff * diff;
    }
    const double w = std::exp(-d2 * inv_two_h2);
    total += w;
    for (std::size_t t = 0; t < m; ++t) weighted[t] += w * targets_t[t * n + j];
  }
  *weight_sum = total;
}

}  // namespace cadre::simd::avx2
