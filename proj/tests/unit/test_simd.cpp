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

#include <vector>

#include "cadre/simd/kernels.h"
#include "doctest.h"
#include "test_util.h"

using namespace cadre;

namespace {

const simd::KernelTable& Generic() { return simd::KernelsFor(simd::Isa::kGeneric); }

std::vector<const simd::KernelTable*> Variants() {
  std::vector<const simd::KernelTable*> v{&Generic()};
  if (simd::IsaAvailable(simd::Isa::kAvx2)) v.push_back(&simd::KernelsFor(simd::Isa::kAvx2));
  return v;
}

std::vector<double> RandomValues(std::size_t n, std::uint64_t seed, double scale) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.Normal();
  return v;
}

}  // namespace

TEST_CASE("dispatch reports a usable table") {
  const simd::KernelTable& k = simd::Kernels();
  CHECK(k.gemm != nullptr);
  CHECK(simd::IsaAvailable(simd::Isa::kGeneric));
  CHECK(simd::IsaName(k.isa).size() > 0);
  CHECK(simd::KernelsFor(simd::Isa::kGeneric).isa == simd::Isa::kGeneric);
}

TEST_CASE("gemm variants agree with the scalar reference") {
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 8, 16}, {17, 9, 33}, {64, 64, 64}, {130, 7, 300}, {5, 260, 3}};
  std::uint64_t seed = 1;
  for (const simd::KernelTable* t : Variants()) {
    for (const auto& s : shapes) {
      const std::size_t m = s[0], n = s[1], k = s[2];
      for (int ta = 0; ta < 2; ++ta) {
        for (int tb = 0; tb < 2; ++tb) {
          for (double beta : {0.0, 1.0, -0.5}) {
            const std::vector<double> a = RandomValues(m * k, ++seed, 1.0), b = RandomValues(k * n, ++seed, 1.0);
            const std::vector<double> c0 = RandomValues(m * n, ++seed, 1.0);
            std::vector<double> ref = c0, got = c0;
            const std::size_t lda = ta ? m : k, ldb = tb ? k : n;
            Generic().gemm(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, beta, ref.data(), n);
            t->gemm(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, beta, got.data(), n);
            double err = 0.0;
            for (std::size_t i = 0; i < ref.size(); ++i) err = std::max(err, std::abs(ref[i] - got[i]));
            CHECK_MESSAGE(err <= 1e-11 * static_cast<double>(k + 1), simd::IsaName(t->isa), " m=", m, " n=", n, " k=", k);
          }
        }
      }
    }
  }
}

TEST_CASE("gemm matches a naive triple loop") {
  const std::size_t m = 6, n = 5, k = 4;
  const std::vector<double> a = RandomValues(m * k, 3, 1.0), b = RandomValues(k * n, 4, 1.0);
  std::vector<double> c(m * n, 0.0);
  simd::Gemm(false, false, m, n, k, a.data(), k, b.data(), n, 0.0, c.data(), n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-13));
    }
}

TEST_CASE("elementwise kernels agree across variants") {
  for (std::size_t n : {1u, 3u, 4u, 7u, 64u, 1001u}) {
    std::vector<double> x = RandomValues(n, n, 4.0);
    x[0] = 0.0;
    std::vector<double> ref(n), got(n);
    for (const simd::KernelTable* t : Variants()) {
      Generic().leaky_relu(x.data(), ref.data(), n, 0.2);
      t->leaky_relu(x.data(), got.data(), n, 0.2);
      CHECK(ref == got);
      Generic().leaky_relu_slope(x.data(), ref.data(), n, 0.2);
      t->leaky_relu_slope(x.data(), got.data(), n, 0.2);
      CHECK(ref == got);
      Generic().tanh(x.data(), ref.data(), n);
      t->tanh(x.data(), got.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-14).scale(1.0));
      Generic().exp(x.data(), ref.data(), n);
      t->exp(x.data(), got.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("exp and tanh handle extreme arguments") {
  const std::vector<double> x = {-800.0, -40.0, -1e-300, 0.0, 1e-300, 20.0, 700.0, 710.0};
  std::vector<double> y(x.size());
  for (const simd::KernelTable* t : Variants()) {
    t->exp(x.data(), y.data(), x.size());
    CHECK(y[0] == 0.0);
    CHECK(y[3] == 1.0);
    CHECK(y[6] == doctest::Approx(std::exp(700.0)).epsilon(1e-13));
    CHECK(std::isinf(y[7]));
    t->tanh(x.data(), y.data(), x.size());
    CHECK(y[0] == -1.0);
    CHECK(y[7] == 1.0);
    CHECK(y[3] == 0.0);
  }
}

TEST_CASE("gaussian kernel sums agree across variants") {
  for (std::size_t n : {1u, 5u, 8u, 333u}) {
    for (std::size_t d : {1u, 3u}) {
      const std::size_t m = 2;
      const std::vector<double> pts = RandomValues(d * n, 10 + n, 1.0), tgt = RandomValues(m * n, 20 + n, 1.0);
      const std::vector<double> q = RandomValues(d, 30 + n, 1.0);
      double w_ref = 0.0;
      std::vector<double> s_ref(m), s_got(m);
      Generic().gaussian_kernel_sums(q.data(), pts.data(), n, d, tgt.data(), m, 0.7, &w_ref, s_ref.data());
      for (const simd::KernelTable* t : Variants()) {
        double w_got = 0.0;
        t->gaussian_kernel_sums(q.data(), pts.data(), n, d, tgt.data(), m, 0.7, &w_got, s_got.data());
        CHECK(w_got == doctest::Approx(w_ref).epsilon(1e-12));
        for (std::size_t i = 0; i < m; ++i) CHECK(s_got[i] == doctest::Approx(s_ref[i]).epsilon(1e-12).scale(1.0));
      }
    }
  }
}
