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

#include <algorithm>
#include <limits>
#include <numeric>

#include "cadre/core/error.h"
#include "cadre/metrics/metrics.h"

namespace cadre::metrics {

std::vector<int> MaxWeightAssignment(const RowMatrix& weight) {
  const Index n = weight.rows(), m = weight.cols();
  Require(n <= m, ErrorKind::kShapeMismatch, "MaxWeightAssignment needs rows <= cols");
  if (n == 0) return {};
  const double top = weight.maxCoeff();
  const double inf = std::numeric_limits<double>::infinity();
  // Shortest augmenting paths with potentials, 1-based with a virtual column 0.
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(m + 1), 0.0);
  std::vector<Index> match(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(m + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Index i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) continue;
        const double cost = top - weight(i0 - 1, j - 1);
        const double cur = cost - u[static_cast<std::size_t>(i0)] - v[ju];
        if (cur < minv[ju]) {
          minv[ju] = cur;
          way[ju] = j0;
        }
        if (minv[ju] < delta) {
          delta = minv[ju];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) {
          u[static_cast<std::size_t>(match[ju])] += delta;
          v[ju] -= delta;
        } else {
          minv[ju] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> result(static_cast<std::size_t>(n), -1);
  for (Index j = 1; j <= m; ++j)
    if (match[static_cast<std::size_t>(j)] != 0) result[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = static_cast<int>(j - 1);
  return result;
}

std::vector<int> BruteForceAssignment(const RowMatrix& weight) {
  Require(weight.rows() == weight.cols() && weight.rows() <= 9, ErrorKind::kInvalidInput,
          "BruteForceAssignment takes square inputs up to 9 x 9");
  std::vector<int> perm(static_cast<std::size_t>(weight.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_sum = -std::numeric_limits<double>::infinity();
  do {
    double sum = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) sum += weight(static_cast<Index>(i), perm[i]);
    if (sum > best_sum) {
      best_sum = sum;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace cadre::metrics
