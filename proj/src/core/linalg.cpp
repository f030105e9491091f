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

#include "cadre/core/linalg.h"

#include <functional>
#include <limits>

namespace cadre {

std::optional<std::vector<int>> TopologicalOrder(const RowMatrix& adj) {
  const auto d = static_cast<int>(adj.rows());
  std::vector<int> indegree(static_cast<std::size_t>(d), 0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (adj(i, j) != 0.0) ++indegree[static_cast<std::size_t>(j)];
  std::vector<int> order;
  std::vector<int> ready;
  for (int i = d - 1; i >= 0; --i)
    if (indegree[static_cast<std::size_t>(i)] == 0) ready.push_back(i);
  while (!ready.empty()) {
    const int u = ready.back();
    ready.pop_back();
    order.push_back(u);
    for (int v = d - 1; v >= 0; --v) {
      if (adj(u, v) != 0.0 && --indegree[static_cast<std::size_t>(v)] == 0) ready.push_back(v);
    }
  }
  if (static_cast<int>(order.size()) != d) return std::nullopt;
  return order;
}

bool HasCycleByPathEnumeration(const RowMatrix& adj) {
  const auto d = static_cast<int>(adj.rows());
  std::vector<bool> on_path(static_cast<std::size_t>(d), false);
  // Walks every simple path from `start`; a cycle exists iff some path can
  // step back onto `start`.
  std::function<bool(int, int)> walk = [&](int start, int node) {
    for (int next = 0; next < d; ++next) {
      if (adj(node, next) == 0.0) continue;
      if (next == start) return true;
      if (on_path[static_cast<std::size_t>(next)]) continue;
      on_path[static_cast<std::size_t>(next)] = true;
      const bool found = walk(start, next);
      on_path[static_cast<std::size_t>(next)] = false;
      if (found) return true;
    }
    return false;
  };
  for (int start = 0; start < d; ++start) {
    on_path[static_cast<std::size_t>(start)] = true;
    const bool found = walk(start, start);
    on_path[static_cast<std::size_t>(start)] = false;
    if (found) return true;
  }
  return false;
}

bool IsAcyclic(const RowMatrix& adj) {
  if (adj.rows() <= 8) return !HasCycleByPathEnumeration(adj);
  return TopologicalOrder(adj).has_value();
}

double SpectralNorm(const RowMatrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

double ConditionNumber(const RowMatrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  const double smallest = s(s.size() - 1);
  if (smallest <= 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smallest;
}

RowMatrix RandomOrthonormalColumns(Index rows, Index cols, Rng& rng) {
  Eigen::MatrixXd g = rng.NormalMatrix(rows, rows);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  // Sign-fix so the distribution is Haar rather than QR-convention dependent.
  for (Index j = 0; j < rows; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q.leftCols(cols);
}

}  // namespace cadre
