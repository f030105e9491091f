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

#include "cadre/core/error.h"
#include "cadre/core/linalg.h"
#include "cadre/core/rng.h"
#include "cadre/graphs/graphs.h"

namespace cadre::graphs {

namespace {

// Tangents of different lengths arise from constants; treat a missing tangent as zero.
Vector AddTangents(const Vector& a, double ca, const Vector& b, double cb) {
  if (a.size() == b.size()) return ca * a + cb * b;
  if (a.size() == 0) return cb * b;
  if (b.size() == 0) return ca * a;
  Fail(ErrorKind::kShapeMismatch, "dual tangents of different lengths");
}

std::vector<Dual> Lift(const Vector& v, Index tangent_dim, bool seed_identity) {
  std::vector<Dual> out;
  out.reserve(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) {
    Dual d(v(i), tangent_dim);
    if (seed_identity) d.d(i) = 1.0;
    out.push_back(std::move(d));
  }
  return out;
}

void CheckStructure(const Sem& sem) {
  const auto d = static_cast<Index>(sem.nodes.size());
  Require(d >= 1 && d <= 10, ErrorKind::kInvalidInput, "UnrollSem supports 1 to 10 nodes");
  RowMatrix adj = RowMatrix::Zero(d, d);
  for (Index i = 0; i < d; ++i) {
    Require(static_cast<bool>(sem.nodes[static_cast<std::size_t>(i)].f), ErrorKind::kInvalidInput,
            "SEM node without a function");
    for (int p : sem.nodes[static_cast<std::size_t>(i)].parents) {
      Require(p >= 0 && p < d, ErrorKind::kInvalidInput, "SEM parent index out of range");
      adj(p, i) = 1.0;
    }
  }
  if (!IsAcyclic(adj)) Fail(ErrorKind::kCyclicSem, "SEM graph contains a cycle");
  Require(static_cast<Index>(sem.order.size()) == d, ErrorKind::kCyclicSem, "SEM order must list every node once");
  std::vector<int> position(static_cast<std::size_t>(d), -1);
  for (std::size_t k = 0; k < sem.order.size(); ++k) {
    const int node = sem.order[k];
    Require(node >= 0 && node < d && position[static_cast<std::size_t>(node)] < 0, ErrorKind::kCyclicSem,
            "SEM order must list every node once");
    position[static_cast<std::size_t>(node)] = static_cast<int>(k);
  }
  for (Index i = 0; i < d; ++i)
    for (int p : sem.nodes[static_cast<std::size_t>(i)].parents)
      Require(position[static_cast<std::size_t>(p)] < position[static_cast<std::size_t>(i)], ErrorKind::kCyclicSem,
              "SEM order is not topological");
}

std::vector<Dual> ComposeInOrder(const Sem& sem, const std::vector<Dual>& z, const std::vector<Dual>& s) {
  std::vector<Dual> x(sem.nodes.size());
  std::vector<Dual> pv;
  for (int i : sem.order) {
    const SemNode& node = sem.nodes[static_cast<std::size_t>(i)];
    pv.clear();
    for (int p : node.parents) pv.push_back(x[static_cast<std::size_t>(p)]);
    x[static_cast<std::size_t>(i)] = node.f(pv, z, s[static_cast<std::size_t>(i)]);
  }
  return x;
}

}  // namespace

Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, AddTangents(a.d, 1.0, b.d, 1.0)}; }
Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, AddTangents(a.d, 1.0, b.d, -1.0)}; }
Dual operator*(const Dual& a, const Dual& b) { return {a.v * b.v, AddTangents(a.d, b.v, b.d, a.v)}; }
Dual operator*(double c, const Dual& a) { return {c * a.v, c * a.d}; }
Dual operator+(const Dual& a, double c) { return {a.v + c, a.d}; }

Dual Tanh(const Dual& a) {
  const double t = std::tanh(a.v);
  return {t, (1.0 - t * t) * a.d};
}

Dual Exp(const Dual& a) {
  const double e = std::exp(a.v);
  return {e, e * a.d};
}

Dual LeakyRelu(const Dual& a, double slope) {
  const double g = a.v > 0.0 ? 1.0 : slope;
  return {g * a.v, g * a.d};
}

Vector EvaluateSemDirect(const Sem& sem, const Vector& z, const Vector& s) {
  const auto d = static_cast<Index>(sem.nodes.size());
  Require(s.size() == d && z.size() == sem.d_z, ErrorKind::kShapeMismatch, "SEM input sizes");
  const std::vector<Dual> zd = Lift(z, 0, false);
  const std::vector<Dual> sd = Lift(s, 0, false);
  Vector x = Vector::Zero(d);
  std::vector<Dual> pv;
  for (Index iter = 0; iter <= d + 1; ++iter) {
    Vector next(d);
    for (Index i = 0; i < d; ++i) {
      const SemNode& node = sem.nodes[static_cast<std::size_t>(i)];
      pv.clear();
      for (int p : node.parents) pv.emplace_back(x(p), 0);
      next(i) = node.f(pv, zd, sd[static_cast<std::size_t>(i)]).v;
    }
    if (next == x && iter > 0) return x;
    x = next;
  }
  Fail(ErrorKind::kCyclicSem, "SEM fixed-point evaluation did not settle; the graph is cyclic");
}

UnrolledSem UnrollSem(const Sem& sem, std::uint64_t seed) {
  CheckStructure(sem);
  const auto d = static_cast<Index>(sem.nodes.size());
  UnrolledSem out;
  out.mix = [sem](const Vector& z, const Vector& s) {
    const std::vector<Dual> x = ComposeInOrder(sem, Lift(z, 0, false), Lift(s, 0, false));
    Vector v(static_cast<Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) v(static_cast<Index>(i)) = x[i].v;
    return v;
  };
  out.jacobian_s = [sem, d](const Vector& z, const Vector& s) {
    const std::vector<Dual> x = ComposeInOrder(sem, Lift(z, d, false), Lift(s, d, true));
    RowMatrix J = RowMatrix::Zero(d, d);
    for (Index i = 0; i < d; ++i) {
      const Vector& t = x[static_cast<std::size_t>(i)].d;
      if (t.size() == d) J.row(i) = t.transpose();
    }
    return J;
  };

  Rng rng(seed);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    Vector z(sem.d_z), s(d);
    for (Index i = 0; i < sem.d_z; ++i) z(i) = rng.Normal();
    for (Index i = 0; i < d; ++i) s(i) = rng.Normal();
    worst = std::max(worst, (out.mix(z, s) - EvaluateSemDirect(sem, z, s)).cwiseAbs().maxCoeff());
  }
  out.verification_error = worst;
  Require(worst <= 1e-10, ErrorKind::kInvalidInput,
          "unrolled mixing disagrees with direct SEM evaluation (max error " + std::to_string(worst) + ")");
  return out;
}

Sem LinearSem(const RowMatrix& B, const RowMatrix& C) {
  Require(B.rows() == B.cols(), ErrorKind::kNonSquare, "LinearSem needs a square B");
  Require(C.rows() == B.rows(), ErrorKind::kShapeMismatch, "LinearSem: C must have one row per node");
  const Index d = B.rows();
  Sem sem;
  sem.d_z = static_cast<int>(C.cols());
  for (Index i = 0; i < d; ++i) {
    SemNode node;
    std::vector<double> w;
    for (Index j = 0; j < d; ++j) {
      if (B(i, j) != 0.0) {
        node.parents.push_back(static_cast<int>(j));
        w.push_back(B(i, j));
      }
    }
    const Vector c = C.row(i).transpose();
    node.f = [w, c](const std::vector<Dual>& pv, const std::vector<Dual>& z, const Dual& s_i) {
      Dual acc = s_i;
      for (std::size_t k = 0; k < pv.size(); ++k) acc = acc + w[k] * pv[k];
      for (std::size_t k = 0; k < z.size(); ++k)
        if (c(static_cast<Index>(k)) != 0.0) acc = acc + c(static_cast<Index>(k)) * z[k];
      return acc;
    };
    sem.nodes.push_back(std::move(node));
  }
  const RowMatrix adj = Support(RowMatrix(B.transpose()));
  if (auto order = TopologicalOrder(adj)) {
    sem.order = *order;
  } else {
    for (Index i = 0; i < d; ++i) sem.order.push_back(static_cast<int>(i));
  }
  return sem;
}

}  // namespace cadre::graphs
