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

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cadre/core/types.h"
#include "cadre/dgp/dgp.h"
#include "cadre/model/model.h"
#include "cadre/objective/objective.h"

namespace cadre::graphs {

// Jacobians are stored child x parent (J(i, j) = d x_i / d s_j); graphs are
// stored src x dst, so a graph is the transpose of the thresholded Jacobian.

struct JacobianBundle {
  RowMatrix J_m;       // mean decoder Jacobian d xhat / d s
  RowMatrix D_m;       // diagonal of J_m
  RowMatrix J_g;       // mean |J_g| over evaluation points, zero diagonal
  RowMatrix J_r_curr;  // mean |d r / d z_curr|
  RowMatrix J_r_prev;  // mean |d r / d z_prev|
  Index eval_points = 0;
  double max_ridge = 0.0;  // largest ridge used by observation_graph
};

struct SpatialMask {
  RowMatrix M_loc;
  RowMatrix M_init;
  RowMatrix W;  // SAR weights, W(i, j) for regressor i of column j
  double radius = 50.0;
  RowMatrix coords;
  int degenerate_columns = 0;  // columns without neighbors, left at M_loc
};

struct GraphEstimate {
  RowMatrix obs_graph;
  RowMatrix latent_inst;
  RowMatrix latent_lag;
  double tau = 0.15;
  std::optional<RowMatrix> mask;
  std::vector<std::string> warnings;
};

/// d xhat / d s at fixed z.
RowMatrix DecoderJacobian(const model::ModelParams& params, const Vector& z, const Vector& s);

/// J_g = I - D_m (J_m + ridge I)^{-1} with zero diagonal. Escalates the ridge to 1e-6 when
/// cond(J_m) > 1e12; throws SingularMixing when the ridge does not help.
RowMatrix ObservationGraph(const RowMatrix& J_m, double ridge = 0.0, double* ridge_used = nullptr);

/// ||J_g J_m - (J_m - D_m)||_F / ||J_m||_F.
double FunctionalEquivalenceResidual(const RowMatrix& J_g, const RowMatrix& J_m);

/// 1(|J o M| > tau), in the layout of J.
RowMatrix ThresholdGraph(const RowMatrix& J, const RowMatrix* mask, double tau);

SpatialMask SarMask(const RowMatrix& coords, double radius, const RowMatrix& x);

struct ExtractOptions {
  double tau = 0.15;
  int eval_points = 256;
  const RowMatrix* mask = nullptr;  // src x dst
};

struct Extraction {
  GraphEstimate graphs;
  JacobianBundle bundle;
};

Extraction ExtractGraphs(const model::ModelParams& params, const RowMatrix& x, const ExtractOptions& opts);

// Executable SEM <-> ICA correspondence.

/// Forward-mode dual number with a dense tangent.
struct Dual {
  double v = 0.0;
  Vector d;

  Dual() = default;
  Dual(double value, Index n) : v(value), d(Vector::Zero(n)) {}
  Dual(double value, Vector tangent) : v(value), d(std::move(tangent)) {}
};

Dual operator+(const Dual& a, const Dual& b);
Dual operator-(const Dual& a, const Dual& b);
Dual operator*(const Dual& a, const Dual& b);
Dual operator*(double c, const Dual& a);
Dual operator+(const Dual& a, double c);
Dual Tanh(const Dual& a);
Dual Exp(const Dual& a);
Dual LeakyRelu(const Dual& a, double slope);

/// x_i = f_i(x_parents, z, s_i).
struct SemNode {
  std::vector<int> parents;
  std::function<Dual(const std::vector<Dual>& parent_values, const std::vector<Dual>& z, const Dual& s_i)> f;
};

struct Sem {
  int d_z = 0;
  std::vector<SemNode> nodes;
  std::vector<int> order;  // claimed topological order
};

struct UnrolledSem {
  std::function<Vector(const Vector& z, const Vector& s)> mix;
  std::function<RowMatrix(const Vector& z, const Vector& s)> jacobian_s;  // J_m(z, s)
  double verification_error = 0.0;
};

/// Composes node functions along the topological order into m(z, s) and checks it
/// against fixed-point evaluation of the SEM at 100 random points (tolerance 1e-10).
UnrolledSem UnrollSem(const Sem& sem, std::uint64_t seed = 0);

/// Direct SEM evaluation by iterating x <- f(x) until it stops changing.
Vector EvaluateSemDirect(const Sem& sem, const Vector& z, const Vector& s);

/// x = B x + s + C z with B(i, j) the effect of x_j on x_i.
Sem LinearSem(const RowMatrix& B, const RowMatrix& C);

// Graph files.
void WriteEdgeList(const RowMatrix& adjacency, const RowMatrix* weights, const std::vector<std::string>& names,
                   const std::string& path);

}  // namespace cadre::graphs
