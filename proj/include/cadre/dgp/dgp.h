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
#include <optional>
#include <string>
#include <vector>

#include "cadre/core/types.h"
#include "json.hpp"

namespace cadre::dgp {

enum class SparsitySetting { kIndependent, kSparse, kDense };
enum class Violation { kNone, kA2, kA3, kA5 };

std::string ToString(SparsitySetting s);
std::string ToString(Violation v);
SparsitySetting ParseSparsitySetting(const std::string& name);
Violation ParseViolation(const std::string& name);

/// Recipe from which MakeSpec draws every matrix of a generating process.
struct DgpOptions {
  int d_x = 6;
  int d_z = 3;
  int T = 10000;
  int lag_order = 1;
  SparsitySetting setting = SparsitySetting::kIndependent;
  Violation violation = Violation::kNone;
  double a1 = 0.2;
  double a2 = 0.8;
  double sigma_z = 1.0;
  double sigma_x = 1.0;
  double obs_degree = 1.0;  // expected edges per node of B
  double transition_norm = 0.9;
  double dep_norm = 0.1;
  std::uint64_t seed = 0;

  bool operator==(const DgpOptions&) const = default;
};

/// Fixed random mixing network: out_i = sum_h C(i,h) * lrelu((A z)_h + S(i,h) s_i + b_h).
/// Each s_i reaches only x_i, so dx_i/ds_j is diagonal before injection.
struct MixingNet {
  RowMatrix A;  // H x d_z
  RowMatrix S;  // d_x x H
  RowMatrix b;  // 1 x H
  RowMatrix C;  // d_x x H
};

struct DGPSpec {
  DgpOptions options;
  double leaky_slope = 0.2;
  std::vector<RowMatrix> W;   // per lag, d_z x d_z; W[l](i, j) is the effect of z_{t-l-1, j} on z_{t, i}
  RowMatrix B_z;              // d_z x d_z; B_z(i, j) is the instantaneous effect of z_j on z_i
  RowMatrix obs_dag;          // d_x x d_x binary, obs_dag(j, i) = 1 for edge j -> i
  RowMatrix obs_weights;      // d_x x d_x, nonzero only on obs_dag's support
  MixingNet mix;
  RowMatrix F_dep;            // d_x x d_x, s_t = eps_t + F_dep x_{t-1}
  RowMatrix Q_linear;         // d_x x d_z orthonormal columns, A3 mixing
  RowMatrix q_noise;          // d_x x d_z, A5 noise mixing

  int d_x() const { return options.d_x; }
  int d_z() const { return options.d_z; }
  int T() const { return options.T; }

  /// Throws InvalidInput when an invariant fails.
  void Validate() const;
};

struct Dataset {
  RowMatrix x;
  std::optional<RowMatrix> z;
  std::optional<RowMatrix> s;
  std::optional<RowMatrix> eps_z;
  std::optional<RowMatrix> eps_x;
  std::optional<DGPSpec> spec;
  std::optional<RowMatrix> coords;
  std::vector<std::string> names;

  // Ground-truth graphs in src x dst layout, present with a spec.
  std::optional<RowMatrix> true_obs;
  std::optional<RowMatrix> true_latent_inst;
  std::optional<RowMatrix> true_latent_lag;

  Index T() const { return x.rows(); }
  Index d_x() const { return x.cols(); }
};

/// Random acyclic binary adjacency: edges i -> j for i before j in a random
/// order, each with probability 2 * expected_degree / (d_x - 1), capped at 1.
RowMatrix SampleErDag(int d_x, double expected_degree, std::uint64_t seed);

/// a1 cos(2 pi t / T) + a2.
double EdgeWeightSchedule(int t, double a1, double a2, int T);

/// Draws all matrices of a spec from its options.
DGPSpec MakeSpec(const DgpOptions& options);

struct LatentTrace {
  RowMatrix z;
  RowMatrix eps_z;
};

struct ObservationTrace {
  RowMatrix x;
  RowMatrix s;
  RowMatrix eps_x;
  RowMatrix x_pre;  // before causal injection among observations
};

LatentTrace SimulateLatent(const DGPSpec& spec);
ObservationTrace SimulateObservations(const DGPSpec& spec, const RowMatrix& z);

/// f_mix(z_t, s_t) for one time step, without the additive s_t.
Vector Mix(const DGPSpec& spec, const Vector& z, const Vector& s);

Dataset MakeDataset(const DGPSpec& spec);

/// Returns a copy of `spec` whose generation breaks the named assumption.
DGPSpec ApplyViolation(const DGPSpec& spec, Violation kind);
DGPSpec ApplyViolation(const DGPSpec& spec, const std::string& kind);

// Persistence. The archive carries every array plus the spec JSON as metadata.
nlohmann::json SpecToJson(const DGPSpec& spec);
DGPSpec SpecFromJson(const nlohmann::json& j);
nlohmann::json OptionsToJson(const DgpOptions& options);
DgpOptions OptionsFromJson(const nlohmann::json& j);

void SaveDataset(const Dataset& data, const std::string& archive_path);
Dataset LoadDataset(const std::string& archive_path);
void WriteCsv(const Dataset& data, const std::string& path);

}  // namespace cadre::dgp
