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

#include "cadre/autodiff/tape.h"
#include "cadre/core/types.h"
#include "cadre/model/model.h"
#include "json.hpp"

namespace cadre::objective {

struct TrainConfig {
  double lambda1 = 4e-3;
  double lambda2 = 1e-2;
  double alpha = 1e-4;
  double beta = 5e-5;
  double tau = 0.15;
  double step_size = 1e-3;
  int steps = 10000;
  int batch_len = 2;
  int batch_windows = 64;
  int penalty_steps = 8;
  int holdout = 256;
  int checkpoint_every = 1000;
  double clip_norm = 5.0;  // global gradient norm; 0 disables
  bool markov_on_lagged = true;  // false: plain l1 on the lagged Jacobian
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
  void Validate() const;
};

nlohmann::json TrainConfigToJson(const TrainConfig& c);
TrainConfig TrainConfigFromJson(const nlohmann::json& j);

struct LossReport {
  double total = 0.0;
  double recon = 0.0;
  double kl_s = 0.0;
  double kl_z = 0.0;
  double sparsity = 0.0;
  double dag = 0.0;
};

/// Time-major stack of `windows` windows of length `len`:
/// row tau * windows + b is step tau of window b.
struct Batch {
  RowMatrix x;
  Index windows = 0;
  Index len = 0;
};

Batch MakeBatch(const RowMatrix& x, const std::vector<Index>& starts, Index len);

/// Window starts drawn uniformly from [0, usable_T - len].
std::vector<Index> SampleWindowStarts(Index usable_T, Index len, Index count, std::uint64_t seed);

// Plain-matrix penalty pieces.

/// (I + J)^T (I + J) - I.
RowMatrix MarkovTransform(const RowMatrix& J);
/// |M(J_curr)|_1 + |M(J_prev)|_1 + |J_g|_1; with markov_on_lagged false the
/// lagged term is |J_prev|_1.
double SparsityPenalty(const RowMatrix& J_r_curr, const RowMatrix& J_r_prev, const RowMatrix& J_g,
                       bool markov_on_lagged = true);
/// tr[(I + A o A / d)^d] - d.
double DagPenalty(const RowMatrix& A);

// Tape versions.
ad::Var MarkovTransform(ad::Var J);
ad::Var DagPenalty(ad::Var A);

/// Batch-mean absolute Jacobians used by the penalties.
struct PenaltyJacobians {
  ad::Var J_r_curr;  // d_z x d_z, diagonal zeroed
  ad::Var J_r_prev;  // d_z x d_z
  ad::Var J_g;       // d_x x d_x, zero diagonal, masked when a mask is given
};

/// Symbolic pieces of one loss evaluation.
struct LossGraph {
  ad::Var total, recon, kl_s, kl_z, sparsity, dag;
  LossReport Report() const;
};

struct LossOptions {
  bool with_penalties = true;
  /// Optional d_x x d_x mask in src x dst layout applied to J_g.
  const RowMatrix* obs_mask = nullptr;
};

LossGraph BuildLoss(ad::Tape& tape, const model::Bound& p, const Batch& batch, const TrainConfig& cfg,
                    std::uint64_t seed, const LossOptions& opts = {});

PenaltyJacobians BuildPenaltyJacobians(const model::Bound& p, ad::Var z_prev, ad::Var z_curr,
                                       ad::Var s_curr, const RowMatrix* obs_mask);

/// Negative ELBO pieces only (sparsity and dag left at zero).
LossReport Elbo(const Batch& batch, const model::ModelParams& params, const TrainConfig& cfg, std::uint64_t seed);

LossReport TotalLoss(const Batch& batch, const model::ModelParams& params, const TrainConfig& cfg,
                     std::uint64_t seed, const LossOptions& opts = {});

/// Total loss and its gradient, flattened in ModelParams::Flatten order.
LossReport Gradient(const Batch& batch, const model::ModelParams& params, const TrainConfig& cfg,
                    std::uint64_t seed, Vector* grad, const LossOptions& opts = {});

// Training.

struct TrainHistoryRow {
  int step = 0;
  LossReport loss;
  double wall_ms = 0.0;
};

struct TrainOptions {
  std::string log_path;         // CSV log, appended
  std::string checkpoint_path;  // periodic checkpoint (with optimizer state)
  std::optional<RowMatrix> obs_mask;
  int stop_after = -1;          // stop once this many total steps are done (for tests)
};

struct TrainResult {
  model::ModelParams params;
  std::vector<TrainHistoryRow> history;
  int steps_done = 0;
};

/// Steps trained on: the final `holdout` steps (at most T/4) are reserved for graph extraction.
Index TrainingSpan(Index T, const TrainConfig& cfg);

TrainResult Train(const RowMatrix& x, model::ModelParams params, const TrainConfig& cfg,
                  const TrainOptions& opts = {});

/// Continues from a checkpoint written by Train.
TrainResult Resume(const RowMatrix& x, const std::string& checkpoint_path, const TrainConfig& cfg,
                   const TrainOptions& opts = {});

}  // namespace cadre::objective
