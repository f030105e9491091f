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
#include <string>
#include <utility>
#include <vector>

#include "cadre/autodiff/tape.h"
#include "cadre/core/types.h"
#include "json.hpp"

namespace cadre::model {

struct ModelConfig {
  int d_x = 6;
  int d_z = 3;
  int enc_hidden = 0;   // 0 selects d_x
  int dec_hidden = 0;   // 0 selects d_x
  int flow_hidden = 128;
  int flow_layers = 3;
  double leaky_slope = 0.2;
  double logvar_clamp = 8.0;
  double jac_floor = 1e-8;
  std::uint64_t seed = 0;

  int EncHidden() const { return enc_hidden > 0 ? enc_hidden : d_x; }
  int DecHidden() const { return dec_hidden > 0 ? dec_hidden : d_x; }
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json ConfigToJson(const ModelConfig& c);
ModelConfig ConfigFromJson(const nlohmann::json& j);

struct DenseIdx {
  int W = -1;  // out x in
  int b = -1;  // 1 x out
};

struct EncoderIdx {
  DenseIdx hidden, mean, logvar;
};

struct DecoderIdx {
  int Wz = -1, Ws = -1, b = -1;  // hidden layer split by input block
  DenseIdx out;
};

struct FlowIdx {
  std::vector<DenseIdx> hidden;
  DenseIdx out;
};

struct Layout {
  EncoderIdx enc_z, enc_s;
  DecoderIdx dec;
  std::vector<FlowIdx> r;  // d_z flows on (z_prev, z_curr)
  std::vector<FlowIdx> w;  // d_x flows on (z_curr, s_curr_i)
};

class ModelParams {
 public:
  ModelParams() = default;

  /// Random initialization, weights N(0, 1/fan_in), biases zero.
  static ModelParams Init(const ModelConfig& config, std::uint64_t seed);
  static ModelParams Zeros(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const Layout& layout() const { return layout_; }

  std::size_t num_tensors() const { return tensors_.size(); }
  const std::string& name(int i) const { return tensors_[static_cast<std::size_t>(i)].first; }
  RowMatrix& tensor(int i) { return tensors_[static_cast<std::size_t>(i)].second; }
  const RowMatrix& tensor(int i) const { return tensors_[static_cast<std::size_t>(i)].second; }
  int Find(const std::string& name) const;

  Index NumScalars() const;
  Vector Flatten() const;
  void Unflatten(const Vector& flat);

  /// Sets every flow to pass its own coordinate through unchanged:
  /// r_i = z_curr_i, w_i = s_i.
  void SetFlowsToIdentity();

  /// Archive of named tensors; metadata carries the config JSON plus `extra`.
  void Save(const std::string& path, const nlohmann::json& extra = {}) const;
  static ModelParams Load(const std::string& path, nlohmann::json* extra = nullptr);

  bool operator==(const ModelParams& other) const;

 private:
  explicit ModelParams(const ModelConfig& config);
  int Add(std::string name, Index rows, Index cols);
  DenseIdx AddDense(const std::string& prefix, Index out, Index in);

  ModelConfig config_;
  Layout layout_;
  std::vector<std::pair<std::string, RowMatrix>> tensors_;
};

/// Parameters mirrored onto a tape.
struct Bound {
  const ModelParams* params = nullptr;
  std::vector<ad::Var> vars;
  ad::Var operator[](int i) const { return vars[static_cast<std::size_t>(i)]; }
};

/// Binds parameters as trainable variables (or constants when `trainable` is false).
Bound Bind(ad::Tape& tape, const ModelParams& params, bool trainable = true);

// Tape-level building blocks shared by the objective and graph extraction.

struct EncoderOut {
  ad::Var mean;
  ad::Var logvar;  // clamped
};

EncoderOut EncodeZ(const Bound& p, ad::Var x);
EncoderOut EncodeS(const Bound& p, ad::Var x);
ad::Var Decode(const Bound& p, ad::Var z, ad::Var s);

/// Columns of the decoder Jacobian wrt s at N points: row k*N + n holds
/// d xhat(n) / d s_k as a 1 x d_x row, i.e. column k of J_m(n).
ad::Var DecoderJacobianColumns(const Bound& p, ad::Var z, ad::Var s);

/// Output of an MLP flow and directional derivatives along input unit vectors.
struct FlowEval {
  ad::Var out;       // N x 1
  ad::Var tangents;  // (K*N) x 1, block k is d out / d input_{dirs[k]}
};

FlowEval EvalFlow(const Bound& p, const FlowIdx& flow, ad::Var input, const std::vector<int>& dirs);

/// sum_i [log N(eps_i; 0, 1) + log(|jac_i| + floor)] per row for the z-prior.
/// Returns an N x 1 log-density along with the residuals and diagonal Jacobians.
struct FlowLogProb {
  ad::Var logp;      // N x 1
  ad::Var eps;       // N x d
  ad::Var diag_jac;  // N x d
};

FlowLogProb FlowZLogProb(const Bound& p, ad::Var z_prev, ad::Var z_curr);
FlowLogProb FlowSLogProb(const Bound& p, ad::Var z_curr, ad::Var s_curr);

/// Stacked Jacobians of r wrt (z_prev, z_curr) at N points.
/// Row k*N + n of `prev` is d r(n) / d z_prev_k as a 1 x d_z row (column k of J_r_prev(n)).
struct FlowJacobianColumns {
  ad::Var prev;
  ad::Var curr;
};

FlowJacobianColumns FlowZJacobianColumns(const Bound& p, ad::Var z_prev, ad::Var z_curr);

// Convenience wrappers on plain matrices.

struct PosteriorSample {
  RowMatrix z_mean, z_logvar, s_mean, s_logvar;
  RowMatrix z_sample, s_sample;
  RowMatrix z_noise, s_noise;
};

PosteriorSample Encode(const RowMatrix& x, const ModelParams& params, std::uint64_t seed);
RowMatrix Decode(const RowMatrix& z, const RowMatrix& s, const ModelParams& params);

struct FlowResult {
  double logp = 0.0;
  Vector eps_hat;
  Vector diag_jac;
};

FlowResult FlowZLogProb(const Vector& z_prev, const Vector& z_curr, const ModelParams& params);
FlowResult FlowSLogProb(const Vector& z_curr, const Vector& s_curr, const ModelParams& params);

struct FlowJacobians {
  RowMatrix curr;  // d_z x d_z, (i, j) = d r_i / d z_curr_j
  RowMatrix prev;
};

FlowJacobians FlowZJacobians(const Vector& z_prev, const Vector& z_curr, const ModelParams& params);

/// d_x x d_x Jacobian d xhat / d s at (z, s), z held fixed.
RowMatrix DecoderJacobian(const ModelParams& params, const Vector& z, const Vector& s);

/// Reshapes stacked Jacobian columns (K*N x d) into the N matrices (d x K).
std::vector<RowMatrix> UnstackColumns(const RowMatrix& stacked, Index n_points, Index k_dirs);

}  // namespace cadre::model
