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

#include "cadre/objective/objective.h"

#include <cmath>
#include <numbers>

#include "cadre/core/error.h"
#include "cadre/core/rng.h"

namespace cadre::objective {

using ad::Var;
using nlohmann::json;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

RowMatrix OffDiagonalOnes(Index d) { return RowMatrix::Ones(d, d) - RowMatrix::Identity(d, d); }

// K x (K * P) matrix averaging each block of P rows.
RowMatrix BlockAverager(Index k, Index p) {
  RowMatrix a = RowMatrix::Zero(k, k * p);
  for (Index i = 0; i < k; ++i) a.block(i, i * p, 1, p).setConstant(1.0 / static_cast<double>(p));
  return a;
}

// Smallest ridge keeping the conditioning of J + ridge I below 1e8 during training.
double TrainingRidge(const RowMatrix& J) {
  double ridge = 0.0;
  const Index d = J.rows();
  for (int attempt = 0; attempt < 8; ++attempt) {
    const RowMatrix m = J + ridge * RowMatrix::Identity(d, d);
    Eigen::JacobiSVD<RowMatrix> svd(m);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1), smax = sv(0);
    if (smin > 0.0 && smax / smin < 1e8) return ridge;
    ridge = ridge == 0.0 ? 1e-6 : ridge * 10.0;
  }
  return ridge;
}

void RequireFinite(const LossReport& r) {
  const double v[] = {r.total, r.recon, r.kl_s, r.kl_z, r.sparsity, r.dag};
  for (double x : v) {
    if (!std::isfinite(x))
      Fail(ErrorKind::kNonFiniteLoss, "non-finite loss (recon=" + std::to_string(r.recon) +
                                          ", kl_s=" + std::to_string(r.kl_s) + ", kl_z=" + std::to_string(r.kl_z) +
                                          ", sparsity=" + std::to_string(r.sparsity) +
                                          ", dag=" + std::to_string(r.dag) + ")");
  }
}

}  // namespace

void TrainConfig::Validate() const {
  Require(lambda1 >= 0 && lambda2 >= 0 && alpha >= 0 && beta >= 0, ErrorKind::kInvalidConfig,
          "loss weights must be nonnegative");
  Require(tau > 0.0 && tau <= 1.0, ErrorKind::kInvalidConfig, "tau must lie in (0, 1]");
  Require(step_size > 0.0, ErrorKind::kInvalidConfig, "step_size must be positive");
  Require(steps >= 0, ErrorKind::kInvalidConfig, "steps must be nonnegative");
  Require(batch_len >= 2, ErrorKind::kInvalidConfig, "batch_len must be >= 2");
  Require(batch_windows >= 1 && penalty_steps >= 1, ErrorKind::kInvalidConfig, "batch sizes must be positive");
  Require(holdout >= 0 && checkpoint_every >= 1, ErrorKind::kInvalidConfig, "holdout/checkpoint_every invalid");
}

json TrainConfigToJson(const TrainConfig& c) {
  return json{{"lambda1", c.lambda1},
              {"lambda2", c.lambda2},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"tau", c.tau},
              {"step_size", c.step_size},
              {"steps", c.steps},
              {"batch_len", c.batch_len},
              {"batch_windows", c.batch_windows},
              {"penalty_steps", c.penalty_steps},
              {"holdout", c.holdout},
              {"checkpoint_every", c.checkpoint_every},
              {"clip_norm", c.clip_norm},
              {"markov_on_lagged", c.markov_on_lagged},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"seed", c.seed}};
}

TrainConfig TrainConfigFromJson(const json& j) {
  Require(j.is_object(), ErrorKind::kInvalidConfig, "train config must be an object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "lambda1") c.lambda1 = value.get<double>();
    else if (key == "lambda2") c.lambda2 = value.get<double>();
    else if (key == "alpha") c.alpha = value.get<double>();
    else if (key == "beta") c.beta = value.get<double>();
    else if (key == "tau") c.tau = value.get<double>();
    else if (key == "step_size") c.step_size = value.get<double>();
    else if (key == "steps") c.steps = value.get<int>();
    else if (key == "batch_len") c.batch_len = value.get<int>();
    else if (key == "batch_windows") c.batch_windows = value.get<int>();
    else if (key == "penalty_steps") c.penalty_steps = value.get<int>();
    else if (key == "holdout") c.holdout = value.get<int>();
    else if (key == "checkpoint_every") c.checkpoint_every = value.get<int>();
    else if (key == "clip_norm") c.clip_norm = value.get<double>();
    else if (key == "markov_on_lagged") c.markov_on_lagged = value.get<bool>();
    else if (key == "adam_beta1") c.adam_beta1 = value.get<double>();
    else if (key == "adam_beta2") c.adam_beta2 = value.get<double>();
    else if (key == "adam_eps") c.adam_eps = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else Fail(ErrorKind::kInvalidConfig, "unknown train option '" + key + "'");
  }
  c.Validate();
  return c;
}

Batch MakeBatch(const RowMatrix& x, const std::vector<Index>& starts, Index len) {
  Require(len >= 2, ErrorKind::kInvalidInput, "batch_len must be >= 2");
  Batch b;
  b.windows = static_cast<Index>(starts.size());
  b.len = len;
  b.x.resize(b.windows * len, x.cols());
  for (Index w = 0; w < b.windows; ++w) {
    const Index s = starts[static_cast<std::size_t>(w)];
    Require(s >= 0 && s + len <= x.rows(), ErrorKind::kInvalidInput, "window out of range");
    for (Index tau = 0; tau < len; ++tau) b.x.row(tau * b.windows + w) = x.row(s + tau);
  }
  return b;
}

std::vector<Index> SampleWindowStarts(Index usable_T, Index len, Index count, std::uint64_t seed) {
  Require(usable_T >= len, ErrorKind::kInsufficientSamples, "series shorter than one window");
  Rng rng(seed);
  std::vector<Index> starts(static_cast<std::size_t>(count));
  const auto range = static_cast<std::uint64_t>(usable_T - len + 1);
  for (auto& s : starts) s = static_cast<Index>(rng.Below(range));
  return starts;
}

RowMatrix MarkovTransform(const RowMatrix& J) {
  Require(J.rows() == J.cols(), ErrorKind::kNonSquare, "MarkovTransform needs a square matrix");
  const RowMatrix a = RowMatrix::Identity(J.rows(), J.cols()) + J;
  return a.transpose() * a - RowMatrix::Identity(J.rows(), J.cols());
}

double SparsityPenalty(const RowMatrix& J_r_curr, const RowMatrix& J_r_prev, const RowMatrix& J_g,
                       bool markov_on_lagged) {
  Require(J_r_curr.rows() == J_r_curr.cols() && J_r_prev.rows() == J_r_prev.cols() &&
              J_r_curr.rows() == J_r_prev.rows() && J_g.rows() == J_g.cols(),
          ErrorKind::kShapeMismatch, "SparsityPenalty: need d_z x d_z, d_z x d_z and d_x x d_x inputs");
  const double lagged = markov_on_lagged ? MarkovTransform(J_r_prev).cwiseAbs().sum() : J_r_prev.cwiseAbs().sum();
  return MarkovTransform(J_r_curr).cwiseAbs().sum() + lagged + J_g.cwiseAbs().sum();
}

double DagPenalty(const RowMatrix& A) {
  Require(A.rows() == A.cols(), ErrorKind::kNonSquare, "DagPenalty needs a square matrix");
  const Index d = A.rows();
  Require(d >= 1, ErrorKind::kInvalidInput, "DagPenalty needs d >= 1");
  RowMatrix base = RowMatrix::Identity(d, d) + A.cwiseProduct(A) / static_cast<double>(d);
  RowMatrix result = RowMatrix::Identity(d, d);
  for (Index p = d; p > 0; p >>= 1) {
    if (p & 1) result = result * base;
    if (p > 1) base = base * base;
  }
  return result.trace() - static_cast<double>(d);
}

Var MarkovTransform(Var J) {
  Require(J.rows() == J.cols(), ErrorKind::kNonSquare, "MarkovTransform needs a square matrix");
  ad::Tape* tape = J.tape();
  const Index d = J.rows();
  Var a = ad::Add(tape->Constant(RowMatrix::Identity(d, d)), J);
  return ad::MatMul(ad::Transpose(a), a) - tape->Constant(RowMatrix::Identity(d, d));
}

Var DagPenalty(Var A) {
  Require(A.rows() == A.cols(), ErrorKind::kNonSquare, "DagPenalty needs a square matrix");
  ad::Tape* tape = A.tape();
  const Index d = A.rows();
  Var base = ad::Add(tape->Constant(RowMatrix::Identity(d, d)), ad::Scale(ad::Square(A), 1.0 / static_cast<double>(d)));
  return ad::AddScalar(ad::Trace(ad::MatrixPower(base, static_cast<int>(d))), -static_cast<double>(d));
}

PenaltyJacobians BuildPenaltyJacobians(const model::Bound& p, Var z_prev, Var z_curr, Var s_curr,
                                       const RowMatrix* obs_mask) {
  ad::Tape* tape = z_curr.tape();
  const Index n = z_curr.rows();
  const Index dz = p.params->config().d_z, dx = p.params->config().d_x;
  PenaltyJacobians out;

  const model::FlowJacobianColumns fj = model::FlowZJacobianColumns(p, z_prev, z_curr);
  Var avg = tape->Constant(BlockAverager(dz, n));
  out.J_r_curr = ad::Mul(ad::Transpose(ad::MatMul(avg, ad::Abs(fj.curr))), tape->Constant(OffDiagonalOnes(dz)));
  out.J_r_prev = ad::Transpose(ad::MatMul(avg, ad::Abs(fj.prev)));

  const Var cols = model::DecoderJacobianColumns(p, z_curr, s_curr);
  Var eye = tape->Constant(RowMatrix::Identity(dx, dx));
  Var off = tape->Constant(OffDiagonalOnes(dx));
  Var acc;
  for (Index i = 0; i < n; ++i) {
    std::vector<Index> rows;
    for (Index k = 0; k < dx; ++k) rows.push_back(k * n + i);
    Var J_m = ad::Transpose(ad::GatherRows(cols, rows));
    const double ridge = TrainingRidge(J_m.value());
    Var inv = ad::Inverse(ridge > 0.0 ? ad::Add(J_m, ad::Scale(eye, ridge)) : J_m);
    Var J_g = ad::Mul(ad::Sub(eye, ad::MatMul(ad::Mul(J_m, eye), inv)), off);
    Var a = ad::Abs(J_g);
    acc = acc.valid() ? ad::Add(acc, a) : a;
  }
  out.J_g = ad::Scale(acc, 1.0 / static_cast<double>(n));
  if (obs_mask != nullptr) {
    Require(obs_mask->rows() == dx && obs_mask->cols() == dx, ErrorKind::kShapeMismatch, "obs mask shape");
    out.J_g = ad::Mul(out.J_g, tape->Constant(RowMatrix(obs_mask->transpose())));
  }
  return out;
}

LossReport LossGraph::Report() const {
  LossReport r;
  r.total = total.scalar();
  r.recon = recon.scalar();
  r.kl_s = kl_s.scalar();
  r.kl_z = kl_z.scalar();
  r.sparsity = sparsity.scalar();
  r.dag = dag.scalar();
  return r;
}

LossGraph BuildLoss(ad::Tape& tape, const model::Bound& p, const Batch& batch, const TrainConfig& cfg,
                    std::uint64_t seed, const LossOptions& opts) {
  const model::ModelConfig& mc = p.params->config();
  Require(batch.len >= 2, ErrorKind::kInvalidInput, "batch_len must be >= 2");
  Require(batch.x.cols() == mc.d_x, ErrorKind::kShapeMismatch, "batch width differs from model d_x");
  const Index B = batch.windows, N = batch.x.rows(), lagged = N - B;

  Var x = tape.Constant(batch.x);
  const model::EncoderOut ez = model::EncodeZ(p, x);
  const model::EncoderOut es = model::EncodeS(p, x);
  Rng rng(seed);
  const RowMatrix nz = rng.NormalMatrix(N, mc.d_z);
  const RowMatrix ns = rng.NormalMatrix(N, mc.d_x);
  Var z = ad::Add(ez.mean, ad::Mul(ad::Exp(ad::Scale(ez.logvar, 0.5)), tape.Constant(nz)));
  Var s = ad::Add(es.mean, ad::Mul(ad::Exp(ad::Scale(es.logvar, 0.5)), tape.Constant(ns)));

  LossGraph g;
  Var xhat = model::Decode(p, z, s);
  g.recon = ad::Scale(ad::Sum(ad::Square(ad::Sub(x, xhat))), 0.5 / static_cast<double>(N));

  // Single-sample KL: log q(sample | x) - log p_flow(sample).
  auto log_q = [&tape](Var logvar, const RowMatrix& noise) {
    const RowMatrix c = (-kHalfLog2Pi - 0.5 * noise.array().square()).matrix();
    return ad::RowSums(ad::Add(ad::Scale(logvar, -0.5), tape.Constant(c)));
  };
  Var lq_z = ad::SliceRows(log_q(ez.logvar, nz), B, lagged);
  Var lp_z = model::FlowZLogProb(p, ad::SliceRows(z, 0, lagged), ad::SliceRows(z, B, lagged)).logp;
  g.kl_z = ad::Mean(ad::Sub(lq_z, lp_z));
  Var lq_s = log_q(es.logvar, ns);
  Var lp_s = model::FlowSLogProb(p, z, s).logp;
  g.kl_s = ad::Mean(ad::Sub(lq_s, lp_s));

  Var elbo = ad::Add(g.recon, ad::Add(ad::Scale(g.kl_s, cfg.lambda1), ad::Scale(g.kl_z, cfg.lambda2)));
  if (opts.with_penalties) {
    const Index P = std::min<Index>(cfg.penalty_steps, B);
    const PenaltyJacobians J = BuildPenaltyJacobians(p, ad::SliceRows(ez.mean, 0, P), ad::SliceRows(ez.mean, B, P),
                                                     ad::SliceRows(es.mean, B, P), opts.obs_mask);
    Var lagged_term = cfg.markov_on_lagged ? ad::Sum(ad::Abs(MarkovTransform(J.J_r_prev))) : ad::Sum(J.J_r_prev);
    g.sparsity = ad::Add(ad::Add(ad::Sum(ad::Abs(MarkovTransform(J.J_r_curr))), lagged_term), ad::Sum(J.J_g));
    g.dag = ad::Add(DagPenalty(J.J_g), DagPenalty(J.J_r_curr));
    g.total = ad::Add(elbo, ad::Add(ad::Scale(g.sparsity, cfg.alpha), ad::Scale(g.dag, cfg.beta)));
  } else {
    g.sparsity = tape.Constant(RowMatrix::Zero(1, 1));
    g.dag = tape.Constant(RowMatrix::Zero(1, 1));
    g.total = elbo;
  }
  return g;
}

LossReport Elbo(const Batch& batch, const model::ModelParams& params, const TrainConfig& cfg, std::uint64_t seed) {
  ad::Tape tape;
  const model::Bound p = model::Bind(tape, params, false);
  LossOptions opts;
  opts.with_penalties = false;
  const LossReport r = BuildLoss(tape, p, batch, cfg, seed, opts).Report();
  RequireFinite(r);
  return r;
}

LossReport TotalLoss(const Batch& batch, const model::ModelParams& params, const TrainConfig& cfg,
                     std::uint64_t seed, const LossOptions& opts) {
  ad::Tape tape;
  const model::Bound p = model::Bind(tape, params, false);
  const LossReport r = BuildLoss(tape, p, batch, cfg, seed, opts).Report();
  RequireFinite(r);
  return r;
}

LossReport Gradient(const Batch& batch, const model::ModelParams& params, const TrainConfig& cfg,
                    std::uint64_t seed, Vector* grad, const LossOptions& opts) {
  ad::Tape tape;
  const model::Bound p = model::Bind(tape, params, true);
  const LossGraph g = BuildLoss(tape, p, batch, cfg, seed, opts);
  const LossReport r = g.Report();
  RequireFinite(r);
  tape.Backward(g.total);
  if (grad != nullptr) {
    grad->resize(params.NumScalars());
    Index off = 0;
    for (const Var& v : p.vars) {
      const RowMatrix gv = tape.Grad(v);
      grad->segment(off, gv.size()) = Eigen::Map<const Vector>(gv.data(), gv.size());
      off += gv.size();
    }
    if (!grad->allFinite()) Fail(ErrorKind::kNonFiniteLoss, "non-finite gradient");
  }
  return r;
}

}  // namespace cadre::objective
