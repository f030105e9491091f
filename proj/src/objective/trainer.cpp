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

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cadre/core/archive.h"
#include "cadre/core/error.h"
#include "cadre/core/rng.h"
#include "cadre/objective/objective.h"

namespace cadre::objective {

using nlohmann::json;

namespace {

struct AdamState {
  Vector m, v;
  int step = 0;
};

void SaveCheckpoint(const std::string& path, const model::ModelParams& params, const AdamState& adam,
                    const TrainConfig& cfg) {
  Archive ar;
  ar.metadata = json{{"kind", "checkpoint"},
                     {"config", model::ConfigToJson(params.config())},
                     {"extra", {{"step", adam.step}, {"train", TrainConfigToJson(cfg)}}}}
                    .dump();
  for (std::size_t i = 0; i < params.num_tensors(); ++i)
    ar.Put(params.name(static_cast<int>(i)), params.tensor(static_cast<int>(i)));
  ar.Put("optimizer.adam_m", RowMatrix(Eigen::Map<const RowMatrix>(adam.m.data(), adam.m.size(), 1)));
  ar.Put("optimizer.adam_v", RowMatrix(Eigen::Map<const RowMatrix>(adam.v.data(), adam.v.size(), 1)));
  // Write-then-rename so an interrupted save never clobbers the last good checkpoint.
  const std::string tmp = path + ".tmp";
  ar.Save(tmp);
  std::filesystem::rename(tmp, path);
}

void WriteLogRow(std::ofstream& out, const TrainHistoryRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.3f\n", row.step, row.loss.total,
                row.loss.recon, row.loss.kl_s, row.loss.kl_z, row.loss.sparsity, row.loss.dag, row.wall_ms);
  out << buf;
}

// Drops log rows past `keep_steps` so a resumed run appends without duplicates.
void TruncateLog(const std::string& path, int keep_steps) {
  std::ifstream in(path);
  if (!in) return;
  std::string line, kept;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      kept += line + "\n";
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoi(line.substr(0, line.find(','))) <= keep_steps) kept += line + "\n";
  }
  in.close();
  WriteFileBytes(path, kept);
}

TrainResult RunLoop(const RowMatrix& x, model::ModelParams params, AdamState adam, const TrainConfig& cfg,
                    const TrainOptions& opts) {
  cfg.Validate();
  Require(x.cols() == params.config().d_x, ErrorKind::kShapeMismatch, "dataset width differs from model d_x");
  Require(x.allFinite(), ErrorKind::kInvalidInput, "dataset contains non-finite values");
  const Index span = TrainingSpan(x.rows(), cfg);
  Require(span >= cfg.batch_len, ErrorKind::kInsufficientSamples, "series too short for the training window");

  std::ofstream log;
  if (!opts.log_path.empty()) {
    const bool fresh = adam.step == 0 || !std::filesystem::exists(opts.log_path);
    if (fresh) {
      log.open(opts.log_path, std::ios::trunc);
      log << "step,total,recon,kl_s,kl_z,sparsity,dag,wall_ms\n";
    } else {
      TruncateLog(opts.log_path, adam.step);
      log.open(opts.log_path, std::ios::app);
    }
    Require(static_cast<bool>(log), ErrorKind::kIo, "cannot open log " + opts.log_path);
  }

  LossOptions lopts;
  if (opts.obs_mask) lopts.obs_mask = &*opts.obs_mask;
  TrainResult result{params, {}, adam.step};
  Vector grad;
  const int last = opts.stop_after >= 0 ? std::min(cfg.steps, opts.stop_after) : cfg.steps;
  while (adam.step < last) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t step_seed = DeriveSeed(cfg.seed, static_cast<std::uint64_t>(adam.step));
    const Batch batch =
        MakeBatch(x, SampleWindowStarts(span, cfg.batch_len, cfg.batch_windows, DeriveSeed(step_seed, 1)), cfg.batch_len);
    const LossReport loss = Gradient(batch, result.params, cfg, DeriveSeed(step_seed, 2), &grad, lopts);
    if (cfg.clip_norm > 0.0) {
      const double norm = grad.norm();
      if (norm > cfg.clip_norm) grad *= cfg.clip_norm / norm;
    }
    ++adam.step;
    adam.m = cfg.adam_beta1 * adam.m + (1.0 - cfg.adam_beta1) * grad;
    adam.v = cfg.adam_beta2 * adam.v + (1.0 - cfg.adam_beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, adam.step);
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, adam.step);
    Vector flat = result.params.Flatten();
    flat.array() -= cfg.step_size * (adam.m.array() / c1) / ((adam.v.array() / c2).sqrt() + cfg.adam_eps);
    result.params.Unflatten(flat);

    TrainHistoryRow row;
    row.step = adam.step;
    row.loss = loss;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(row);
    if (log.is_open()) {
      WriteLogRow(log, row);
      if (adam.step % 100 == 0) log.flush();
    }
    const bool boundary = adam.step % cfg.checkpoint_every == 0 || adam.step == cfg.steps;
    if (boundary && !opts.checkpoint_path.empty()) SaveCheckpoint(opts.checkpoint_path, result.params, adam, cfg);
  }
  result.steps_done = adam.step;
  return result;
}

}  // namespace

Index TrainingSpan(Index T, const TrainConfig& cfg) {
  const Index reserve = std::min<Index>(cfg.holdout, T / 4);
  return T - reserve;
}

TrainResult Train(const RowMatrix& x, model::ModelParams params, const TrainConfig& cfg, const TrainOptions& opts) {
  AdamState adam;
  adam.m = Vector::Zero(params.NumScalars());
  adam.v = Vector::Zero(params.NumScalars());
  return RunLoop(x, std::move(params), std::move(adam), cfg, opts);
}

TrainResult Resume(const RowMatrix& x, const std::string& checkpoint_path, const TrainConfig& cfg,
                   const TrainOptions& opts) {
  json extra;
  model::ModelParams params = model::ModelParams::Load(checkpoint_path, &extra);
  const Archive ar = Archive::Load(checkpoint_path);
  const RowMatrix* m = ar.Find("optimizer.adam_m");
  const RowMatrix* v = ar.Find("optimizer.adam_v");
  Require(m != nullptr && v != nullptr && m->size() == params.NumScalars() && v->size() == params.NumScalars(),
          ErrorKind::kIo, checkpoint_path + ": no optimizer state to resume from");
  AdamState adam;
  adam.m = Eigen::Map<const Vector>(m->data(), m->size());
  adam.v = Eigen::Map<const Vector>(v->data(), v->size());
  adam.step = extra.value("step", 0);
  return RunLoop(x, std::move(params), std::move(adam), cfg, opts);
}

}  // namespace cadre::objective
