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

#include "cadre/dgp/dgp.h"
#include "cadre/graphs/graphs.h"
#include "cadre/metrics/metrics.h"
#include "cadre/model/model.h"
#include "cadre/objective/objective.h"
#include "json.hpp"

namespace cadre::harness {

// Configuration.

struct EvalOptions {
  bool structure = true;       // SHD / TPR / precision on the three graphs
  bool representation = true;  // MCC and R^2 (needs a checkpoint)
  std::string wind_path;       // CSV with columns x,y,u,v per observed variable; empty skips WSHD/WTPR
  double wind_step_scale = 0.0;  // <= 0: median nearest-neighbor spacing
  std::string smcc_target_path;  // single-column CSV; empty skips SMCC
  int smcc_subset = 1;
  std::uint64_t r2_split_seed = 0;

  bool operator==(const EvalOptions&) const = default;
};

/// One column of an experiment table: overrides merged into the base dgp options.
struct Variant {
  std::string name;
  nlohmann::json dgp_overrides = nlohmann::json::object();

  bool operator==(const Variant&) const = default;
};

struct ExperimentConfig {
  dgp::DgpOptions dgp;
  objective::TrainConfig train;
  model::ModelConfig model;
  EvalOptions eval;
  std::string out_dir = "runs";
  std::vector<std::uint64_t> seeds = {0};
  std::vector<Variant> variants;  // empty: a single column named "default"

  bool operator==(const ExperimentConfig&) const = default;
};

nlohmann::json ExperimentConfigToJson(const ExperimentConfig& c);
/// Missing sections take defaults; unknown keys raise InvalidConfig.
ExperimentConfig ExperimentConfigFromJson(const nlohmann::json& j);
ExperimentConfig LoadExperimentConfig(const std::string& path);
void SaveExperimentConfig(const ExperimentConfig& c, const std::string& path);
std::string ConfigHash(const ExperimentConfig& c);

/// The dgp options of one variant and seed (seed replaces options.seed).
dgp::DgpOptions VariantOptions(const ExperimentConfig& c, const Variant& v, std::uint64_t seed);

// CSV.

struct CsvTable {
  std::vector<std::string> header;
  RowMatrix values;
};

/// Rectangular numeric CSV with a header row. Errors carry 1-based row/column.
CsvTable ReadNumericCsv(const std::string& path);
void WriteMatrixCsv(const RowMatrix& m, const std::vector<std::string>& header, const std::string& path);

/// Real-data entry point: z-scored columns, no ground truth. `coords_path` is a
/// d_x x 2 CSV (header x,y) or empty.
dgp::Dataset IngestCsv(const std::string& path, const std::string& coords_path = "");

// Pipeline commands. Each writes into `out_dir` and refuses to replace
// existing outputs unless `overwrite` is set.

struct GenerateResult {
  std::string dataset_path;
  std::string spec_path;
  std::string csv_path;
};
GenerateResult CmdGenerate(const dgp::DgpOptions& options, const std::string& out_dir, bool overwrite);

struct TrainRunResult {
  std::string checkpoint_path;
  std::string log_path;
  int steps_done = 0;
  objective::LossReport final_loss;
  double converged_loss = 0.0;  // mean total over the last 10% of steps
  double wall_s = 0.0;
};
TrainRunResult CmdTrain(const ExperimentConfig& cfg, const std::string& dataset_path, const std::string& out_dir,
                        bool overwrite, const std::string& mask_path = "");

struct ExtractResult {
  std::string graphs_path;  // archive with adjacencies and Jacobian summaries
  std::vector<std::string> edge_lists;
  std::string summary_path;
  graphs::GraphEstimate graphs;
};
ExtractResult CmdExtract(const std::string& checkpoint_path, const std::string& dataset_path,
                         const std::string& out_dir, double tau, bool overwrite, const std::string& mask_path = "");

struct EvaluateResult {
  std::string json_path;
  std::string csv_path;
  metrics::MetricsReport report;
};
/// `checkpoint_path` may be empty, in which case representation metrics are skipped.
EvaluateResult CmdEvaluate(const std::string& graphs_path, const std::string& dataset_path,
                           const std::string& checkpoint_path, const EvalOptions& eval, const std::string& out_dir,
                           bool overwrite);

/// Evaluates in memory; used by CmdEvaluate and the experiment runner.
metrics::MetricsReport Evaluate(const graphs::GraphEstimate& est, const dgp::Dataset& data,
                                const model::ModelParams* params, const EvalOptions& eval);

struct SeedRecord {
  std::string variant;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  nlohmann::json metrics;  // ReportToJson output when ok
  std::string dataset_path, checkpoint_path, log_path, graphs_path, metrics_path;
  double converged_loss = 0.0;
  double wall_s = 0.0;
};

struct RunRecord {
  std::string config_hash;
  std::vector<SeedRecord> seeds;
  std::string record_path;
  std::string table_csv_path;
  std::string table_md_path;
  double wall_s = 0.0;
};

nlohmann::json RunRecordToJson(const RunRecord& r);

struct AggregateCell {
  double mean = 0.0;
  double std = 0.0;
  int n = 0;
  std::optional<double> best;  // value at the best-converged seed
};

/// metric -> per-variant cell, over successful seeds only.
std::vector<std::pair<std::string, std::vector<AggregateCell>>> Aggregate(const RunRecord& record,
                                                                          const std::vector<std::string>& variants);

/// generate -> train -> extract -> evaluate per (variant, seed), then aggregate.
/// Runs up to CADRE_THREADS tasks concurrently.
RunRecord CmdExperiment(const ExperimentConfig& cfg, const std::string& out_dir, bool overwrite);

// Figures (SVG).

void PlotHeatmap(const RowMatrix& m, const std::vector<std::string>& names, const std::string& title,
                 const std::string& path);
void PlotLossCurve(const std::vector<objective::TrainHistoryRow>& history, const std::string& path);
/// One arrow element per edge of `adjacency` (src x dst) drawn between coords.
void PlotArrowOverlay(const RowMatrix& adjacency, const RowMatrix& coords, const std::string& path);

/// Reads graphs, optional log and optional dataset coords from a run directory.
std::vector<std::string> CmdPlot(const std::string& run_dir, const std::string& out_dir);

std::vector<objective::TrainHistoryRow> ReadTrainLog(const std::string& path);

/// Worker cap from CADRE_THREADS (default 1).
int WorkerCount();

}  // namespace cadre::harness
