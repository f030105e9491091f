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

#include <cstdio>
#include <iostream>
#include <filesystem>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cadre/core/error.h"
#include "cadre/dgp/dgp.h"
#include "cadre/harness/harness.h"
#include "cadre/simd/kernels.h"

namespace {

using namespace cadre;

harness::ExperimentConfig ConfigOrDefault(const std::string& path, std::optional<std::uint64_t> seed) {
  harness::ExperimentConfig c = path.empty() ? harness::ExperimentConfig{} : harness::LoadExperimentConfig(path);
  if (seed) {
    c.seeds = {*seed};
    c.dgp.seed = *seed;
    c.train.seed = *seed;
    c.model.seed = *seed;
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cadre: causal discovery with latent and dependent-noise processes"};
  app.require_subcommand(1);

  std::string config, out = ".", data, checkpoint, graphs_path, mask, wind, csv, coords, run_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
  bool overwrite = false;

  auto common = [&](CLI::App* sub, bool with_config) {
    if (with_config) sub->add_option("--config", config, "experiment config (JSON)");
    sub->add_option("--out", out, "output directory");
    sub->add_flag("--overwrite", overwrite, "replace existing outputs");
  };

  CLI::App* gen = app.add_subcommand("generate", "simulate a dataset");
  common(gen, true);
  gen->add_option("--seed", seed, "dgp seed");

  CLI::App* train = app.add_subcommand("train", "train a model on a dataset");
  common(train, true);
  train->add_option("--data", data, "dataset archive")->required();
  train->add_option("--seed", seed, "training seed");
  train->add_option("--mask", mask, "optional spatial mask archive");

  CLI::App* extract = app.add_subcommand("extract", "extract causal graphs from a checkpoint");
  common(extract, true);
  extract->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  extract->add_option("--data", data, "dataset archive")->required();
  extract->add_option("--tau", tau, "edge threshold");
  extract->add_option("--mask", mask, "optional spatial mask archive");

  CLI::App* evaluate = app.add_subcommand("evaluate", "score graphs and latents against references");
  common(evaluate, true);
  evaluate->add_option("--graphs", graphs_path, "graphs archive from extract")->required();
  evaluate->add_option("--data", data, "dataset archive")->required();
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint for representation metrics");
  evaluate->add_option("--wind", wind, "wind CSV (x,y,u,v)");

  CLI::App* experiment = app.add_subcommand("experiment", "run generate/train/extract/evaluate over seeds");
  common(experiment, true);
  experiment->add_option("--seed", seed, "run a single seed");
  experiment->add_option("--tau", tau, "edge threshold");

  CLI::App* ingest = app.add_subcommand("ingest", "convert a CSV into a dataset archive");
  common(ingest, false);
  ingest->add_option("--csv", csv, "numeric CSV with a header row")->required();
  ingest->add_option("--coords", coords, "optional coordinates CSV (x,y)");

  CLI::App* plot = app.add_subcommand("plot", "render SVG figures for a run directory");
  common(plot, false);
  plot->add_option("--run", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const harness::ExperimentConfig c = ConfigOrDefault(config, seed);
      const harness::GenerateResult r = harness::CmdGenerate(c.dgp, out, overwrite);
      std::printf("wrote %s\n", r.dataset_path.c_str());
    } else if (train->parsed()) {
      const harness::ExperimentConfig c = ConfigOrDefault(config, seed);
      const harness::TrainRunResult r = harness::CmdTrain(c, data, out, overwrite, mask);
      std::printf("trained %d steps (simd: %s), final loss %.6g, checkpoint %s\n", r.steps_done,
                  std::string(simd::IsaName(simd::Kernels().isa)).c_str(), r.final_loss.total,
                  r.checkpoint_path.c_str());
    } else if (extract->parsed()) {
      const harness::ExperimentConfig c = ConfigOrDefault(config, std::nullopt);
      const harness::ExtractResult r =
          harness::CmdExtract(checkpoint, data, out, tau.value_or(c.train.tau), overwrite, mask);
      std::printf("wrote %s (%g observation edges)\n", r.graphs_path.c_str(), r.graphs.obs_graph.sum());
    } else if (evaluate->parsed()) {
      harness::ExperimentConfig c = ConfigOrDefault(config, std::nullopt);
      if (!wind.empty()) c.eval.wind_path = wind;
      const harness::EvaluateResult r = harness::CmdEvaluate(graphs_path, data, checkpoint, c.eval, out, overwrite);
      for (const std::string& n : r.report.notices) std::fprintf(stderr, "notice: %s\n", n.c_str());
      std::printf("wrote %s\n", r.json_path.c_str());
    } else if (experiment->parsed()) {
      harness::ExperimentConfig c = ConfigOrDefault(config, seed);
      if (tau) c.train.tau = *tau;
      const harness::RunRecord r = harness::CmdExperiment(c, out, overwrite);
      int failed = 0;
      for (const auto& s : r.seeds) {
        if (!s.ok) {
          ++failed;
          std::fprintf(stderr, "seed %llu (%s) failed: %s\n", static_cast<unsigned long long>(s.seed),
                       s.variant.c_str(), s.error.c_str());
        }
      }
      std::printf("wrote %s and %s (%d failed seeds)\n", r.record_path.c_str(), r.table_md_path.c_str(), failed);
    } else if (ingest->parsed()) {
      const dgp::Dataset d = harness::IngestCsv(csv, coords);
      std::filesystem::create_directories(out);
      const std::string path = (std::filesystem::path(out) / "dataset.cadre").string();
      if (std::filesystem::exists(path)) Require(overwrite, ErrorKind::kInvalidInput, path + " exists; pass --overwrite");
      dgp::SaveDataset(d, path);
      std::printf("wrote %s (T=%lld, d_x=%lld)\n", path.c_str(), static_cast<long long>(d.T()),
                  static_cast<long long>(d.d_x()));
    } else if (plot->parsed()) {
      for (const std::string& f : harness::CmdPlot(run_dir, out)) std::printf("wrote %s\n", f.c_str());
    }
  } catch (const cadre::Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(ErrorKindName(e.kind())).c_str(), e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
