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
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cadre/core/archive.h"
#include "cadre/core/error.h"
#include "cadre/harness/harness.h"
#include "doctest.h"
#include "test_util.h"

using namespace cadre;
using namespace cadre::harness;
namespace fs = std::filesystem;

namespace {

std::string ReadText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

int Count(const std::string& text, const std::string& needle) {
  int n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

ErrorKind KindOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kInvalidInput;
}

ExperimentConfig Small(int steps) {
  ExperimentConfig c;
  c.dgp.d_x = 3;
  c.dgp.d_z = 2;
  c.dgp.T = 500;
  c.model.d_x = 3;
  c.model.d_z = 2;
  c.train.steps = steps;
  c.train.batch_windows = 16;
  return c;
}

}  // namespace

TEST_CASE("experiment config round trip and validation") {
  ExperimentConfig c = Small(50);
  c.seeds = {3, 4};
  c.variants = {{"sparse", {{"setting", "sparse"}}}, {"dense", {{"setting", "dense"}}}};
  c.eval.smcc_subset = 2;
  const ExperimentConfig back = ExperimentConfigFromJson(ExperimentConfigToJson(c));
  CHECK(back == c);
  CHECK(ConfigHash(back) == ConfigHash(c));
  ExperimentConfig other = c;
  other.train.steps = 51;
  CHECK(ConfigHash(other) != ConfigHash(c));
  CHECK(VariantOptions(c, c.variants[1], 9).setting == dgp::SparsitySetting::kDense);
  CHECK(VariantOptions(c, c.variants[1], 9).seed == 9u);

  const std::string dir = testing::ScratchDir("config");
  SaveExperimentConfig(c, dir + "/c.json");
  CHECK(LoadExperimentConfig(dir + "/c.json") == c);
  CHECK(KindOf([] { ExperimentConfigFromJson({{"bogus", 1}}); }) == ErrorKind::kInvalidConfig);
  CHECK(KindOf([] { ExperimentConfigFromJson({{"train", {{"steps", "many"}}}}); }) == ErrorKind::kInvalidConfig);
  CHECK_THROWS_AS(LoadExperimentConfig(dir + "/missing.json"), Error);
  const ExperimentConfig defaults = ExperimentConfigFromJson(nlohmann::json::object());
  CHECK(defaults.model.d_x == defaults.dgp.d_x);
}

TEST_CASE("generate is deterministic and refuses to overwrite") {
  const std::string a = testing::ScratchDir("gen_a"), b = testing::ScratchDir("gen_b");
  dgp::DgpOptions o;
  o.T = 300;
  const GenerateResult ra = CmdGenerate(o, a, false), rb = CmdGenerate(o, b, false);
  CHECK(ReadText(ra.dataset_path) == ReadText(rb.dataset_path));
  CHECK(ReadText(ra.csv_path) == ReadText(rb.csv_path));
  CHECK(fs::exists(ra.spec_path));
  try {
    CmdGenerate(o, a, false);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.exit_code() == 2);
  }
  CHECK_NOTHROW(CmdGenerate(o, a, true));
}

TEST_CASE("dense latent setting has more edges than sparse") {
  int sparse = 0, dense = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    dgp::DgpOptions o;
    o.d_z = 5;
    o.T = 50;
    o.seed = seed;
    o.setting = dgp::SparsitySetting::kSparse;
    sparse += static_cast<int>(Support(dgp::MakeSpec(o).B_z).sum());
    o.setting = dgp::SparsitySetting::kDense;
    dense += static_cast<int>(Support(dgp::MakeSpec(o).B_z).sum());
  }
  CHECK(dense > sparse);
}

TEST_CASE("csv ingest") {
  const std::string dir = testing::ScratchDir("ingest");
  std::string text = "a,b,c,d\n";
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < 4; ++c) text += (c ? "," : "") + std::to_string(r * (c + 1) + c * c);
    text += "\n";
  }
  WriteText(dir + "/ok.csv", text);
  const dgp::Dataset d = IngestCsv(dir + "/ok.csv");
  CHECK(d.T() == 10);
  CHECK(d.d_x() == 4);
  CHECK(d.names == std::vector<std::string>{"a", "b", "c", "d"});
  CHECK(d.x.colwise().mean().cwiseAbs().maxCoeff() < 1e-9);
  CHECK_FALSE(d.true_obs.has_value());
  CHECK_FALSE(d.coords.has_value());

  WriteText(dir + "/head.csv", "a,b\n");
  CHECK(KindOf([&] { IngestCsv(dir + "/head.csv"); }) == ErrorKind::kEmptyData);
  WriteText(dir + "/ragged.csv", "a,b\n1,2\n3\n");
  try {
    IngestCsv(dir + "/ragged.csv");
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kRaggedRows);
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
  WriteText(dir + "/text.csv", "a,b\n1,2\n3,x\n");
  try {
    IngestCsv(dir + "/text.csv");
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNonNumericCell);
    CHECK(std::string(e.what()).find("column 2") != std::string::npos);
  }
  WriteText(dir + "/coords.csv", "x,y\n0,0\n1,0\n2,0\n3,0\n");
  const dgp::Dataset withc = IngestCsv(dir + "/ok.csv", dir + "/coords.csv");
  REQUIRE(withc.coords.has_value());
  CHECK(withc.coords->rows() == 4);
  WriteText(dir + "/short.csv", "x,y\n0,0\n");
  CHECK_THROWS_AS(IngestCsv(dir + "/ok.csv", dir + "/short.csv"), Error);
}

TEST_CASE("evaluate ground truth against itself") {
  dgp::DgpOptions o;
  o.T = 400;
  const dgp::Dataset data = dgp::MakeDataset(dgp::MakeSpec(o));
  graphs::GraphEstimate est;
  est.obs_graph = *data.true_obs;
  est.latent_inst = *data.true_latent_inst;
  est.latent_lag = *data.true_latent_lag;
  EvalOptions e;
  e.representation = false;
  const metrics::MetricsReport r = Evaluate(est, data, nullptr, e);
  CHECK(*r.shd_norm == 0.0);
  CHECK(*r.tpr == 1.0);
  CHECK(*r.shd_latent_inst == 0.0);
  CHECK_FALSE(r.wshd.has_value());
  CHECK_FALSE(r.mcc_z.has_value());
  CHECK_NOTHROW(metrics::ValidateReportJson(metrics::ReportToJson(r)));

  e.wind_path = "/nonexistent/winds.csv";
  const metrics::MetricsReport w = Evaluate(est, data, nullptr, e);
  CHECK_FALSE(w.wshd.has_value());
  CHECK_FALSE(w.notices.empty());
}

TEST_CASE("plots") {
  const std::string dir = testing::ScratchDir("plots");
  RowMatrix adj = RowMatrix::Zero(4, 4);
  adj(0, 1) = adj(2, 3) = adj(3, 0) = 1.0;
  adj(1, 1) = 1.0;
  RowMatrix coords(4, 2);
  coords << 0, 0, 1, 0, 1, 1, 0, 1;
  PlotArrowOverlay(adj, coords, dir + "/a.svg");
  CHECK(Count(ReadText(dir + "/a.svg"), "class=\"arrow\"") == 3);
  PlotArrowOverlay(RowMatrix::Zero(4, 4), coords, dir + "/empty.svg");
  CHECK(fs::exists(dir + "/empty.svg"));
  CHECK(Count(ReadText(dir + "/empty.svg"), "class=\"arrow\"") == 0);
  PlotArrowOverlay(adj, coords, dir + "/b.svg");
  CHECK(ReadText(dir + "/a.svg") == ReadText(dir + "/b.svg"));
  PlotHeatmap(testing::RandomMatrix(3, 3, 1), {"a", "b", "c"}, "J", dir + "/h.svg");
  CHECK(ReadText(dir + "/h.svg").find("<svg") != std::string::npos);
}

TEST_CASE("pipeline smoke run") {
  const std::string dir = testing::ScratchDir("smoke");
  const ExperimentConfig cfg = Small(200);
  const auto t0 = std::chrono::steady_clock::now();
  const GenerateResult g = CmdGenerate(cfg.dgp, dir, false);
  const TrainRunResult t = CmdTrain(cfg, g.dataset_path, dir, false);
  const ExtractResult e = CmdExtract(t.checkpoint_path, g.dataset_path, dir, 0.15, false);
  const EvaluateResult v = CmdEvaluate(e.graphs_path, g.dataset_path, t.checkpoint_path, cfg.eval, dir, false);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 60.0);
  CHECK(t.steps_done == 200);
  CHECK(ReadTrainLog(t.log_path).size() == 200u);
  CHECK(std::isfinite(t.converged_loss));
  CHECK(v.report.mcc_z.has_value());
  CHECK(v.report.r2.has_value());
  CHECK_NOTHROW(metrics::ValidateReportJson(nlohmann::json::parse(ReadText(v.json_path))));
  CHECK(ReadText(v.csv_path).find("shd_norm") != std::string::npos);
  CHECK(e.graphs.obs_graph.rows() == 3);
  for (const std::string& p : e.edge_lists) CHECK(fs::exists(p));

  const ExtractResult none = CmdExtract(t.checkpoint_path, g.dataset_path, dir + "/inf", 1e300, false);
  CHECK(none.graphs.obs_graph.isZero());
  CHECK(none.graphs.latent_inst.isZero());
  CHECK(none.graphs.latent_lag.isZero());
  const ExtractResult all = CmdExtract(t.checkpoint_path, g.dataset_path, dir + "/small", 1e-9, false);
  CHECK((all.graphs.obs_graph.array() >= e.graphs.obs_graph.array()).all());
  CHECK((all.graphs.latent_lag.array() >= e.graphs.latent_lag.array()).all());

  CHECK(KindOf([&] { CmdTrain(cfg, g.dataset_path, dir, false); }) == ErrorKind::kInvalidInput);
  const std::vector<std::string> plots = CmdPlot(dir, dir + "/plots");
  CHECK(plots.size() >= 4u);
}

TEST_CASE("aggregation of identical seeds has zero spread") {
  RunRecord r;
  for (std::uint64_t seed : {1, 2, 3}) {
    SeedRecord s;
    s.variant = "v";
    s.seed = seed;
    s.ok = seed != 3;
    s.converged_loss = static_cast<double>(seed);
    if (s.ok) s.metrics = {{"schema", "cadre.metrics.v1"}, {"mcc_z", 0.75}, {"tpr", seed == 1 ? 0.5 : 1.0}};
    r.seeds.push_back(s);
  }
  const auto rows = Aggregate(r, {"v"});
  bool saw_mcc = false, saw_tpr = false;
  for (const auto& [metric, cells] : rows) {
    REQUIRE(cells.size() == 1u);
    if (metric == "mcc_z") {
      saw_mcc = true;
      CHECK(cells[0].mean == 0.75);
      CHECK(cells[0].std == 0.0);
      CHECK(cells[0].n == 2);
    }
    if (metric == "tpr") {
      saw_tpr = true;
      CHECK(cells[0].mean == doctest::Approx(0.75));
      CHECK(cells[0].std == doctest::Approx(std::sqrt(0.125)));
      REQUIRE(cells[0].best.has_value());
      CHECK(*cells[0].best == 0.5);  // seed 1 has the lowest converged loss
    }
  }
  CHECK(saw_mcc);
  CHECK(saw_tpr);
}

TEST_CASE("experiment runs, tabulates and is reproducible") {
  ExperimentConfig cfg = Small(30);
  cfg.seeds = {5, 6};
  cfg.variants = {{"independent", nlohmann::json::object()}, {"sparse", {{"setting", "sparse"}}}};
  const std::string a = testing::ScratchDir("exp_a"), b = testing::ScratchDir("exp_b");
  const RunRecord ra = CmdExperiment(cfg, a, false);
  REQUIRE(ra.seeds.size() == 4u);
  for (const SeedRecord& s : ra.seeds) CHECK(s.ok);
  const auto rows = Aggregate(ra, {"independent", "sparse"});
  REQUIRE_FALSE(rows.empty());
  for (const auto& [metric, cells] : rows) {
    REQUIRE(cells.size() == 2u);
    for (const AggregateCell& c : cells) {
      CHECK(c.n == 2);
      CHECK(c.std >= 0.0);
      CHECK(c.best.has_value());
    }
  }
  const std::string md = ReadText(ra.table_md_path);
  CHECK(md.find("| metric | independent | sparse |") != std::string::npos);
  CHECK(md.find(" (n=2) |") != std::string::npos);
  CHECK(ReadText(ra.table_csv_path).rfind("metric,independent_mean,independent_std,independent_n,independent_best", 0) ==
        0);
  CHECK(KindOf([&] { CmdExperiment(cfg, a, false); }) == ErrorKind::kInvalidInput);

  const RunRecord rb = CmdExperiment(cfg, b, false);
  CHECK(ReadText(ra.table_csv_path) == ReadText(rb.table_csv_path));
  CHECK(ra.config_hash == rb.config_hash);
  CHECK(LoadExperimentConfig(a + "/config.json") == cfg);

  ExperimentConfig dup = cfg;
  dup.seeds = {5, 5};
  CHECK(KindOf([&] { CmdExperiment(dup, testing::ScratchDir("exp_dup"), false); }) == ErrorKind::kInvalidConfig);
}
