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

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "cadre/core/archive.h"
#include "cadre/core/error.h"
#include "cadre/harness/harness.h"

namespace cadre::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void PrepareOutput(const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  Require(!ec, ErrorKind::kIo, "cannot create " + out_dir + ": " + ec.message());
}

void GuardOverwrite(const std::vector<std::string>& paths, bool overwrite) {
  for (const std::string& p : paths) {
    if (!fs::exists(p)) continue;
    Require(overwrite, ErrorKind::kInvalidInput, p + " exists; pass --overwrite to replace it");
    fs::remove(p);
  }
}

std::string Join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

double Seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::optional<RowMatrix> LoadMask(const std::string& path) {
  if (path.empty()) return std::nullopt;
  const Archive ar = Archive::Load(path);
  if (const RowMatrix* m = ar.Find("mask")) return *m;
  Require(!ar.arrays().empty(), ErrorKind::kInvalidInput, path + ": mask archive is empty");
  return ar.arrays().front().second;
}

std::vector<std::string> DefaultNames(const dgp::Dataset& d) {
  if (static_cast<Index>(d.names.size()) == d.d_x()) return d.names;
  std::vector<std::string> names;
  for (Index i = 0; i < d.d_x(); ++i) names.push_back("x" + std::to_string(i));
  return names;
}

std::vector<std::string> LatentNames(Index d_z) {
  std::vector<std::string> names;
  for (Index i = 0; i < d_z; ++i) names.push_back("z" + std::to_string(i));
  return names;
}

RowMatrix Permute(const RowMatrix& a, const std::vector<int>& perm) {
  RowMatrix out(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) out(i, j) = a(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  return out;
}

void SaveGraphs(const graphs::Extraction& ex, const std::vector<std::string>& names, const std::string& path) {
  Archive ar;
  ar.Put("obs_graph", ex.graphs.obs_graph);
  ar.Put("latent_inst", ex.graphs.latent_inst);
  ar.Put("latent_lag", ex.graphs.latent_lag);
  ar.Put("J_m", ex.bundle.J_m);
  ar.Put("D_m", ex.bundle.D_m);
  ar.Put("J_g", ex.bundle.J_g);
  ar.Put("J_r_curr", ex.bundle.J_r_curr);
  ar.Put("J_r_prev", ex.bundle.J_r_prev);
  if (ex.graphs.mask) ar.Put("mask", *ex.graphs.mask);
  ar.metadata = json{{"kind", "graphs"},
                     {"tau", ex.graphs.tau},
                     {"names", names},
                     {"warnings", ex.graphs.warnings},
                     {"eval_points", ex.bundle.eval_points},
                     {"max_ridge", ex.bundle.max_ridge},
                     {"evaluation", "mean |J| over posterior means of the final eval_points steps"}}
                    .dump();
  ar.Save(path);
}

graphs::GraphEstimate LoadGraphs(const std::string& path) {
  const Archive ar = Archive::Load(path);
  graphs::GraphEstimate g;
  g.obs_graph = ar.Get("obs_graph");
  g.latent_inst = ar.Get("latent_inst");
  g.latent_lag = ar.Get("latent_lag");
  if (const RowMatrix* m = ar.Find("mask")) g.mask = *m;
  if (!ar.metadata.empty()) {
    const json meta = json::parse(ar.metadata);
    g.tau = meta.value("tau", g.tau);
    g.warnings = meta.value("warnings", std::vector<std::string>{});
  }
  return g;
}

const std::vector<std::string>& CsvColumns() {
  static const std::vector<std::string> cols = {"shd_norm", "shd_raw", "tpr", "precision", "f1", "shd_latent_inst",
                                                "shd_latent_lag", "mcc_s", "mcc_z", "r2", "wshd", "wshd_raw", "wtpr",
                                                "smcc"};
  return cols;
}

void WriteReportCsv(const json& report, const std::string& path) {
  std::string out;
  for (std::size_t i = 0; i < CsvColumns().size(); ++i) out += (i ? "," : "") + CsvColumns()[i];
  out += "\n";
  for (std::size_t i = 0; i < CsvColumns().size(); ++i) {
    if (i) out += ",";
    if (report.contains(CsvColumns()[i])) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.10g", report[CsvColumns()[i]].get<double>());
      out += buf;
    }
  }
  out += "\n";
  WriteFileBytes(path, out);
}

}  // namespace

GenerateResult CmdGenerate(const dgp::DgpOptions& options, const std::string& out_dir, bool overwrite) {
  PrepareOutput(out_dir);
  GenerateResult r{Join(out_dir, "dataset.cadre"), Join(out_dir, "dataset.cadre.spec.json"), Join(out_dir, "x.csv")};
  GuardOverwrite({r.dataset_path, r.spec_path, r.csv_path}, overwrite);
  const dgp::Dataset data = dgp::MakeDataset(dgp::MakeSpec(options));
  dgp::SaveDataset(data, r.dataset_path);
  dgp::WriteCsv(data, r.csv_path);
  return r;
}

TrainRunResult CmdTrain(const ExperimentConfig& cfg, const std::string& dataset_path, const std::string& out_dir,
                        bool overwrite, const std::string& mask_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const dgp::Dataset data = dgp::LoadDataset(dataset_path);
  model::ModelConfig mc = cfg.model;
  Require(data.d_x() == mc.d_x, ErrorKind::kShapeMismatch,
          "dataset has d_x=" + std::to_string(data.d_x()) + " but the model expects " + std::to_string(mc.d_x));
  PrepareOutput(out_dir);
  TrainRunResult r;
  r.checkpoint_path = Join(out_dir, "model.ckpt");
  r.log_path = Join(out_dir, "train_log.csv");
  GuardOverwrite({r.checkpoint_path, r.log_path}, overwrite);

  objective::TrainOptions opts;
  opts.log_path = r.log_path;
  opts.checkpoint_path = r.checkpoint_path;
  opts.obs_mask = LoadMask(mask_path);
  const objective::TrainResult res = objective::Train(data.x, model::ModelParams::Init(mc, mc.seed), cfg.train, opts);
  r.steps_done = res.steps_done;
  if (!res.history.empty()) {
    r.final_loss = res.history.back().loss;
    const std::size_t tail = std::max<std::size_t>(1, res.history.size() / 10);
    double sum = 0.0;
    for (std::size_t i = res.history.size() - tail; i < res.history.size(); ++i) sum += res.history[i].loss.total;
    r.converged_loss = sum / static_cast<double>(tail);
  }
  r.wall_s = Seconds(t0);
  return r;
}

ExtractResult CmdExtract(const std::string& checkpoint_path, const std::string& dataset_path,
                         const std::string& out_dir, double tau, bool overwrite, const std::string& mask_path) {
  const model::ModelParams params = model::ModelParams::Load(checkpoint_path);
  const dgp::Dataset data = dgp::LoadDataset(dataset_path);
  PrepareOutput(out_dir);
  ExtractResult r;
  r.graphs_path = Join(out_dir, "graphs.cadre");
  r.summary_path = Join(out_dir, "jacobians.json");
  r.edge_lists = {Join(out_dir, "obs_edges.csv"), Join(out_dir, "latent_inst_edges.csv"),
                  Join(out_dir, "latent_lag_edges.csv")};
  std::vector<std::string> outputs = r.edge_lists;
  outputs.push_back(r.graphs_path);
  outputs.push_back(r.summary_path);
  GuardOverwrite(outputs, overwrite);

  const std::optional<RowMatrix> mask = LoadMask(mask_path);
  graphs::ExtractOptions eo;
  eo.tau = tau;
  eo.mask = mask ? &*mask : nullptr;
  const graphs::Extraction ex = graphs::ExtractGraphs(params, data.x, eo);
  const std::vector<std::string> names = DefaultNames(data);
  const std::vector<std::string> lnames = LatentNames(params.config().d_z);
  SaveGraphs(ex, names, r.graphs_path);
  const RowMatrix obs_w = ex.bundle.J_g.transpose();
  graphs::WriteEdgeList(ex.graphs.obs_graph, &obs_w, names, r.edge_lists[0]);
  const RowMatrix inst_w = ex.bundle.J_r_curr.transpose();
  graphs::WriteEdgeList(ex.graphs.latent_inst, &inst_w, lnames, r.edge_lists[1]);
  const RowMatrix lag_w = ex.bundle.J_r_prev.transpose();
  graphs::WriteEdgeList(ex.graphs.latent_lag, &lag_w, lnames, r.edge_lists[2]);
  const json summary{{"tau", tau},
                     {"eval_points", ex.bundle.eval_points},
                     {"max_ridge", ex.bundle.max_ridge},
                     {"evaluation", "mean |J| over posterior means of the final eval_points steps"},
                     {"obs_edges", ex.graphs.obs_graph.sum()},
                     {"latent_inst_edges", ex.graphs.latent_inst.sum()},
                     {"latent_lag_edges", ex.graphs.latent_lag.sum()},
                     {"functional_equivalence_residual",
                      graphs::FunctionalEquivalenceResidual(graphs::ObservationGraph(ex.bundle.J_m), ex.bundle.J_m)},
                     {"warnings", ex.graphs.warnings}};
  WriteFileBytes(r.summary_path, summary.dump(2) + "\n");
  r.graphs = ex.graphs;
  return r;
}

metrics::MetricsReport Evaluate(const graphs::GraphEstimate& est, const dgp::Dataset& data,
                                const model::ModelParams* params, const EvalOptions& eval) {
  metrics::MetricsReport rep;
  std::optional<model::PosteriorSample> post;
  if (params != nullptr) post = model::Encode(data.x, *params, 0);

  if (eval.representation) {
    if (post && data.z) {
      const metrics::MccResult mz = metrics::Mcc(post->z_mean, *data.z, true);
      rep.mcc_z = mz.mcc;
      rep.permutation = mz.permutation;
      if (mz.constant_columns > 0) rep.notices.push_back("mcc_z: constant columns treated as zero correlation");
      metrics::R2Options ro;
      ro.split_seed = eval.r2_split_seed;
      rep.r2 = metrics::R2Kernel(post->z_mean, *data.z, ro).r2;
    } else {
      rep.notices.push_back(post ? "MissingGroundTruth: z absent, mcc_z and r2 skipped"
                                 : "no checkpoint given, mcc_z and r2 skipped");
    }
    if (post && data.s) {
      const metrics::MccResult ms = metrics::Mcc(post->s_mean, *data.s, false);
      rep.mcc_s = ms.mcc;
      if (ms.constant_columns > 0) rep.notices.push_back("mcc_s: constant columns treated as zero correlation");
    } else {
      rep.notices.push_back(post ? "MissingGroundTruth: s absent, mcc_s skipped" : "no checkpoint given, mcc_s skipped");
    }
  }

  if (eval.structure) {
    if (data.true_obs) {
      rep.shd_norm = metrics::Shd(est.obs_graph, *data.true_obs, true);
      rep.shd_raw = metrics::Shd(est.obs_graph, *data.true_obs, false);
      const metrics::TprPrecision tp = metrics::ComputeTprPrecision(est.obs_graph, *data.true_obs);
      rep.tpr = tp.tpr;
      rep.precision = tp.precision;
      rep.f1 = metrics::F1(tp);
    } else {
      rep.notices.push_back("MissingGroundTruth: observation graph absent, structure metrics skipped");
    }
    if (data.true_latent_inst && data.true_latent_lag &&
        est.latent_inst.rows() == data.true_latent_inst->rows()) {
      // Estimated latents are matched to true ones before comparing latent graphs.
      std::vector<int> perm(static_cast<std::size_t>(est.latent_inst.rows()));
      std::iota(perm.begin(), perm.end(), 0);
      if (rep.permutation) perm = *rep.permutation;
      else rep.notices.push_back("latent graphs compared without latent alignment");
      rep.shd_latent_inst = metrics::Shd(Permute(est.latent_inst, perm), *data.true_latent_inst, true);
      rep.shd_latent_lag = metrics::Shd(Permute(est.latent_lag, perm), *data.true_latent_lag, true);
    } else {
      rep.notices.push_back("MissingGroundTruth: latent graphs absent, latent SHD skipped");
    }
  }

  if (!eval.wind_path.empty() && fs::exists(eval.wind_path)) {
    const CsvTable w = ReadNumericCsv(eval.wind_path);
    Require(w.values.cols() == 4 && w.values.rows() == est.obs_graph.rows(), ErrorKind::kShapeMismatch,
            eval.wind_path + ": expected columns x,y,u,v with one row per observed variable");
    const RowMatrix ref = metrics::WindReferenceGraph(w.values.leftCols(2), w.values.rightCols(2), eval.wind_step_scale);
    const metrics::WshdWtpr ww = metrics::ComputeWshdWtpr(est.obs_graph, ref);
    rep.wshd = ww.wshd;
    rep.wshd_raw = ww.wshd_raw;
    rep.wtpr = ww.wtpr;
  } else if (!eval.wind_path.empty()) {
    rep.notices.push_back("MissingGroundTruth: wind file " + eval.wind_path + " not found, wshd/wtpr skipped");
  }

  if (!eval.smcc_target_path.empty()) {
    if (post && fs::exists(eval.smcc_target_path)) {
      const CsvTable t = ReadNumericCsv(eval.smcc_target_path);
      Require(t.values.cols() == 1 && t.values.rows() == data.T(), ErrorKind::kShapeMismatch,
              eval.smcc_target_path + ": expected a single column with T rows");
      rep.smcc = metrics::Smcc(post->z_mean, t.values, eval.smcc_subset);
    } else {
      rep.notices.push_back("MissingGroundTruth: smcc target or checkpoint unavailable, smcc skipped");
    }
  }
  for (const std::string& w : est.warnings) rep.notices.push_back("extraction: " + w);
  return rep;
}

EvaluateResult CmdEvaluate(const std::string& graphs_path, const std::string& dataset_path,
                           const std::string& checkpoint_path, const EvalOptions& eval, const std::string& out_dir,
                           bool overwrite) {
  const graphs::GraphEstimate est = LoadGraphs(graphs_path);
  const dgp::Dataset data = dgp::LoadDataset(dataset_path);
  std::optional<model::ModelParams> params;
  if (!checkpoint_path.empty()) params = model::ModelParams::Load(checkpoint_path);
  PrepareOutput(out_dir);
  EvaluateResult r;
  r.json_path = Join(out_dir, "metrics.json");
  r.csv_path = Join(out_dir, "metrics.csv");
  GuardOverwrite({r.json_path, r.csv_path}, overwrite);
  r.report = Evaluate(est, data, params ? &*params : nullptr, eval);
  const json j = metrics::ReportToJson(r.report);
  metrics::ValidateReportJson(j);
  WriteFileBytes(r.json_path, j.dump(2) + "\n");
  WriteReportCsv(j, r.csv_path);
  return r;
}

json RunRecordToJson(const RunRecord& r) {
  json seeds = json::array();
  for (const SeedRecord& s : r.seeds) {
    seeds.push_back({{"variant", s.variant},
                     {"seed", s.seed},
                     {"ok", s.ok},
                     {"error", s.error},
                     {"metrics", s.metrics},
                     {"dataset", s.dataset_path},
                     {"checkpoint", s.checkpoint_path},
                     {"log", s.log_path},
                     {"graphs", s.graphs_path},
                     {"metrics_path", s.metrics_path},
                     {"converged_loss", s.converged_loss},
                     {"wall_s", s.wall_s}});
  }
  return json{{"config_hash", r.config_hash}, {"seeds", seeds}, {"table_csv", r.table_csv_path},
              {"table_md", r.table_md_path}};
}

std::vector<std::pair<std::string, std::vector<AggregateCell>>> Aggregate(const RunRecord& record,
                                                                          const std::vector<std::string>& variants) {
  std::vector<std::pair<std::string, std::vector<AggregateCell>>> rows;
  // Best-converged seed per variant: lowest mean training loss over the final steps.
  std::map<std::string, const SeedRecord*> best;
  for (const SeedRecord& s : record.seeds) {
    if (!s.ok) continue;
    auto it = best.find(s.variant);
    if (it == best.end() || s.converged_loss < it->second->converged_loss) best[s.variant] = &s;
  }
  for (const std::string& metric : CsvColumns()) {
    std::vector<AggregateCell> cells;
    bool any = false;
    for (const std::string& v : variants) {
      std::vector<double> vals;
      for (const SeedRecord& s : record.seeds)
        if (s.ok && s.variant == v && s.metrics.contains(metric)) vals.push_back(s.metrics[metric].get<double>());
      AggregateCell c;
      c.n = static_cast<int>(vals.size());
      if (!vals.empty()) {
        any = true;
        c.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
        double ss = 0.0;
        for (double x : vals) ss += (x - c.mean) * (x - c.mean);
        c.std = vals.size() > 1 ? std::sqrt(ss / static_cast<double>(vals.size() - 1)) : 0.0;
      }
      auto b = best.find(v);
      if (b != best.end() && b->second->metrics.contains(metric)) c.best = b->second->metrics[metric].get<double>();
      cells.push_back(c);
    }
    if (any) rows.emplace_back(metric, std::move(cells));
  }
  return rows;
}

RunRecord CmdExperiment(const ExperimentConfig& cfg, const std::string& out_dir, bool overwrite) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::uint64_t> seeds = cfg.seeds;
  std::sort(seeds.begin(), seeds.end());
  Require(!seeds.empty() && std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end(), ErrorKind::kInvalidConfig,
          "experiment seeds must be non-empty and distinct");
  std::vector<std::string> sorted_names;
  for (const Variant& v : cfg.variants) sorted_names.push_back(v.name);
  std::sort(sorted_names.begin(), sorted_names.end());
  Require(std::adjacent_find(sorted_names.begin(), sorted_names.end()) == sorted_names.end(), ErrorKind::kInvalidConfig,
          "variant names must be distinct");
  PrepareOutput(out_dir);
  RunRecord record;
  record.config_hash = ConfigHash(cfg);
  record.record_path = Join(out_dir, "run_record.json");
  record.table_csv_path = Join(out_dir, "table.csv");
  record.table_md_path = Join(out_dir, "table.md");
  GuardOverwrite({record.record_path, record.table_csv_path, record.table_md_path, Join(out_dir, "config.json")},
                 overwrite);
  SaveExperimentConfig(cfg, Join(out_dir, "config.json"));

  std::vector<Variant> variants = cfg.variants;
  if (variants.empty()) variants.push_back({"default", json::object()});
  for (const Variant& v : variants) {
    for (std::uint64_t seed : cfg.seeds) {
      SeedRecord s;
      s.variant = v.name;
      s.seed = seed;
      record.seeds.push_back(s);
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < record.seeds.size(); i = next++) {
      SeedRecord& s = record.seeds[i];
      const auto ts = std::chrono::steady_clock::now();
      const Variant& v = *std::find_if(variants.begin(), variants.end(), [&](const Variant& x) { return x.name == s.variant; });
      const std::string dir = Join(Join(out_dir, v.name), "seed_" + std::to_string(s.seed));
      try {
        const GenerateResult gen = CmdGenerate(VariantOptions(cfg, v, s.seed), dir, overwrite);
        s.dataset_path = gen.dataset_path;
        ExperimentConfig seeded = cfg;
        seeded.train.seed = s.seed;
        seeded.model.seed = s.seed;
        const TrainRunResult tr = CmdTrain(seeded, gen.dataset_path, dir, overwrite);
        s.checkpoint_path = tr.checkpoint_path;
        s.log_path = tr.log_path;
        s.converged_loss = tr.converged_loss;
        const ExtractResult ex = CmdExtract(tr.checkpoint_path, gen.dataset_path, dir, cfg.train.tau, overwrite);
        s.graphs_path = ex.graphs_path;
        const EvaluateResult ev = CmdEvaluate(ex.graphs_path, gen.dataset_path, tr.checkpoint_path, cfg.eval, dir, overwrite);
        s.metrics_path = ev.json_path;
        s.metrics = metrics::ReportToJson(ev.report);
        s.ok = true;
      } catch (const std::exception& e) {
        s.ok = false;
        s.error = e.what();
      }
      s.wall_s = Seconds(ts);
    }
  };
  const int n_workers = std::min<int>(WorkerCount(), static_cast<int>(record.seeds.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::vector<std::string> names;
  for (const Variant& v : variants) names.push_back(v.name);
  const auto rows = Aggregate(record, names);
  auto fmt = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", x);
    return std::string(buf);
  };
  std::string csv = "metric";
  for (const std::string& n : names) csv += "," + n + "_mean," + n + "_std," + n + "_n," + n + "_best";
  csv += "\n";
  std::string md = "| metric |";
  for (const std::string& n : names) md += " " + n + " |";
  md += "\n|---|";
  for (std::size_t i = 0; i < names.size(); ++i) md += "---|";
  md += "\n";
  for (const auto& [metric, cells] : rows) {
    csv += metric;
    md += "| " + metric + " |";
    for (const AggregateCell& c : cells) {
      csv += "," + (c.n ? fmt(c.mean) : "") + "," + (c.n ? fmt(c.std) : "") + "," + std::to_string(c.n) + "," +
             (c.best ? fmt(*c.best) : "");
      md += c.n ? " " + fmt(c.mean) + " ± " + fmt(c.std) + " (n=" + std::to_string(c.n) + ") |" : " - |";
    }
    csv += "\n";
    md += "\n";
  }
  int failed = 0;
  for (const SeedRecord& s : record.seeds) failed += !s.ok;
  md += "\nMean ± std over successful seeds. Failed seeds: " + std::to_string(failed) + " of " +
        std::to_string(record.seeds.size()) + ". The best-converged seed (lowest mean training loss over the last 10% of steps) is listed in " +
        "the *_best columns of table.csv.\n";
  WriteFileBytes(record.table_csv_path, csv);
  WriteFileBytes(record.table_md_path, md);
  record.wall_s = Seconds(t0);
  json rec = RunRecordToJson(record);
  rec["wall_s"] = record.wall_s;
  WriteFileBytes(record.record_path, rec.dump(2) + "\n");
  return record;
}

}  // namespace cadre::harness
