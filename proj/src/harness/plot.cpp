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
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cadre/core/archive.h"
#include "cadre/core/error.h"
#include "cadre/harness/harness.h"

namespace cadre::harness {

namespace fs = std::filesystem;

namespace {

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string Header(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + Num(w) + "\" height=\"" + Num(h) +
         "\" viewBox=\"0 0 " + Num(w) + " " + Num(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

// White to dark blue.
std::string Shade(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255 - 217 * t));
  const int g = static_cast<int>(std::lround(255 - 167 * t));
  const int b = static_cast<int>(std::lround(255 - 95 * t));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

void PlotHeatmap(const RowMatrix& m, const std::vector<std::string>& names, const std::string& title,
                 const std::string& path) {
  const double cell = 28.0, margin = 60.0;
  const double w = margin + cell * static_cast<double>(m.cols()) + 20.0;
  const double h = margin + cell * static_cast<double>(m.rows()) + 20.0;
  const double vmax = m.size() ? std::max(m.cwiseAbs().maxCoeff(), 1e-12) : 1.0;
  std::string svg = Header(w, h);
  svg += "<text x=\"" + Num(margin) + "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">" + Escape(title) +
         "</text>\n";
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      svg += "<rect class=\"cell\" x=\"" + Num(margin + cell * static_cast<double>(j)) + "\" y=\"" +
             Num(margin + cell * static_cast<double>(i)) + "\" width=\"" + Num(cell) + "\" height=\"" + Num(cell) +
             "\" fill=\"" + Shade(std::abs(m(i, j)) / vmax) + "\" stroke=\"#cccccc\"/>\n";
    }
  }
  for (Index i = 0; i < m.rows() && i < static_cast<Index>(names.size()); ++i)
    svg += "<text x=\"4\" y=\"" + Num(margin + cell * (static_cast<double>(i) + 0.65)) +
           "\" font-family=\"sans-serif\" font-size=\"10\">" + Escape(names[static_cast<std::size_t>(i)]) + "</text>\n";
  for (Index j = 0; j < m.cols() && j < static_cast<Index>(names.size()); ++j)
    svg += "<text x=\"" + Num(margin + cell * static_cast<double>(j) + 4) + "\" y=\"" + Num(margin - 6) +
           "\" font-family=\"sans-serif\" font-size=\"10\">" + Escape(names[static_cast<std::size_t>(j)]) + "</text>\n";
  svg += "</svg>\n";
  WriteFileBytes(path, svg);
}

void PlotLossCurve(const std::vector<objective::TrainHistoryRow>& history, const std::string& path) {
  const double w = 640, h = 360, left = 60, right = 20, top = 30, bottom = 40;
  std::string svg = Header(w, h);
  svg += "<text x=\"" + Num(left) + "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">training loss (total)</text>\n";
  svg += "<rect x=\"" + Num(left) + "\" y=\"" + Num(top) + "\" width=\"" + Num(w - left - right) + "\" height=\"" +
         Num(h - top - bottom) + "\" fill=\"none\" stroke=\"black\"/>\n";
  if (!history.empty()) {
    double lo = history.front().loss.total, hi = lo;
    for (const auto& r : history) {
      lo = std::min(lo, r.loss.total);
      hi = std::max(hi, r.loss.total);
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double n = std::max<double>(1.0, static_cast<double>(history.size() - 1));
    std::string pts;
    // Subsample so very long runs stay small.
    const std::size_t stride = std::max<std::size_t>(1, history.size() / 2000);
    for (std::size_t i = 0; i < history.size(); i += stride) {
      const double x = left + (w - left - right) * static_cast<double>(i) / n;
      const double y = top + (h - top - bottom) * (1.0 - (history[i].loss.total - lo) / (hi - lo));
      pts += Num(x) + "," + Num(y) + " ";
    }
    svg += "<polyline fill=\"none\" stroke=\"#1f5fa0\" stroke-width=\"1\" points=\"" + pts + "\"/>\n";
    svg += "<text x=\"4\" y=\"" + Num(top + 10) + "\" font-family=\"sans-serif\" font-size=\"10\">" + Num(hi) + "</text>\n";
    svg += "<text x=\"4\" y=\"" + Num(h - bottom) + "\" font-family=\"sans-serif\" font-size=\"10\">" + Num(lo) + "</text>\n";
    svg += "<text x=\"" + Num(w - right - 60) + "\" y=\"" + Num(h - 12) + "\" font-family=\"sans-serif\" font-size=\"10\">step " +
           std::to_string(history.back().step) + "</text>\n";
  }
  svg += "</svg>\n";
  WriteFileBytes(path, svg);
}

void PlotArrowOverlay(const RowMatrix& adjacency, const RowMatrix& coords, const std::string& path) {
  Require(coords.cols() == 2 && coords.rows() == adjacency.rows(), ErrorKind::kShapeMismatch,
          "arrow overlay needs one coordinate row per node");
  const double w = 600, h = 600, pad = 40;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (coords.rows() > 0) {
    x0 = coords.col(0).minCoeff();
    x1 = coords.col(0).maxCoeff();
    y0 = coords.col(1).minCoeff();
    y1 = coords.col(1).maxCoeff();
  }
  const double sx = (w - 2 * pad) / std::max(x1 - x0, 1e-12), sy = (h - 2 * pad) / std::max(y1 - y0, 1e-12);
  auto px = [&](Index i) { return pad + (coords(i, 0) - x0) * sx; };
  auto py = [&](Index i) { return h - pad - (coords(i, 1) - y0) * sy; };
  std::string svg = Header(w, h);
  svg += "<defs><marker id=\"head\" markerWidth=\"8\" markerHeight=\"8\" refX=\"7\" refY=\"4\" orient=\"auto\">"
         "<path d=\"M0,0 L8,4 L0,8 z\" fill=\"#b03030\"/></marker></defs>\n";
  for (Index i = 0; i < coords.rows(); ++i)
    svg += "<circle cx=\"" + Num(px(i)) + "\" cy=\"" + Num(py(i)) + "\" r=\"3\" fill=\"#555555\"/>\n";
  for (Index i = 0; i < adjacency.rows(); ++i)
    for (Index j = 0; j < adjacency.cols(); ++j)
      if (i != j && adjacency(i, j) != 0.0)
        svg += "<line class=\"arrow\" x1=\"" + Num(px(i)) + "\" y1=\"" + Num(py(i)) + "\" x2=\"" + Num(px(j)) +
               "\" y2=\"" + Num(py(j)) + "\" stroke=\"#b03030\" stroke-width=\"1.2\" marker-end=\"url(#head)\"/>\n";
  svg += "</svg>\n";
  WriteFileBytes(path, svg);
}

std::vector<objective::TrainHistoryRow> ReadTrainLog(const std::string& path) {
  std::vector<objective::TrainHistoryRow> rows;
  std::ifstream in(path);
  Require(static_cast<bool>(in), ErrorKind::kIo, "cannot read " + path);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    objective::TrainHistoryRow r;
    char comma;
    std::istringstream ss(line);
    ss >> r.step >> comma >> r.loss.total >> comma >> r.loss.recon >> comma >> r.loss.kl_s >> comma >> r.loss.kl_z >>
        comma >> r.loss.sparsity >> comma >> r.loss.dag >> comma >> r.wall_ms;
    Require(!ss.fail(), ErrorKind::kInvalidInput, path + ": malformed log row '" + line + "'");
    rows.push_back(r);
  }
  return rows;
}

std::vector<std::string> CmdPlot(const std::string& run_dir, const std::string& out_dir) {
  std::vector<std::string> written;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const std::string graphs_path = (fs::path(run_dir) / "graphs.cadre").string();
  if (fs::exists(graphs_path)) {
    const Archive ar = Archive::Load(graphs_path);
    std::vector<std::string> names;
    if (!ar.metadata.empty()) names = nlohmann::json::parse(ar.metadata).value("names", names);
    for (const char* key : {"obs_graph", "latent_inst", "latent_lag", "J_g"}) {
      if (!ar.Has(key)) continue;
      const std::string out = (fs::path(out_dir) / (std::string(key) + ".svg")).string();
      PlotHeatmap(ar.Get(key), std::string(key) == "obs_graph" || std::string(key) == "J_g" ? names
                                                                                         : std::vector<std::string>{},
                  key, out);
      written.push_back(out);
    }
    const std::string data_path = (fs::path(run_dir) / "dataset.cadre").string();
    if (fs::exists(data_path)) {
      const Archive data = Archive::Load(data_path);
      if (const RowMatrix* coords = data.Find("coords")) {
        const std::string out = (fs::path(out_dir) / "obs_graph_arrows.svg").string();
        PlotArrowOverlay(ar.Get("obs_graph"), *coords, out);
        written.push_back(out);
      }
    }
  }
  const std::string log_path = (fs::path(run_dir) / "train_log.csv").string();
  if (fs::exists(log_path)) {
    const std::string out = (fs::path(out_dir) / "loss.svg").string();
    PlotLossCurve(ReadTrainLog(log_path), out);
    written.push_back(out);
  }
  return written;
}

}  // namespace cadre::harness
