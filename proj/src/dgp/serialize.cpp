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
#include <fstream>

#include "cadre/core/archive.h"
#include "cadre/core/error.h"
#include "cadre/core/json_util.h"
#include "cadre/dgp/dgp.h"

namespace cadre::dgp {

using nlohmann::json;

json OptionsToJson(const DgpOptions& o) {
  return json{{"d_x", o.d_x},
              {"d_z", o.d_z},
              {"T", o.T},
              {"lag_order", o.lag_order},
              {"setting", ToString(o.setting)},
              {"violation", ToString(o.violation)},
              {"a1", o.a1},
              {"a2", o.a2},
              {"sigma_z", o.sigma_z},
              {"sigma_x", o.sigma_x},
              {"obs_degree", o.obs_degree},
              {"transition_norm", o.transition_norm},
              {"dep_norm", o.dep_norm},
              {"seed", o.seed}};
}

DgpOptions OptionsFromJson(const json& j) {
  Require(j.is_object(), ErrorKind::kInvalidConfig, "dgp options must be an object");
  DgpOptions o;
  for (const auto& [key, value] : j.items()) {
    if (key == "d_x") o.d_x = value.get<int>();
    else if (key == "d_z") o.d_z = value.get<int>();
    else if (key == "T") o.T = value.get<int>();
    else if (key == "lag_order") o.lag_order = value.get<int>();
    else if (key == "setting") o.setting = ParseSparsitySetting(value.get<std::string>());
    else if (key == "violation") o.violation = ParseViolation(value.get<std::string>());
    else if (key == "a1") o.a1 = value.get<double>();
    else if (key == "a2") o.a2 = value.get<double>();
    else if (key == "sigma_z") o.sigma_z = value.get<double>();
    else if (key == "sigma_x") o.sigma_x = value.get<double>();
    else if (key == "obs_degree") o.obs_degree = value.get<double>();
    else if (key == "transition_norm") o.transition_norm = value.get<double>();
    else if (key == "dep_norm") o.dep_norm = value.get<double>();
    else if (key == "seed") o.seed = value.get<std::uint64_t>();
    else Fail(ErrorKind::kInvalidConfig, "unknown dgp option '" + key + "'");
  }
  Require(o.d_x >= 1 && o.d_z >= 1 && o.d_z <= o.d_x, ErrorKind::kInvalidConfig, "need 1 <= d_z <= d_x");
  Require(o.T >= 2, ErrorKind::kInvalidConfig, "T must be >= 2");
  Require(o.lag_order >= 1, ErrorKind::kInvalidConfig, "lag_order must be >= 1");
  Require(o.sigma_z > 0.0 && o.sigma_x > 0.0, ErrorKind::kInvalidConfig, "noise scales must be positive");
  return o;
}

json SpecToJson(const DGPSpec& spec) {
  json w = json::array();
  for (const RowMatrix& m : spec.W) w.push_back(MatrixToJson(m));
  return json{{"options", OptionsToJson(spec.options)},
              {"leaky_slope", spec.leaky_slope},
              {"rng", "mt19937_64+splitmix64"},
              {"W", w},
              {"B_z", MatrixToJson(spec.B_z)},
              {"obs_dag", MatrixToJson(spec.obs_dag)},
              {"obs_weights", MatrixToJson(spec.obs_weights)},
              {"mix",
               {{"A", MatrixToJson(spec.mix.A)},
                {"S", MatrixToJson(spec.mix.S)},
                {"b", MatrixToJson(spec.mix.b)},
                {"C", MatrixToJson(spec.mix.C)}}},
              {"F_dep", MatrixToJson(spec.F_dep)},
              {"Q_linear", MatrixToJson(spec.Q_linear)},
              {"q_noise", MatrixToJson(spec.q_noise)}};
}

DGPSpec SpecFromJson(const json& j) {
  Require(j.is_object() && j.contains("options"), ErrorKind::kInvalidConfig, "spec JSON lacks options");
  DGPSpec spec;
  spec.options = OptionsFromJson(j.at("options"));
  spec.leaky_slope = j.value("leaky_slope", 0.2);
  for (const auto& m : j.at("W")) spec.W.push_back(MatrixFromJson(m, "W"));
  spec.B_z = MatrixFromJson(j.at("B_z"), "B_z");
  spec.obs_dag = MatrixFromJson(j.at("obs_dag"), "obs_dag");
  spec.obs_weights = MatrixFromJson(j.at("obs_weights"), "obs_weights");
  const json& mix = j.at("mix");
  spec.mix.A = MatrixFromJson(mix.at("A"), "mix.A");
  spec.mix.S = MatrixFromJson(mix.at("S"), "mix.S");
  spec.mix.b = MatrixFromJson(mix.at("b"), "mix.b");
  spec.mix.C = MatrixFromJson(mix.at("C"), "mix.C");
  spec.F_dep = MatrixFromJson(j.at("F_dep"), "F_dep");
  spec.Q_linear = MatrixFromJson(j.at("Q_linear"), "Q_linear");
  spec.q_noise = MatrixFromJson(j.at("q_noise"), "q_noise");
  spec.Validate();
  return spec;
}

void SaveDataset(const Dataset& data, const std::string& archive_path) {
  Archive ar;
  json meta{{"kind", "dataset"}, {"names", data.names}};
  if (data.spec) meta["spec"] = SpecToJson(*data.spec);
  ar.metadata = meta.dump();
  ar.Put("x", data.x);
  auto put = [&ar](const char* name, const std::optional<RowMatrix>& m) {
    if (m) ar.Put(name, *m);
  };
  put("z", data.z);
  put("s", data.s);
  put("eps_z", data.eps_z);
  put("eps_x", data.eps_x);
  put("coords", data.coords);
  put("true_obs", data.true_obs);
  put("true_latent_inst", data.true_latent_inst);
  put("true_latent_lag", data.true_latent_lag);
  ar.Save(archive_path);
  if (data.spec) WriteFileBytes(archive_path + ".spec.json", SpecToJson(*data.spec).dump(2) + "\n");
}

Dataset LoadDataset(const std::string& archive_path) {
  const Archive ar = Archive::Load(archive_path);
  Dataset data;
  json meta = ar.metadata.empty() ? json::object() : json::parse(ar.metadata, nullptr, false);
  Require(!meta.is_discarded(), ErrorKind::kIo, archive_path + ": corrupt metadata");
  Require(ar.Has("x"), ErrorKind::kIo, archive_path + ": no 'x' array");
  data.x = ar.Get("x");
  auto get = [&ar](const char* name) -> std::optional<RowMatrix> {
    if (const RowMatrix* m = ar.Find(name)) return *m;
    return std::nullopt;
  };
  data.z = get("z");
  data.s = get("s");
  data.eps_z = get("eps_z");
  data.eps_x = get("eps_x");
  data.coords = get("coords");
  data.true_obs = get("true_obs");
  data.true_latent_inst = get("true_latent_inst");
  data.true_latent_lag = get("true_latent_lag");
  if (meta.contains("spec")) data.spec = SpecFromJson(meta["spec"]);
  if (meta.contains("names")) data.names = meta["names"].get<std::vector<std::string>>();
  if (data.names.empty())
    for (Index i = 0; i < data.x.cols(); ++i) data.names.push_back("x" + std::to_string(i));
  return data;
}

void WriteCsv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  Require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path);
  for (Index j = 0; j < data.x.cols(); ++j) {
    if (j > 0) out << ',';
    out << (static_cast<std::size_t>(j) < data.names.size() ? data.names[static_cast<std::size_t>(j)]
                                                            : "x" + std::to_string(j));
  }
  out << '\n';
  char buf[32];
  for (Index t = 0; t < data.x.rows(); ++t) {
    for (Index j = 0; j < data.x.cols(); ++j) {
      if (j > 0) out << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", data.x(t, j));
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace cadre::dgp
