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

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cadre/core/archive.h"
#include "cadre/core/error.h"
#include "cadre/harness/harness.h"

namespace cadre::harness {

using nlohmann::json;

namespace {

json EvalToJson(const EvalOptions& e) {
  return json{{"structure", e.structure},
              {"representation", e.representation},
              {"wind_path", e.wind_path},
              {"wind_step_scale", e.wind_step_scale},
              {"smcc_target_path", e.smcc_target_path},
              {"smcc_subset", e.smcc_subset},
              {"r2_split_seed", e.r2_split_seed}};
}

EvalOptions EvalFromJson(const json& j) {
  Require(j.is_object(), ErrorKind::kInvalidConfig, "eval options must be an object");
  EvalOptions e;
  for (const auto& [key, value] : j.items()) {
    if (key == "structure") e.structure = value.get<bool>();
    else if (key == "representation") e.representation = value.get<bool>();
    else if (key == "wind_path") e.wind_path = value.get<std::string>();
    else if (key == "wind_step_scale") e.wind_step_scale = value.get<double>();
    else if (key == "smcc_target_path") e.smcc_target_path = value.get<std::string>();
    else if (key == "smcc_subset") e.smcc_subset = value.get<int>();
    else if (key == "r2_split_seed") e.r2_split_seed = value.get<std::uint64_t>();
    else Fail(ErrorKind::kInvalidConfig, "unknown eval option '" + key + "'");
  }
  Require(e.smcc_subset >= 1, ErrorKind::kInvalidConfig, "smcc_subset must be >= 1");
  return e;
}

}  // namespace

json ExperimentConfigToJson(const ExperimentConfig& c) {
  json variants = json::array();
  for (const Variant& v : c.variants) variants.push_back({{"name", v.name}, {"dgp", v.dgp_overrides}});
  return json{{"dgp", dgp::OptionsToJson(c.dgp)},
              {"train", objective::TrainConfigToJson(c.train)},
              {"model", model::ConfigToJson(c.model)},
              {"eval", EvalToJson(c.eval)},
              {"out_dir", c.out_dir},
              {"seeds", c.seeds},
              {"variants", variants}};
}

ExperimentConfig ExperimentConfigFromJson(const json& j) {
  Require(j.is_object(), ErrorKind::kInvalidConfig, "experiment config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      (void)value;
      static const char* const kKeys[] = {"dgp", "train", "model", "eval", "out_dir", "seeds", "variants"};
      bool known = false;
      for (const char* k : kKeys) known = known || key == k;
      Require(known, ErrorKind::kInvalidConfig, "unknown config section '" + key + "'");
    }
    ExperimentConfig c;
    if (j.contains("dgp")) c.dgp = dgp::OptionsFromJson(j["dgp"]);
    if (j.contains("train")) c.train = objective::TrainConfigFromJson(j["train"]);
    // Model dimensions follow the dgp unless given explicitly.
    json model = model::ConfigToJson([&] {
      model::ModelConfig m;
      m.d_x = c.dgp.d_x;
      m.d_z = c.dgp.d_z;
      return m;
    }());
    if (j.contains("model")) {
      Require(j["model"].is_object(), ErrorKind::kInvalidConfig, "model section must be an object");
      model.merge_patch(j["model"]);
    }
    c.model = model::ConfigFromJson(model);
    Require(c.model.d_x == c.dgp.d_x && c.model.d_z == c.dgp.d_z, ErrorKind::kInvalidConfig,
            "model dimensions must match the dgp dimensions");
    if (j.contains("eval")) c.eval = EvalFromJson(j["eval"]);
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    Require(!c.seeds.empty(), ErrorKind::kInvalidConfig, "seeds must not be empty");
    if (j.contains("variants")) {
      Require(j["variants"].is_array(), ErrorKind::kInvalidConfig, "variants must be an array");
      for (const json& v : j["variants"]) {
        Require(v.is_object() && v.contains("name"), ErrorKind::kInvalidConfig, "each variant needs a name");
        Variant var;
        var.name = v["name"].get<std::string>();
        if (v.contains("dgp")) var.dgp_overrides = v["dgp"];
        for (const auto& [key, value] : v.items()) {
          (void)value;
          Require(key == "name" || key == "dgp", ErrorKind::kInvalidConfig, "unknown variant key '" + key + "'");
        }
        c.variants.push_back(std::move(var));
      }
    }
    c.train.Validate();
    for (const Variant& v : c.variants) (void)VariantOptions(c, v, c.seeds.front());
    return c;
  } catch (const json::exception& e) {
    Fail(ErrorKind::kInvalidConfig, std::string("malformed config: ") + e.what());
  }
}

ExperimentConfig LoadExperimentConfig(const std::string& path) {
  std::ifstream in(path);
  Require(static_cast<bool>(in), ErrorKind::kInvalidConfig, "cannot read config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    Fail(ErrorKind::kInvalidConfig, path + ": " + e.what());
  }
  return ExperimentConfigFromJson(j);
}

void SaveExperimentConfig(const ExperimentConfig& c, const std::string& path) {
  WriteFileBytes(path, ExperimentConfigToJson(c).dump(2) + "\n");
}

std::string ConfigHash(const ExperimentConfig& c) { return HashBytes(ExperimentConfigToJson(c).dump()); }

dgp::DgpOptions VariantOptions(const ExperimentConfig& c, const Variant& v, std::uint64_t seed) {
  json j = dgp::OptionsToJson(c.dgp);
  if (!v.dgp_overrides.is_null()) {
    Require(v.dgp_overrides.is_object(), ErrorKind::kInvalidConfig, "variant '" + v.name + "': dgp must be an object");
    j.merge_patch(v.dgp_overrides);
  }
  j["seed"] = seed;
  dgp::DgpOptions o = dgp::OptionsFromJson(j);
  Require(o.d_x == c.model.d_x && o.d_z == c.model.d_z, ErrorKind::kInvalidConfig,
          "variant '" + v.name + "' changes dimensions; give it its own config");
  return o;
}

int WorkerCount() {
  const char* env = std::getenv("CADRE_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

}  // namespace cadre::harness
