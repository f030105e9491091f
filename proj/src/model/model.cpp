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

#include "cadre/model/model.h"

#include <cmath>
#include <numbers>

#include "cadre/core/archive.h"
#include "cadre/core/error.h"
#include "cadre/core/rng.h"

namespace cadre::model {

using ad::Var;
using nlohmann::json;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

Var Dense(const Bound& p, const DenseIdx& d, Var x) { return ad::AddRow(ad::MatMulNT(x, p[d.W]), p[d.b]); }

std::vector<Index> RepeatedIndex(const std::vector<int>& dirs, Index n) {
  std::vector<Index> idx;
  idx.reserve(dirs.size() * static_cast<std::size_t>(n));
  for (int k : dirs)
    for (Index i = 0; i < n; ++i) idx.push_back(k);
  return idx;
}

EncoderOut RunEncoder(const Bound& p, const EncoderIdx& e, Var x) {
  const ModelConfig& c = p.params->config();
  Var h = ad::LeakyRelu(Dense(p, e.hidden, x), c.leaky_slope);
  return {Dense(p, e.mean, h), ad::Clamp(Dense(p, e.logvar, h), -c.logvar_clamp, c.logvar_clamp)};
}

// log N(eps; 0, 1) + log(|jac| + floor), summed across columns.
Var GaussianFlowLogp(Var eps, Var jac, double floor) {
  Var log_n = ad::AddScalar(ad::Scale(ad::Square(eps), -0.5), -kHalfLog2Pi);
  Var log_j = ad::Log(ad::AddScalar(ad::Abs(jac), floor));
  return ad::RowSums(ad::Add(log_n, log_j));
}

void RequireCols(Var v, Index cols, const char* what) {
  Require(v.cols() == cols, ErrorKind::kShapeMismatch,
          std::string(what) + ": expected " + std::to_string(cols) + " columns, got " + std::to_string(v.cols()));
}

}  // namespace

json ConfigToJson(const ModelConfig& c) {
  return json{{"d_x", c.d_x},
              {"d_z", c.d_z},
              {"enc_hidden", c.enc_hidden},
              {"dec_hidden", c.dec_hidden},
              {"flow_hidden", c.flow_hidden},
              {"flow_layers", c.flow_layers},
              {"leaky_slope", c.leaky_slope},
              {"logvar_clamp", c.logvar_clamp},
              {"jac_floor", c.jac_floor},
              {"seed", c.seed},
              {"decoder_linear_head", true},
              {"posterior", "diagonal_gaussian"}};
}

ModelConfig ConfigFromJson(const json& j) {
  Require(j.is_object(), ErrorKind::kInvalidConfig, "model config must be an object");
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "d_x") c.d_x = value.get<int>();
    else if (key == "d_z") c.d_z = value.get<int>();
    else if (key == "enc_hidden") c.enc_hidden = value.get<int>();
    else if (key == "dec_hidden") c.dec_hidden = value.get<int>();
    else if (key == "flow_hidden") c.flow_hidden = value.get<int>();
    else if (key == "flow_layers") c.flow_layers = value.get<int>();
    else if (key == "leaky_slope") c.leaky_slope = value.get<double>();
    else if (key == "logvar_clamp") c.logvar_clamp = value.get<double>();
    else if (key == "jac_floor") c.jac_floor = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "decoder_linear_head" || key == "posterior") continue;
    else Fail(ErrorKind::kInvalidConfig, "unknown model option '" + key + "'");
  }
  Require(c.d_x >= 1 && c.d_z >= 1, ErrorKind::kInvalidConfig, "model dimensions must be positive");
  Require(c.flow_hidden >= 2 && c.flow_layers >= 1, ErrorKind::kInvalidConfig, "flow MLP too small");
  return c;
}

ModelParams::ModelParams(const ModelConfig& config) : config_(config) {
  Require(config.d_x >= 1 && config.d_z >= 1, ErrorKind::kInvalidInput, "model dimensions must be positive");
  Require(config.flow_hidden >= 2 && config.flow_layers >= 1, ErrorKind::kInvalidInput, "flow MLP too small");
  const Index dx = config.d_x, dz = config.d_z, he = config.EncHidden(), hd = config.DecHidden();
  const Index hf = config.flow_hidden;

  layout_.enc_z = {AddDense("enc_z.hidden", he, dx), AddDense("enc_z.mean", dz, he), AddDense("enc_z.logvar", dz, he)};
  layout_.enc_s = {AddDense("enc_s.hidden", he, dx), AddDense("enc_s.mean", dx, he), AddDense("enc_s.logvar", dx, he)};
  layout_.dec.Wz = Add("dec.hidden.Wz", hd, dz);
  layout_.dec.Ws = Add("dec.hidden.Ws", hd, dx);
  layout_.dec.b = Add("dec.hidden.b", 1, hd);
  layout_.dec.out = AddDense("dec.out", dx, hd);

  auto add_flow = [&](const std::string& prefix, Index in) {
    FlowIdx f;
    Index prev = in;
    for (int l = 0; l < config.flow_layers; ++l) {
      f.hidden.push_back(AddDense(prefix + ".l" + std::to_string(l), hf, prev));
      prev = hf;
    }
    f.out = AddDense(prefix + ".out", 1, hf);
    return f;
  };
  for (Index i = 0; i < dz; ++i) layout_.r.push_back(add_flow("r." + std::to_string(i), 2 * dz));
  for (Index i = 0; i < dx; ++i) layout_.w.push_back(add_flow("w." + std::to_string(i), dz + 1));
}

int ModelParams::Add(std::string name, Index rows, Index cols) {
  tensors_.emplace_back(std::move(name), RowMatrix::Zero(rows, cols));
  return static_cast<int>(tensors_.size()) - 1;
}

DenseIdx ModelParams::AddDense(const std::string& prefix, Index out, Index in) {
  DenseIdx d;
  d.W = Add(prefix + ".W", out, in);
  d.b = Add(prefix + ".b", 1, out);
  return d;
}

ModelParams ModelParams::Zeros(const ModelConfig& config) { return ModelParams(config); }

ModelParams ModelParams::Init(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p(config);
  Rng rng(seed);
  const double dec_fan = static_cast<double>(config.d_z + config.d_x);
  for (auto& [name, m] : p.tensors_) {
    const bool is_bias = name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
    if (is_bias) continue;
    double fan_in = static_cast<double>(m.cols());
    if (name == "dec.hidden.Wz" || name == "dec.hidden.Ws") fan_in = dec_fan;
    m = rng.NormalMatrix(m.rows(), m.cols(), 1.0 / std::sqrt(fan_in));
  }
  return p;
}

int ModelParams::Find(const std::string& name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (tensors_[i].first == name) return static_cast<int>(i);
  return -1;
}

Index ModelParams::NumScalars() const {
  Index n = 0;
  for (const auto& t : tensors_) n += t.second.size();
  return n;
}

Vector ModelParams::Flatten() const {
  Vector flat(NumScalars());
  Index off = 0;
  for (const auto& t : tensors_) {
    flat.segment(off, t.second.size()) = Eigen::Map<const Vector>(t.second.data(), t.second.size());
    off += t.second.size();
  }
  return flat;
}

void ModelParams::Unflatten(const Vector& flat) {
  Require(flat.size() == NumScalars(), ErrorKind::kShapeMismatch, "flat parameter vector has wrong length");
  Index off = 0;
  for (auto& t : tensors_) {
    Eigen::Map<Vector>(t.second.data(), t.second.size()) = flat.segment(off, t.second.size());
    off += t.second.size();
  }
}

void ModelParams::SetFlowsToIdentity() {
  constexpr double kIdentityKink = -3.0;
  const double gain = std::pow(1.0 + config_.leaky_slope, config_.flow_layers);
  auto set = [&](const FlowIdx& f, Index input_col) {
    for (const DenseIdx& d : f.hidden) {
      tensor(d.W).setZero();
      tensor(d.b).setZero();
    }
    tensor(f.out.W).setZero();
    tensor(f.out.b).setZero();
    // lrelu(u) - lrelu(-u) = (1 + slope) u with u = x - kIdentityKink; the kink
    // sits away from the origin so Jacobians there are exact.
    RowMatrix& first = tensor(f.hidden[0].W);
    first(0, input_col) = 1.0;
    first(1, input_col) = -1.0;
    tensor(f.hidden[0].b)(0, 0) = -kIdentityKink;
    tensor(f.hidden[0].b)(0, 1) = kIdentityKink;
    for (std::size_t l = 1; l < f.hidden.size(); ++l) {
      RowMatrix& w = tensor(f.hidden[l].W);
      w(0, 0) = 1.0;
      w(0, 1) = -1.0;
      w(1, 0) = -1.0;
      w(1, 1) = 1.0;
    }
    tensor(f.out.W)(0, 0) = 1.0 / gain;
    tensor(f.out.W)(0, 1) = -1.0 / gain;
    tensor(f.out.b)(0, 0) = kIdentityKink;
  };
  const Index dz = config_.d_z;
  for (Index i = 0; i < dz; ++i) set(layout_.r[static_cast<std::size_t>(i)], dz + i);
  for (const FlowIdx& f : layout_.w) set(f, dz);
}

void ModelParams::Save(const std::string& path, const json& extra) const {
  Archive ar;
  ar.metadata = json{{"kind", "checkpoint"}, {"config", ConfigToJson(config_)}, {"extra", extra}}.dump();
  for (const auto& [name, m] : tensors_) ar.Put(name, m);
  ar.Save(path);
}

ModelParams ModelParams::Load(const std::string& path, json* extra) {
  const Archive ar = Archive::Load(path);
  const json meta = json::parse(ar.metadata, nullptr, false);
  Require(!meta.is_discarded() && meta.contains("config"), ErrorKind::kIo, path + ": not a checkpoint");
  ModelParams p(ConfigFromJson(meta["config"]));
  for (auto& [name, m] : p.tensors_) {
    const RowMatrix* stored = ar.Find(name);
    Require(stored != nullptr, ErrorKind::kIo, path + ": missing tensor " + name);
    Require(stored->rows() == m.rows() && stored->cols() == m.cols(), ErrorKind::kIo,
            path + ": tensor " + name + " has the wrong shape");
    m = *stored;
  }
  if (extra != nullptr) *extra = meta.value("extra", json::object());
  return p;
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (!(config_ == other.config_) || tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (tensors_[i].first != other.tensors_[i].first || tensors_[i].second != other.tensors_[i].second) return false;
  return true;
}

Bound Bind(ad::Tape& tape, const ModelParams& params, bool trainable) {
  Bound b;
  b.params = &params;
  b.vars.reserve(params.num_tensors());
  for (std::size_t i = 0; i < params.num_tensors(); ++i) {
    const RowMatrix& m = params.tensor(static_cast<int>(i));
    b.vars.push_back(trainable ? tape.Variable(m) : tape.Constant(m));
  }
  return b;
}

EncoderOut EncodeZ(const Bound& p, Var x) {
  RequireCols(x, p.params->config().d_x, "EncodeZ");
  return RunEncoder(p, p.params->layout().enc_z, x);
}

EncoderOut EncodeS(const Bound& p, Var x) {
  RequireCols(x, p.params->config().d_x, "EncodeS");
  return RunEncoder(p, p.params->layout().enc_s, x);
}

namespace {

Var DecoderHidden(const Bound& p, Var z, Var s) {
  const DecoderIdx& d = p.params->layout().dec;
  return ad::Tanh(ad::AddRow(ad::Add(ad::MatMulNT(z, p[d.Wz]), ad::MatMulNT(s, p[d.Ws])), p[d.b]));
}

}  // namespace

Var Decode(const Bound& p, Var z, Var s) {
  RequireCols(z, p.params->config().d_z, "Decode z");
  RequireCols(s, p.params->config().d_x, "Decode s");
  Require(z.rows() == s.rows(), ErrorKind::kShapeMismatch, "Decode: z and s row counts differ");
  return Dense(p, p.params->layout().dec.out, DecoderHidden(p, z, s));
}

Var DecoderJacobianColumns(const Bound& p, Var z, Var s) {
  RequireCols(z, p.params->config().d_z, "DecoderJacobianColumns z");
  RequireCols(s, p.params->config().d_x, "DecoderJacobianColumns s");
  const DecoderIdx& d = p.params->layout().dec;
  const Index n = z.rows(), dx = s.cols();
  Var h = DecoderHidden(p, z, s);
  Var dh = ad::AddScalar(ad::Scale(ad::Square(h), -1.0), 1.0);  // tanh' = 1 - tanh^2
  std::vector<int> dirs(static_cast<std::size_t>(dx));
  for (Index k = 0; k < dx; ++k) dirs[static_cast<std::size_t>(k)] = static_cast<int>(k);
  Var t = ad::GatherRows(ad::Transpose(p[d.Ws]), RepeatedIndex(dirs, n));
  t = ad::Mul(t, ad::TileRows(dh, dx));
  return ad::MatMulNT(t, p[d.out.W]);
}

FlowEval EvalFlow(const Bound& p, const FlowIdx& flow, Var input, const std::vector<int>& dirs) {
  const double slope = p.params->config().leaky_slope;
  const Index n = input.rows();
  std::vector<Var> masks;
  Var h = input;
  for (const DenseIdx& layer : flow.hidden) {
    Var pre = Dense(p, layer, h);
    if (!dirs.empty()) masks.push_back(ad::LeakyReluSlope(pre, slope));
    h = ad::LeakyRelu(pre, slope);
  }
  FlowEval out;
  out.out = Dense(p, flow.out, h);
  if (dirs.empty()) return out;
  const auto k = static_cast<Index>(dirs.size());
  Var t = ad::GatherRows(ad::Transpose(p[flow.hidden[0].W]), RepeatedIndex(dirs, n));
  t = ad::Mul(t, ad::TileRows(masks[0], k));
  for (std::size_t l = 1; l < flow.hidden.size(); ++l)
    t = ad::Mul(ad::MatMulNT(t, p[flow.hidden[l].W]), ad::TileRows(masks[l], k));
  out.tangents = ad::MatMulNT(t, p[flow.out.W]);
  return out;
}

FlowLogProb FlowZLogProb(const Bound& p, Var z_prev, Var z_curr) {
  const int dz = p.params->config().d_z;
  RequireCols(z_prev, dz, "FlowZLogProb z_prev");
  RequireCols(z_curr, dz, "FlowZLogProb z_curr");
  Var input = ad::ConcatCols({z_prev, z_curr});
  std::vector<Var> eps, jac;
  for (int i = 0; i < dz; ++i) {
    FlowEval f = EvalFlow(p, p.params->layout().r[static_cast<std::size_t>(i)], input, {dz + i});
    eps.push_back(f.out);
    jac.push_back(f.tangents);
  }
  FlowLogProb r;
  r.eps = ad::ConcatCols(eps);
  r.diag_jac = ad::ConcatCols(jac);
  r.logp = GaussianFlowLogp(r.eps, r.diag_jac, p.params->config().jac_floor);
  return r;
}

FlowLogProb FlowSLogProb(const Bound& p, Var z_curr, Var s_curr) {
  const int dz = p.params->config().d_z, dx = p.params->config().d_x;
  RequireCols(z_curr, dz, "FlowSLogProb z_curr");
  RequireCols(s_curr, dx, "FlowSLogProb s_curr");
  std::vector<Var> eps, jac;
  for (int i = 0; i < dx; ++i) {
    Var input = ad::ConcatCols({z_curr, ad::SliceCols(s_curr, i, 1)});
    FlowEval f = EvalFlow(p, p.params->layout().w[static_cast<std::size_t>(i)], input, {dz});
    eps.push_back(f.out);
    jac.push_back(f.tangents);
  }
  FlowLogProb r;
  r.eps = ad::ConcatCols(eps);
  r.diag_jac = ad::ConcatCols(jac);
  r.logp = GaussianFlowLogp(r.eps, r.diag_jac, p.params->config().jac_floor);
  return r;
}

FlowJacobianColumns FlowZJacobianColumns(const Bound& p, Var z_prev, Var z_curr) {
  const int dz = p.params->config().d_z;
  const Index n = z_curr.rows();
  Var input = ad::ConcatCols({z_prev, z_curr});
  std::vector<int> dirs(static_cast<std::size_t>(2 * dz));
  for (int k = 0; k < 2 * dz; ++k) dirs[static_cast<std::size_t>(k)] = k;
  std::vector<Var> cols;
  for (int i = 0; i < dz; ++i) cols.push_back(EvalFlow(p, p.params->layout().r[static_cast<std::size_t>(i)], input, dirs).tangents);
  Var all = ad::ConcatCols(cols);
  return {ad::SliceRows(all, 0, dz * n), ad::SliceRows(all, dz * n, dz * n)};
}

std::vector<RowMatrix> UnstackColumns(const RowMatrix& stacked, Index n_points, Index k_dirs) {
  Require(stacked.rows() == n_points * k_dirs, ErrorKind::kShapeMismatch, "UnstackColumns row count");
  const Index d = stacked.cols();
  std::vector<RowMatrix> out(static_cast<std::size_t>(n_points), RowMatrix(d, k_dirs));
  for (Index k = 0; k < k_dirs; ++k)
    for (Index n = 0; n < n_points; ++n) out[static_cast<std::size_t>(n)].col(k) = stacked.row(k * n_points + n).transpose();
  return out;
}

PosteriorSample Encode(const RowMatrix& x, const ModelParams& params, std::uint64_t seed) {
  Require(x.cols() == params.config().d_x, ErrorKind::kShapeMismatch, "Encode: x has the wrong width");
  ad::Tape tape;
  const Bound p = Bind(tape, params, false);
  Var xv = tape.Constant(x);
  const EncoderOut ez = EncodeZ(p, xv);
  const EncoderOut es = EncodeS(p, xv);
  PosteriorSample out;
  out.z_mean = ez.mean.value();
  out.z_logvar = ez.logvar.value();
  out.s_mean = es.mean.value();
  out.s_logvar = es.logvar.value();
  Rng rng(seed);
  out.z_noise = rng.NormalMatrix(x.rows(), params.config().d_z);
  out.s_noise = rng.NormalMatrix(x.rows(), params.config().d_x);
  out.z_sample = out.z_mean + ((0.5 * out.z_logvar.array()).exp() * out.z_noise.array()).matrix();
  out.s_sample = out.s_mean + ((0.5 * out.s_logvar.array()).exp() * out.s_noise.array()).matrix();
  return out;
}

RowMatrix Decode(const RowMatrix& z, const RowMatrix& s, const ModelParams& params) {
  ad::Tape tape;
  const Bound p = Bind(tape, params, false);
  return Decode(p, tape.Constant(z), tape.Constant(s)).value();
}

namespace {

FlowResult ToFlowResult(const FlowLogProb& f) {
  FlowResult r;
  r.logp = f.logp.scalar();
  r.eps_hat = f.eps.value().row(0).transpose();
  r.diag_jac = f.diag_jac.value().row(0).transpose();
  return r;
}

RowMatrix AsRow(const Vector& v) { return v.transpose(); }

}  // namespace

FlowResult FlowZLogProb(const Vector& z_prev, const Vector& z_curr, const ModelParams& params) {
  ad::Tape tape;
  const Bound p = Bind(tape, params, false);
  return ToFlowResult(FlowZLogProb(p, tape.Constant(AsRow(z_prev)), tape.Constant(AsRow(z_curr))));
}

FlowResult FlowSLogProb(const Vector& z_curr, const Vector& s_curr, const ModelParams& params) {
  ad::Tape tape;
  const Bound p = Bind(tape, params, false);
  return ToFlowResult(FlowSLogProb(p, tape.Constant(AsRow(z_curr)), tape.Constant(AsRow(s_curr))));
}

FlowJacobians FlowZJacobians(const Vector& z_prev, const Vector& z_curr, const ModelParams& params) {
  ad::Tape tape;
  const Bound p = Bind(tape, params, false);
  const FlowJacobianColumns c = FlowZJacobianColumns(p, tape.Constant(AsRow(z_prev)), tape.Constant(AsRow(z_curr)));
  const Index dz = params.config().d_z;
  return {UnstackColumns(c.curr.value(), 1, dz)[0], UnstackColumns(c.prev.value(), 1, dz)[0]};
}

RowMatrix DecoderJacobian(const ModelParams& params, const Vector& z, const Vector& s) {
  ad::Tape tape;
  const Bound p = Bind(tape, params, false);
  const Var cols = DecoderJacobianColumns(p, tape.Constant(AsRow(z)), tape.Constant(AsRow(s)));
  return UnstackColumns(cols.value(), 1, params.config().d_x)[0];
}

}  // namespace cadre::model
