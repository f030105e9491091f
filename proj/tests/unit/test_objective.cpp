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

#include <filesystem>
#include <fstream>

#include "cadre/core/error.h"
#include "cadre/core/linalg.h"
#include "cadre/core/rng.h"
#include "cadre/dgp/dgp.h"
#include "cadre/objective/objective.h"
#include "doctest.h"
#include "test_util.h"

using namespace cadre;
using namespace cadre::objective;

namespace {

model::ModelConfig Config(int dx, int dz) {
  model::ModelConfig c;
  c.d_x = dx;
  c.d_z = dz;
  return c;
}

Batch TinyBatch(std::uint64_t seed, int dx = 3) {
  const RowMatrix x = testing::RandomMatrix(4, dx, seed);
  return MakeBatch(x, {0, 1, 2}, 2);
}

}  // namespace

TEST_CASE("markov transform") {
  CHECK(MarkovTransform(RowMatrix::Zero(3, 3)).isZero());
  RowMatrix J(2, 2), expect(2, 2);
  J << 0, 0, 1, 0;
  expect << 1, 1, 1, 0;
  CHECK(MarkovTransform(J) == expect);
  RowMatrix J2(2, 2), e2(2, 2);
  J2 << 0.2, -0.4, 1.1, 0.3;
  e2 << 1.65, 0.95, 0.95, 0.85;  // numpy: (I+J)^T (I+J) - I
  CHECK(testing::MaxAbsDiff(MarkovTransform(J2), e2) < 1e-14);
  const RowMatrix r = testing::RandomMatrix(5, 5, 1);
  const RowMatrix m = MarkovTransform(r);
  CHECK(testing::MaxAbsDiff(m, m.transpose()) < 1e-14);
  CHECK_THROWS_AS(MarkovTransform(RowMatrix::Zero(2, 3)), Error);
}

TEST_CASE("sparsity penalty") {
  const RowMatrix z3 = RowMatrix::Zero(3, 3), z4 = RowMatrix::Zero(4, 4);
  CHECK(SparsityPenalty(z3, z3, z4) == 0.0);
  RowMatrix g = z4;
  g(1, 2) = 0.5;
  CHECK(SparsityPenalty(z3, z3, g) == 0.5);
  const RowMatrix jg = testing::RandomMatrix(4, 4, 2), jc = testing::RandomMatrix(3, 3, 3);
  const double base = SparsityPenalty(jc, jc, z4);
  for (double c : {-2.0, 0.5, 3.0})
    CHECK(SparsityPenalty(jc, jc, c * jg) - base == doctest::Approx(std::abs(c) * jg.cwiseAbs().sum()));
  CHECK(SparsityPenalty(z3, jc, z4, false) == doctest::Approx(jc.cwiseAbs().sum()));
  CHECK_THROWS_AS(SparsityPenalty(z3, z4, z4), Error);
  CHECK_THROWS_AS(SparsityPenalty(z3, z3, RowMatrix::Zero(4, 3)), Error);
}

TEST_CASE("dag penalty closed forms") {
  RowMatrix two(2, 2);
  two << 0, 1, 1, 0;
  CHECK(DagPenalty(two) == doctest::Approx(0.5).epsilon(1e-12));
  RowMatrix three(3, 3);
  three << 0, 0.5, 0, 0, 0, 1.2, 0.3, 0, 0;
  CHECK(DagPenalty(three) == doctest::Approx(0.0036000000000004917).epsilon(1e-9));  // numpy
  RowMatrix four = RowMatrix::Zero(4, 4);
  four(0, 1) = four(1, 2) = four(2, 3) = four(3, 0) = 1.0;
  CHECK(DagPenalty(four) == doctest::Approx(0.015625).epsilon(1e-12));  // numpy
  RowMatrix lower = testing::RandomMatrix(6, 6, 4).triangularView<Eigen::StrictlyLower>();
  CHECK(std::abs(DagPenalty(lower)) < 1e-9);
  CHECK_THROWS_AS(DagPenalty(RowMatrix::Zero(2, 3)), Error);
}

TEST_CASE("dag penalty is zero exactly on acyclic 3x3 supports") {
  const int off[6][2] = {{0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}};
  int acyclic = 0;
  for (int mask = 0; mask < 64; ++mask) {
    RowMatrix a = RowMatrix::Zero(3, 3);
    for (int b = 0; b < 6; ++b)
      if (mask & (1 << b)) a(off[b][0], off[b][1]) = 1.0;
    const double v = DagPenalty(a);
    const bool cyclic = HasCycleByPathEnumeration(a);
    CHECK(v >= -1e-12);
    if (cyclic) CHECK(v > 1e-9);
    else CHECK(std::abs(v) <= 1e-9);
    acyclic += !cyclic;
  }
  CHECK(acyclic == 25);
}

TEST_CASE("tape penalties match the plain versions and their gradients") {
  const RowMatrix a = testing::RandomMatrix(4, 4, 5);
  ad::Tape t;
  ad::Var v = t.Variable(a);
  CHECK(testing::MaxAbsDiff(MarkovTransform(v).value(), MarkovTransform(a)) < 1e-14);
  ad::Var d = DagPenalty(v);
  CHECK(d.scalar() == doctest::Approx(DagPenalty(a)).epsilon(1e-13));
  t.Backward(d);
  const RowMatrix g = t.Grad(v);
  const double h = 1e-6;
  for (Index i = 0; i < a.size(); ++i) {
    RowMatrix ap = a, am = a;
    ap.data()[i] += h;
    am.data()[i] -= h;
    CHECK(g.data()[i] == doctest::Approx((DagPenalty(ap) - DagPenalty(am)) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("matched posterior and prior give zero loss terms") {
  model::ModelParams p = model::ModelParams::Zeros(Config(3, 2));
  p.SetFlowsToIdentity();
  const Batch b = MakeBatch(RowMatrix::Zero(6, 3), {0, 2, 4}, 2);
  TrainConfig cfg;
  const LossReport r = Elbo(b, p, cfg, 1);
  CHECK(r.recon == 0.0);
  CHECK(std::abs(r.kl_z) < 1e-6);
  CHECK(std::abs(r.kl_s) < 1e-6);
}

TEST_CASE("loss weights act linearly") {
  const model::ModelParams p = model::ModelParams::Init(Config(3, 2), 1);
  const Batch b = TinyBatch(2);
  TrainConfig cfg;
  const LossReport base = TotalLoss(b, p, cfg, 3);
  TrainConfig doubled = cfg;
  doubled.lambda1 *= 2;
  const LossReport d = TotalLoss(b, p, doubled, 3);
  CHECK(d.total - base.total == doctest::Approx(cfg.lambda1 * base.kl_s).epsilon(1e-9));
  CHECK(d.kl_s == base.kl_s);
  CHECK(d.recon == base.recon);
  CHECK(d.kl_z == base.kl_z);
  TrainConfig no_pen = cfg;
  no_pen.alpha = no_pen.beta = 0.0;
  CHECK(TotalLoss(b, p, no_pen, 3).total == doctest::Approx(Elbo(b, p, cfg, 3).total).epsilon(1e-14));
  CHECK(base.total == doctest::Approx(base.recon + cfg.lambda1 * base.kl_s + cfg.lambda2 * base.kl_z +
                                      cfg.alpha * base.sparsity + cfg.beta * base.dag)
                          .epsilon(1e-12));
  CHECK(base.sparsity >= 0.0);
  CHECK(base.dag >= -1e-12);
}

TEST_CASE("diagonal networks have zero penalties") {
  model::ModelParams p = model::ModelParams::Init(Config(3, 2), 1);
  p.SetFlowsToIdentity();
  const auto& dec = p.layout().dec;
  p.tensor(dec.Wz).setZero();
  p.tensor(dec.Ws) = RowMatrix::Identity(3, 3) * 0.7;
  p.tensor(dec.out.W) = RowMatrix::Identity(3, 3) * 1.3;
  const LossReport r = TotalLoss(TinyBatch(4), p, TrainConfig{}, 5);
  CHECK(std::abs(r.sparsity) < 1e-12);
  CHECK(std::abs(r.dag) < 1e-12);
}

TEST_CASE("single-sample KL matches the closed form on average") {
  model::ModelParams p = model::ModelParams::Init(Config(3, 2), 6);
  p.SetFlowsToIdentity();
  const Batch b = MakeBatch(2.0 * testing::RandomMatrix(6, 3, 7), {0, 2, 4}, 2);
  const model::PosteriorSample post = model::Encode(b.x, p, 0);
  auto closed = [](const RowMatrix& mu, const RowMatrix& lv, Index from) {
    double kl = 0.0;
    for (Index r = from; r < mu.rows(); ++r)
      for (Index c = 0; c < mu.cols(); ++c)
        kl += 0.5 * (std::exp(lv(r, c)) + mu(r, c) * mu(r, c) - 1.0 - lv(r, c));
    return kl / static_cast<double>(mu.rows() - from);
  };
  const double kl_z = closed(post.z_mean, post.z_logvar, b.windows);
  const double kl_s = closed(post.s_mean, post.s_logvar, 0);
  REQUIRE(kl_z > 0.05);
  REQUIRE(kl_s > 0.05);
  double mz = 0.0, ms = 0.0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const LossReport r = Elbo(b, p, TrainConfig{}, static_cast<std::uint64_t>(k));
    mz += r.kl_z;
    ms += r.kl_s;
  }
  // The Jacobian floor shifts each coordinate by log(1 + 1e-8).
  CHECK(mz / n == doctest::Approx(kl_z).epsilon(0.02));
  CHECK(ms / n == doctest::Approx(kl_s).epsilon(0.02));
}

TEST_CASE("total loss gradient matches central differences") {
  // Narrow flows keep the full coordinate sweep cheap.
  model::ModelConfig c = Config(3, 2);
  c.flow_hidden = 16;
  for (std::uint64_t point = 0; point < 5; ++point) {
    const model::ModelParams p = model::ModelParams::Init(c, 100 + point);
    const Batch b = TinyBatch(200 + point);
    const TrainConfig cfg;
    Vector grad;
    Gradient(b, p, cfg, 7, &grad);
    const Vector flat = p.Flatten();
    Vector num(flat.size());
    model::ModelParams q = p;
    const double h = 1e-6;
    for (Index i = 0; i < flat.size(); ++i) {
      Vector v = flat;
      v(i) = flat(i) + h;
      q.Unflatten(v);
      const double lp = TotalLoss(b, q, cfg, 7).total;
      v(i) = flat(i) - h;
      q.Unflatten(v);
      const double lm = TotalLoss(b, q, cfg, 7).total;
      num(i) = (lp - lm) / (2 * h);
    }
    CHECK((grad - num).norm() / std::max(num.norm(), 1e-12) <= 1e-3);
  }
}

TEST_CASE("gradient at the default width on sampled coordinates") {
  const model::ModelParams p = model::ModelParams::Init(Config(3, 2), 12);
  const Batch b = TinyBatch(13);
  const TrainConfig cfg;
  Vector grad;
  Gradient(b, p, cfg, 3, &grad);
  const Vector flat = p.Flatten();
  Rng rng(14);
  // Every tensor contributes its first entry, plus random picks.
  std::vector<Index> picks;
  Index off = 0;
  for (std::size_t t = 0; t < p.num_tensors(); ++t) {
    picks.push_back(off);
    off += p.tensor(static_cast<int>(t)).size();
  }
  for (int k = 0; k < 200; ++k) picks.push_back(static_cast<Index>(rng.Below(static_cast<std::uint64_t>(flat.size()))));
  Vector a(static_cast<Index>(picks.size())), n(a.size());
  model::ModelParams q = p;
  const double h = 1e-6;
  for (std::size_t k = 0; k < picks.size(); ++k) {
    const Index i = picks[k];
    Vector v = flat;
    v(i) = flat(i) + h;
    q.Unflatten(v);
    const double lp = TotalLoss(b, q, cfg, 3).total;
    v(i) = flat(i) - h;
    q.Unflatten(v);
    const double lm = TotalLoss(b, q, cfg, 3).total;
    a(static_cast<Index>(k)) = grad(i);
    n(static_cast<Index>(k)) = (lp - lm) / (2 * h);
  }
  CHECK((a - n).norm() / std::max(n.norm(), 1e-12) <= 1e-3);
}

TEST_CASE("non-finite parameters raise NonFiniteLoss") {
  model::ModelParams p = model::ModelParams::Init(Config(3, 2), 1);
  p.tensor(p.layout().dec.out.b)(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    TotalLoss(TinyBatch(1), p, TrainConfig{}, 0);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNonFiniteLoss);
  }
}

TEST_CASE("train config validation and json") {
  TrainConfig c;
  c.steps = 17;
  c.markov_on_lagged = false;
  CHECK(TrainConfigFromJson(TrainConfigToJson(c)) == c);
  TrainConfig bad = c;
  bad.alpha = -1;
  CHECK_THROWS_AS(bad.Validate(), Error);
  bad = c;
  bad.tau = 0.0;
  CHECK_THROWS_AS(bad.Validate(), Error);
  bad.tau = 1.5;
  CHECK_THROWS_AS(bad.Validate(), Error);
  CHECK_THROWS_AS(TrainConfigFromJson(nlohmann::json{{"nope", 1}}), Error);
}

TEST_CASE("batches are time-major windows") {
  RowMatrix x(6, 1);
  x << 0, 1, 2, 3, 4, 5;
  const Batch b = MakeBatch(x, {0, 3}, 3);
  RowMatrix expect(6, 1);
  expect << 0, 3, 1, 4, 2, 5;
  CHECK(b.x == expect);
  CHECK(b.windows == 2);
  const std::vector<Index> starts = SampleWindowStarts(100, 2, 500, 9);
  for (Index s : starts) CHECK((s >= 0 && s <= 98));
  CHECK(starts == SampleWindowStarts(100, 2, 500, 9));
  CHECK(TrainingSpan(10000, TrainConfig{}) == 10000 - 256);
  CHECK(TrainingSpan(400, TrainConfig{}) == 300);
}

TEST_CASE("training log, checkpoints and resume") {
  const std::string dir = testing::ScratchDir("train");
  dgp::DgpOptions o;
  o.d_x = 3;
  o.d_z = 2;
  o.T = 200;
  const RowMatrix x = dgp::MakeDataset(dgp::MakeSpec(o)).x;
  const model::ModelParams init = model::ModelParams::Init(Config(3, 2), 1);
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.checkpoint_every = 10;
  cfg.batch_windows = 8;

  TrainOptions full;
  full.log_path = dir + "/full.csv";
  const TrainResult whole = Train(x, init, cfg, full);
  CHECK(whole.steps_done == 20);
  CHECK(whole.history.size() == 20u);
  std::ifstream in(full.log_path);
  std::string line;
  int rows = -1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 20);

  TrainOptions part;
  part.log_path = dir + "/part.csv";
  part.checkpoint_path = dir + "/ckpt";
  part.stop_after = 10;
  const TrainResult first = Train(x, init, cfg, part);
  CHECK(first.steps_done == 10);
  CHECK(std::filesystem::exists(part.checkpoint_path));
  part.stop_after = -1;
  const TrainResult rest = Resume(x, part.checkpoint_path, cfg, part);
  CHECK(rest.steps_done == 20);
  REQUIRE(rest.history.size() == 10u);
  for (int i = 0; i < 10; ++i) {
    CHECK(rest.history[static_cast<std::size_t>(i)].step == whole.history[static_cast<std::size_t>(10 + i)].step);
    CHECK(rest.history[static_cast<std::size_t>(i)].loss.total ==
          whole.history[static_cast<std::size_t>(10 + i)].loss.total);
  }
  CHECK(rest.params == whole.params);
  std::ifstream in2(part.log_path);
  rows = -1;
  while (std::getline(in2, line)) ++rows;
  CHECK(rows == 20);
}

TEST_CASE("smoothed loss decreases on the default instance") {
  dgp::DgpOptions o;
  o.T = 10000;
  const RowMatrix x = dgp::MakeDataset(dgp::MakeSpec(o)).x;
  TrainConfig cfg;
  cfg.steps = 2000;
  const TrainResult r = Train(x, model::ModelParams::Init(Config(6, 3), 0), cfg);
  auto smooth = [&](int step) {
    double s = 0.0;
    for (int k = step - 100; k < step; ++k) s += r.history[static_cast<std::size_t>(k)].loss.total;
    return s / 100.0;
  };
  CHECK(smooth(2000) < smooth(100));
}
