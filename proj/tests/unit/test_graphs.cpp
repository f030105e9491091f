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

#include "cadre/core/error.h"
#include "cadre/core/rng.h"
#include "cadre/graphs/graphs.h"
#include "cadre/objective/objective.h"
#include "doctest.h"
#include "test_util.h"

using namespace cadre;
using namespace cadre::graphs;

namespace {

ErrorKind KindOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kInvalidInput;
}

RowMatrix RandomLowerSem(Index d, Rng& rng) {
  RowMatrix B = RowMatrix::Zero(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < i; ++j)
      if (rng.Uniform() < 0.5) B(i, j) = rng.Uniform(0.5, 1.5) * (rng.Uniform() < 0.5 ? -1.0 : 1.0);
  return B;
}

}  // namespace

TEST_CASE("observation graph hand examples") {
  CHECK(ObservationGraph(RowMatrix::Identity(4, 4)).isZero());
  RowMatrix J(2, 2), expect(2, 2);
  J << 1, 0, 0.7, 1;
  expect << 0, 0, 0.7, 0;
  const RowMatrix g = ObservationGraph(J);
  CHECK(testing::MaxAbsDiff(g, expect) < 1e-15);
  CHECK(FunctionalEquivalenceResidual(g, J) < 1e-15);
  CHECK(FunctionalEquivalenceResidual(RowMatrix::Zero(2, 2), J) > 0.1);
  // A scaled Jordan block stays ill-conditioned after the ridge.
  RowMatrix bad = RowMatrix::Zero(2, 2);
  bad(0, 1) = 100.0;
  CHECK(KindOf([&] { ObservationGraph(bad); }) == ErrorKind::kSingularMixing);
  CHECK_NOTHROW(ObservationGraph(RowMatrix::Zero(3, 3)));
  CHECK(KindOf([] { ObservationGraph(RowMatrix::Zero(2, 3)); }) == ErrorKind::kNonSquare);
  double ridge = -1.0;
  RowMatrix near(2, 2);
  near << 1, 1, 1, 1 + 1e-14;
  ObservationGraph(near, 0.0, &ridge);
  CHECK(ridge == 1e-6);
}

TEST_CASE("residual of the raw corollary formula on random matrices") {
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    const Index d = 2 + k % 9;
    const RowMatrix J = rng.NormalMatrix(d, d) + 3.0 * RowMatrix::Identity(d, d);
    const RowMatrix D = J.diagonal().asDiagonal();
    const RowMatrix Jg = RowMatrix::Identity(d, d) - D * J.inverse();
    CHECK(FunctionalEquivalenceResidual(Jg, J) <= 1e-10);
  }
}

TEST_CASE("two-node SEM unrolls to the substituted mixing") {
  Sem sem;
  sem.d_z = 1;
  sem.nodes.resize(2);
  sem.nodes[0].parents = {1};
  sem.nodes[0].f = [](const std::vector<Dual>& p, const std::vector<Dual>&, const Dual& s) { return 0.5 * p[0] + s; };
  sem.nodes[1].f = [](const std::vector<Dual>&, const std::vector<Dual>& z, const Dual& s) { return z[0] + s; };
  sem.order = {1, 0};
  const UnrolledSem u = UnrollSem(sem);
  CHECK(u.verification_error <= 1e-12);
  const Vector z = Vector::Constant(1, 1.0);
  Vector s(2);
  s << 2.0, 3.0;
  const Vector x = u.mix(z, s);
  CHECK(x(0) == doctest::Approx(0.5 * (1.0 + 3.0) + 2.0));
  CHECK(x(1) == doctest::Approx(4.0));
  CHECK(testing::MaxAbsDiff(x, EvaluateSemDirect(sem, z, s)) < 1e-15);
  RowMatrix J(2, 2);
  J << 1, 0.5, 0, 1;
  CHECK(testing::MaxAbsDiff(u.jacobian_s(z, s), J) < 1e-15);
}

TEST_CASE("empty SEM gives a diagonal Jacobian") {
  Sem sem;
  sem.d_z = 1;
  sem.nodes.resize(3);
  for (auto& n : sem.nodes)
    n.f = [](const std::vector<Dual>&, const std::vector<Dual>& z, const Dual& s) { return Tanh(s) + z[0]; };
  sem.order = {0, 1, 2};
  const UnrolledSem u = UnrollSem(sem);
  Vector s(3);
  s << 0.1, -0.4, 1.2;
  const RowMatrix J = u.jacobian_s(Vector::Zero(1), s);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j)
      CHECK(J(i, j) == doctest::Approx(i == j ? 1.0 - std::tanh(s(i)) * std::tanh(s(i)) : 0.0));
}

TEST_CASE("linear SEM Jacobian is the inverse of I - B and round-trips") {
  Rng rng(11);
  for (Index d = 2; d <= 10; ++d) {
    const RowMatrix B = RandomLowerSem(d, rng);
    const UnrolledSem u = UnrollSem(LinearSem(B, rng.NormalMatrix(d, 2)));
    const RowMatrix J = u.jacobian_s(rng.NormalMatrix(2, 1), rng.NormalMatrix(d, 1));
    const RowMatrix inv = (RowMatrix::Identity(d, d) - B).inverse();
    CHECK(testing::MaxAbsDiff(J, inv) < 1e-10);
    CHECK(testing::MaxAbsDiff(ObservationGraph(J), B) < 1e-8);
    CHECK(objective::DagPenalty(Support(B)) == doctest::Approx(0.0));
  }
}

TEST_CASE("cyclic SEMs are rejected") {
  Sem sem;
  sem.d_z = 0;
  sem.nodes.resize(2);
  sem.nodes[0].parents = {1};
  sem.nodes[1].parents = {0};
  for (auto& n : sem.nodes)
    n.f = [](const std::vector<Dual>& p, const std::vector<Dual>&, const Dual& s) { return 0.5 * p[0] + s; };
  sem.order = {0, 1};
  CHECK(KindOf([&] { UnrollSem(sem); }) == ErrorKind::kCyclicSem);
  sem.nodes[1].parents.clear();
  sem.nodes[1].f = [](const std::vector<Dual>&, const std::vector<Dual>&, const Dual& s) { return s; };
  CHECK(KindOf([&] { UnrollSem(sem); }) == ErrorKind::kCyclicSem);  // order lists the child first
  sem.order = {1, 0};
  CHECK_NOTHROW(UnrollSem(sem));
}

TEST_CASE("threshold graph") {
  CHECK(ThresholdGraph(RowMatrix::Zero(3, 3), nullptr, 0.15).isZero());
  RowMatrix J(1, 3);
  J << 0.15, 0.1501, -0.2;
  RowMatrix expect(1, 3);
  expect << 0, 1, 1;
  CHECK(ThresholdGraph(J, nullptr, 0.15) == expect);
  RowMatrix mask(1, 3);
  mask << 1, 1, 0;
  J(0, 0) = 0.9;
  CHECK(ThresholdGraph(J, &mask, 0.15) == (RowMatrix(1, 3) << 1, 1, 0).finished());
  CHECK_THROWS_AS(ThresholdGraph(J, nullptr, 0.0), Error);
  const RowMatrix r = testing::RandomMatrix(6, 6, 5);
  RowMatrix prev = ThresholdGraph(r, nullptr, 0.01);
  for (double tau = 0.05; tau < 3.0; tau += 0.05) {
    const RowMatrix cur = ThresholdGraph(r, nullptr, tau);
    CHECK((cur.array() <= prev.array()).all());
    prev = cur;
  }
}

TEST_CASE("SAR mask radius rule") {
  const RowMatrix x = testing::RandomMatrix(50, 2, 1);
  RowMatrix near(2, 2), far(2, 2);
  near << 0, 0, 0, 30;
  far << 0, 0, 0, 60;
  const SpatialMask a = SarMask(near, 50.0, x);
  CHECK(a.M_loc(0, 1) == 1.0);
  CHECK(a.M_loc(1, 0) == 1.0);
  CHECK(a.M_loc.diagonal().isZero());
  const SpatialMask b = SarMask(far, 50.0, x);
  CHECK(b.M_loc.isZero());
  CHECK(b.degenerate_columns == 2);
  CHECK(b.M_init.isZero());
}

TEST_CASE("SAR mask keeps a planted strong dependency") {
  RowMatrix coords(4, 2);
  coords << 0, 0, 10, 0, 20, 0, 30, 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RowMatrix x = testing::RandomMatrix(2000, 4, seed);
    x.col(2) = 0.9 * x.col(1) + 0.3 * x.col(2);
    const SpatialMask m = SarMask(coords, 50.0, x);
    CHECK(testing::MaxAbsDiff(m.M_loc, m.M_loc.transpose()) == 0.0);
    CHECK(m.M_init(1, 2) == 1.0);
    CHECK(m.degenerate_columns == 0);
  }
}

TEST_CASE("decoder Jacobian matches finite differences and ignores z without z weights") {
  model::ModelConfig c;
  c.d_x = 4;
  c.d_z = 2;
  model::ModelParams p = model::ModelParams::Init(c, 4);
  const Vector z = testing::RandomMatrix(2, 1, 1), s = testing::RandomMatrix(4, 1, 2);
  const RowMatrix J = graphs::DecoderJacobian(p, z, s);
  const RowMatrix num = testing::NumericJacobian(
      [&](const Vector& v) {
        return Vector(model::Decode(RowMatrix(z.transpose()), RowMatrix(v.transpose()), p).transpose());
      },
      s);
  CHECK(testing::RelErr(J, num) <= 1e-4);
  p.tensor(p.layout().dec.Wz).setZero();
  CHECK(testing::MaxAbsDiff(graphs::DecoderJacobian(p, z, s), graphs::DecoderJacobian(p, Vector(-3.0 * z), s)) == 0.0);
}

TEST_CASE("extraction on untrained parameters") {
  model::ModelConfig c;
  c.d_x = 4;
  c.d_z = 3;
  const model::ModelParams p = model::ModelParams::Init(c, 9);
  const RowMatrix x = testing::RandomMatrix(400, 4, 3);
  ExtractOptions o;
  const Extraction e = ExtractGraphs(p, x, o);
  CHECK(e.bundle.eval_points == 100);
  CHECK(e.graphs.latent_inst.rows() == 3);
  CHECK(e.graphs.latent_lag.cols() == 3);
  CHECK(e.graphs.latent_inst.diagonal().isZero());
  CHECK(e.graphs.obs_graph.diagonal().isZero());
  CHECK(e.bundle.J_g.diagonal().isZero());
  CHECK(e.bundle.D_m == RowMatrix(e.bundle.J_m.diagonal().asDiagonal()));
  CHECK(((e.graphs.obs_graph.array() == 0.0) || (e.graphs.obs_graph.array() == 1.0)).all());

  ExtractOptions huge = o;
  huge.tau = 1e300;
  const Extraction none = ExtractGraphs(p, x, huge);
  CHECK(none.graphs.obs_graph.isZero());
  CHECK(none.graphs.latent_lag.isZero());
  ExtractOptions tiny = o;
  tiny.tau = 1e-12;
  const Extraction dense = ExtractGraphs(p, x, tiny);
  CHECK((dense.graphs.obs_graph.array() >= e.graphs.obs_graph.array()).all());
  CHECK((dense.graphs.latent_lag.array() >= e.graphs.latent_lag.array()).all());

  const RowMatrix mask = RowMatrix::Zero(4, 4);
  ExtractOptions masked = tiny;
  masked.mask = &mask;
  CHECK(ExtractGraphs(p, x, masked).graphs.obs_graph.isZero());
}

TEST_CASE("identity flows give empty latent graphs") {
  model::ModelConfig c;
  c.d_x = 3;
  c.d_z = 2;
  model::ModelParams p = model::ModelParams::Init(c, 2);
  p.SetFlowsToIdentity();
  const Extraction e = ExtractGraphs(p, testing::RandomMatrix(100, 3, 1), ExtractOptions{});
  CHECK(e.graphs.latent_inst.isZero());
  CHECK(e.graphs.latent_lag.isZero());
}
