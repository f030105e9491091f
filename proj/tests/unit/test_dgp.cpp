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

#include "cadre/core/archive.h"
#include "cadre/core/error.h"
#include "cadre/core/linalg.h"
#include "cadre/dgp/dgp.h"
#include "doctest.h"
#include "test_util.h"

using namespace cadre;
using namespace cadre::dgp;

namespace {

DgpOptions Small(int dx, int dz, int T, std::uint64_t seed = 0) {
  DgpOptions o;
  o.d_x = dx;
  o.d_z = dz;
  o.T = T;
  o.seed = seed;
  return o;
}

double Lrelu(double v) { return v > 0 ? v : 0.2 * v; }

}  // namespace

TEST_CASE("sample_er_dag edge cases") {
  CHECK(SampleErDag(1, 1.0, 5) == RowMatrix::Zero(1, 1));
  CHECK(SampleErDag(3, 0.0, 0) == RowMatrix::Zero(3, 3));
  const RowMatrix g = SampleErDag(6, 1.5, 7);
  CHECK_FALSE(HasCycleByPathEnumeration(g));
  CHECK(g.diagonal().isZero());
}

TEST_CASE("sample_er_dag is acyclic and hits its expected degree") {
  double edges = 0.0;
  const int trials = 400, d = 8;
  for (int s = 0; s < trials; ++s) {
    const RowMatrix g = SampleErDag(d, 1.0, static_cast<std::uint64_t>(s));
    CHECK_FALSE(HasCycleByPathEnumeration(g));
    edges += g.sum();
  }
  CHECK(edges / trials == doctest::Approx(1.0 * d).epsilon(0.1));
}

TEST_CASE("edge weight schedule") {
  CHECK(EdgeWeightSchedule(0, 0.3, 0.5, 100) == doctest::Approx(0.8));
  CHECK(EdgeWeightSchedule(25, 0.3, 0.5, 100) == doctest::Approx(0.5));
  CHECK(EdgeWeightSchedule(50, 0.3, 0.5, 100) == doctest::Approx(0.2));
}

TEST_CASE("pure-noise latent process") {
  DGPSpec spec = MakeSpec(Small(3, 2, 50));
  spec.W = {RowMatrix::Zero(2, 2)};
  spec.B_z = RowMatrix::Zero(2, 2);
  const LatentTrace tr = SimulateLatent(spec);
  CHECK(tr.z == tr.eps_z);
}

TEST_CASE("single latent step matches the hand-computed 2x2 inverse") {
  DgpOptions o = Small(3, 2, 2, 11);
  o.setting = SparsitySetting::kDense;
  DGPSpec spec = MakeSpec(o);
  RowMatrix W(2, 2), B(2, 2);
  W << 0.5, -0.3, 0.8, 0.1;
  B << 0.0, 0.0, 0.6, 0.0;  // z_1 -> z_2
  spec.W = {W};
  spec.B_z = B;
  const LatentTrace tr = SimulateLatent(spec);
  const double z0a = tr.z(0, 0), z0b = tr.z(0, 1);
  const double h1 = Lrelu(0.5 * z0a - 0.3 * z0b) + tr.eps_z(1, 0);
  const double h2 = Lrelu(0.8 * z0a + 0.1 * z0b) + tr.eps_z(1, 1);
  // (I - B)^{-1} = [[1, 0], [0.6, 1]] for this unitriangular B.
  CHECK(tr.z(1, 0) == doctest::Approx(h1).epsilon(1e-14));
  CHECK(tr.z(1, 1) == doctest::Approx(0.6 * h1 + h2).epsilon(1e-14));
}

TEST_CASE("simulation is deterministic") {
  const DGPSpec spec = MakeSpec(Small(6, 3, 300, 4));
  const Dataset a = MakeDataset(spec), b = MakeDataset(spec);
  CHECK(a.x == b.x);
  CHECK(*a.z == *b.z);
  CHECK(*a.s == *b.s);
  CHECK(MakeSpec(Small(6, 3, 300, 4)).mix.A == spec.mix.A);
}

TEST_CASE("observations without a graph skip injection") {
  DGPSpec spec = MakeSpec(Small(4, 2, 40, 2));
  spec.obs_dag.setZero();
  spec.obs_weights.setZero();
  const LatentTrace lt = SimulateLatent(spec);
  const ObservationTrace ot = SimulateObservations(spec, lt.z);
  CHECK(ot.x == ot.x_pre);
  for (Index t = 0; t < 40; ++t) {
    const Vector x = Mix(spec, lt.z.row(t).transpose(), ot.s.row(t).transpose()) + ot.s.row(t).transpose();
    CHECK(testing::MaxAbsDiff(x.transpose(), ot.x.row(t)) == 0.0);
  }
}

TEST_CASE("single edge injection adds exactly the parent contribution") {
  DgpOptions o = Small(2, 1, 30, 3);
  o.a1 = 0.0;
  o.a2 = 1.0;
  DGPSpec spec = MakeSpec(o);
  spec.obs_dag = RowMatrix::Zero(2, 2);
  spec.obs_dag(0, 1) = 1.0;
  spec.obs_weights = spec.obs_dag;
  const LatentTrace lt = SimulateLatent(spec);
  const ObservationTrace ot = SimulateObservations(spec, lt.z);
  for (Index t = 0; t < 30; ++t) {
    CHECK(ot.x(t, 0) == ot.x_pre(t, 0));
    CHECK(ot.x(t, 1) == doctest::Approx(ot.x_pre(t, 1) + ot.x(t, 0)).epsilon(1e-14));
  }
}

TEST_CASE("injection with time-varying weights on random single edges") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    DGPSpec spec = MakeSpec(Small(4, 2, 20, seed));
    Rng rng(seed);
    const int j = static_cast<int>(rng.Below(3));
    const int i = j + 1 + static_cast<int>(rng.Below(static_cast<std::uint64_t>(3 - j)));
    spec.obs_dag.setZero();
    spec.obs_dag(j, i) = 1.0;
    spec.obs_weights.setZero();
    spec.obs_weights(j, i) = -0.9;
    const LatentTrace lt = SimulateLatent(spec);
    const ObservationTrace ot = SimulateObservations(spec, lt.z);
    for (Index t = 0; t < 20; ++t) {
      const double alpha = EdgeWeightSchedule(static_cast<int>(t), spec.options.a1, spec.options.a2, 20);
      for (int k = 0; k < 4; ++k) {
        const double expect = ot.x_pre(t, k) + (k == i ? alpha * -0.9 * ot.x(t, j) : 0.0);
        CHECK(ot.x(t, k) == doctest::Approx(expect).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("simulate_observations rejects wrong latent shapes") {
  const DGPSpec spec = MakeSpec(Small(3, 2, 10));
  CHECK_THROWS_AS(SimulateObservations(spec, RowMatrix::Zero(10, 3)), Error);
  try {
    SimulateObservations(spec, RowMatrix::Zero(9, 2));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInvalidLatents);
  }
}

TEST_CASE("unstable transition raises DivergedTrajectory") {
  DGPSpec spec = MakeSpec(Small(3, 2, 500));
  spec.W = {RowMatrix::Identity(2, 2) * 3.0};
  try {
    SimulateLatent(spec);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDivergedTrajectory);
  }
}

TEST_CASE("make_dataset shape contract and ground truth") {
  const Dataset d = MakeDataset(MakeSpec(Small(6, 3, 200)));
  CHECK(d.z->rows() == 200);
  CHECK(d.z->cols() == 3);
  CHECK(d.x.rows() == 200);
  CHECK(d.x.cols() == 6);
  CHECK(d.x.allFinite());
  CHECK(*d.true_obs == Support(d.spec->obs_dag));
  CHECK(d.true_latent_inst->isZero());  // Independent setting
}

TEST_CASE("every generated observation graph is acyclic") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    DgpOptions o = Small(8, 3, 10, seed);
    o.obs_degree = 2.0;
    o.setting = static_cast<SparsitySetting>(seed % 3);
    const DGPSpec spec = MakeSpec(o);
    CHECK_FALSE(HasCycleByPathEnumeration(spec.obs_dag));
    CHECK_FALSE(HasCycleByPathEnumeration(Support(RowMatrix(spec.B_z.transpose()))));
  }
}

TEST_CASE("dense latent graphs have more Markov edges than sparse ones") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    DgpOptions o = Small(6, 4, 10, seed);
    o.setting = SparsitySetting::kSparse;
    const DGPSpec sparse = MakeSpec(o);
    o.setting = SparsitySetting::kDense;
    const DGPSpec dense = MakeSpec(o);
    auto markov_edges = [](const DGPSpec& s) {
      const RowMatrix b = Support(s.B_z);
      const RowMatrix m = b + b.transpose() + Support(RowMatrix(b.transpose() * b));
      double n = 0;
      for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) n += i != j && m(i, j) != 0.0;
      return n;
    };
    CHECK(markov_edges(dense) > markov_edges(sparse));
  }
}

TEST_CASE("independent setting has no contemporaneous latent dependence") {
  const Dataset d = MakeDataset(MakeSpec(Small(6, 3, 10001, 9)));
  const RowMatrix& z = *d.z;
  const RowMatrix& W = d.spec->W.front();
  const Index n = z.rows() - 1;
  // Regress z_t on [z_{t-1}, lrelu(W z_{t-1}), 1] and correlate residuals.
  RowMatrix X(n, 7);
  for (Index t = 0; t < n; ++t) {
    const Vector prev = z.row(t).transpose();
    const Vector pre = W * prev;
    for (int k = 0; k < 3; ++k) {
      X(t, k) = prev(k);
      X(t, 3 + k) = Lrelu(pre(k));
    }
    X(t, 6) = 1.0;
  }
  const RowMatrix Y = z.bottomRows(n);
  const RowMatrix coef = X.colPivHouseholderQr().solve(Y);
  const RowMatrix resid = Y - X * coef;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      const double c = resid.col(i).dot(resid.col(j)) / (resid.col(i).norm() * resid.col(j).norm());
      CHECK(std::abs(c) < 0.05);
    }
}

TEST_CASE("A2 violation yields a uniform-increment random walk") {
  const DGPSpec spec = ApplyViolation(MakeSpec(Small(4, 2, 10000, 1)), Violation::kA2);
  CHECK(spec.options.violation == Violation::kA2);
  const LatentTrace tr = SimulateLatent(spec);
  std::vector<double> inc;
  for (Index t = 1; t < tr.z.rows(); ++t)
    for (int i = 0; i < 2; ++i) inc.push_back(tr.z(t, i) - tr.z(t - 1, i));
  const double lo = *std::min_element(inc.begin(), inc.end()), hi = *std::max_element(inc.begin(), inc.end());
  CHECK(lo >= -1e-9);
  CHECK(hi <= 1.0 + 1e-9);
  double mean = 0, var = 0;
  for (double v : inc) mean += v;
  mean /= static_cast<double>(inc.size());
  for (double v : inc) var += (v - mean) * (v - mean);
  var /= static_cast<double>(inc.size());
  CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
  CHECK(var == doctest::Approx(1.0 / 12.0).epsilon(0.05));
  // Decile occupancy of a U(0, 1) sample.
  std::vector<int> bins(10, 0);
  for (double v : inc) ++bins[static_cast<std::size_t>(std::min(9.0, std::floor(v * 10)))];
  for (int b : bins) CHECK(std::abs(b - 2000) < 200);
}

TEST_CASE("A3 violation makes the mixing linear") {
  const DGPSpec spec = ApplyViolation(MakeSpec(Small(5, 2, 10, 2)), Violation::kA3);
  const Vector s0 = Vector::Zero(5);
  Rng rng(1);
  for (int k = 0; k < 10; ++k) {
    const Vector z = rng.NormalMatrix(2, 1).col(0), dz = rng.NormalMatrix(2, 1).col(0);
    const Vector s = rng.NormalMatrix(5, 1).col(0);
    const Vector diff = Mix(spec, z + dz, s) - Mix(spec, z, s0);
    CHECK(testing::MaxAbsDiff(diff, spec.Q_linear * dz) < 1e-12);
  }
}

TEST_CASE("A5 violation generates s from z plus Gaussian noise") {
  const DGPSpec spec = ApplyViolation(MakeSpec(Small(4, 2, 200, 3)), "A5");
  const Dataset d = MakeDataset(spec);
  const RowMatrix expect = *d.z * spec.q_noise.transpose() + *d.eps_x;
  CHECK(testing::MaxAbsDiff(*d.s, expect) < 1e-12);
  CHECK(d.eps_x->minCoeff() < 0.0);
}

TEST_CASE("violation parsing") {
  const DGPSpec spec = MakeSpec(Small(3, 2, 10));
  const DGPSpec same = ApplyViolation(spec, Violation::kNone);
  CHECK(SpecToJson(same) == SpecToJson(spec));
  CHECK_THROWS_AS(ApplyViolation(spec, "A9"), Error);
  try {
    ParseViolation("bogus");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUnknownViolation);
  }
}

TEST_CASE("spec json round trip") {
  DgpOptions o = Small(5, 3, 30, 8);
  o.setting = SparsitySetting::kSparse;
  o.lag_order = 2;
  const DGPSpec spec = MakeSpec(o);
  const DGPSpec back = SpecFromJson(SpecToJson(spec));
  CHECK(SpecToJson(back) == SpecToJson(spec));
  CHECK(OptionsFromJson(OptionsToJson(o)) == o);
  CHECK_THROWS_AS(OptionsFromJson(nlohmann::json{{"bogus", 1}}), Error);
  CHECK(MakeDataset(back).x == MakeDataset(spec).x);
}

TEST_CASE("dataset archive is byte-identical and loads back") {
  const std::string dir = testing::ScratchDir("dgp_io");
  const Dataset d = MakeDataset(MakeSpec(Small(4, 2, 50, 5)));
  SaveDataset(d, dir + "/a.cadre");
  SaveDataset(MakeDataset(MakeSpec(Small(4, 2, 50, 5))), dir + "/b.cadre");
  CHECK(ReadFileBytes(dir + "/a.cadre") == ReadFileBytes(dir + "/b.cadre"));
  CHECK(std::filesystem::exists(dir + "/a.cadre.spec.json"));
  const Dataset back = LoadDataset(dir + "/a.cadre");
  CHECK(back.x == d.x);
  CHECK(*back.z == *d.z);
  CHECK(*back.true_obs == *d.true_obs);
  CHECK(back.spec.has_value());
  WriteCsv(d, dir + "/x.csv");
  CHECK(std::filesystem::file_size(dir + "/x.csv") > 0u);
}

TEST_CASE("second-order latent process uses both lags") {
  DgpOptions o = Small(4, 2, 3, 6);
  o.lag_order = 2;
  DGPSpec spec = MakeSpec(o);
  REQUIRE(spec.W.size() == 2u);
  spec.B_z.setZero();
  const LatentTrace tr = SimulateLatent(spec);
  CHECK(tr.z.row(0) == tr.eps_z.row(0));
  CHECK(tr.z.row(1) == tr.eps_z.row(1));
  const Vector pre = spec.W[0] * tr.z.row(1).transpose() + spec.W[1] * tr.z.row(0).transpose();
  for (int i = 0; i < 2; ++i) CHECK(tr.z(2, i) == doctest::Approx(Lrelu(pre(i)) + tr.eps_z(2, i)).epsilon(1e-14));
}
