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

#include "cadre/dgp/dgp.h"

#include <cmath>
#include <numbers>

#include "cadre/core/error.h"
#include "cadre/core/linalg.h"
#include "cadre/core/rng.h"

namespace cadre::dgp {
namespace {

constexpr double kGuard = 1e4;

// Sub-seed streams of a spec seed.
enum Stream : std::uint64_t {
  kObsDag = 11,
  kObsWeights,
  kLatentGraph,
  kLatentWeights,
  kTransition,
  kMixing,
  kDependence,
  kLinearMix,
  kNoiseMix,
  kLatentNoise = 101,
  kObsNoise = 202,
};

double Lrelu(double v, double slope) { return v > 0.0 ? v : slope * v; }

RowMatrix SignedUniform(const RowMatrix& support, double lo, double hi, Rng& rng) {
  RowMatrix w = RowMatrix::Zero(support.rows(), support.cols());
  for (Index i = 0; i < support.rows(); ++i) {
    for (Index j = 0; j < support.cols(); ++j) {
      if (support(i, j) == 0.0) continue;
      const double mag = rng.Uniform(lo, hi);
      w(i, j) = rng.Bernoulli(0.5) ? mag : -mag;
    }
  }
  return w;
}

RowMatrix CompleteDag(int d, Rng& rng) {
  const std::vector<int> order = rng.Permutation(d);
  RowMatrix adj = RowMatrix::Zero(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = a + 1; b < d; ++b) adj(order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)]) = 1.0;
  return adj;
}

// Sparse setting: about one edge endpoint per node, never the complete DAG
// when d_z > 1, so it is strictly sparser than Dense.
RowMatrix SparseLatentDag(int d, std::uint64_t seed, Rng& rng) {
  RowMatrix adj = SampleErDag(d, 0.5, seed);
  const double edges = adj.sum();
  const double complete = 0.5 * d * (d - 1);
  if (d > 1 && edges == complete) {
    std::vector<std::pair<Index, Index>> present;
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j)
        if (adj(i, j) != 0.0) present.emplace_back(i, j);
    const auto& drop = present[rng.Below(present.size())];
    adj(drop.first, drop.second) = 0.0;
  }
  return adj;
}

}  // namespace

std::string ToString(SparsitySetting s) {
  switch (s) {
    case SparsitySetting::kIndependent:
      return "independent";
    case SparsitySetting::kSparse:
      return "sparse";
    case SparsitySetting::kDense:
      return "dense";
  }
  return "independent";
}

std::string ToString(Violation v) {
  switch (v) {
    case Violation::kNone:
      return "none";
    case Violation::kA2:
      return "A2";
    case Violation::kA3:
      return "A3";
    case Violation::kA5:
      return "A5";
  }
  return "none";
}

SparsitySetting ParseSparsitySetting(const std::string& name) {
  if (name == "independent" || name == "Independent") return SparsitySetting::kIndependent;
  if (name == "sparse" || name == "Sparse") return SparsitySetting::kSparse;
  if (name == "dense" || name == "Dense") return SparsitySetting::kDense;
  Fail(ErrorKind::kInvalidConfig, "unknown sparsity setting '" + name + "'");
}

Violation ParseViolation(const std::string& name) {
  if (name == "none" || name == "None" || name.empty()) return Violation::kNone;
  if (name == "A2" || name == "a2") return Violation::kA2;
  if (name == "A3" || name == "a3") return Violation::kA3;
  if (name == "A5" || name == "a5") return Violation::kA5;
  Fail(ErrorKind::kUnknownViolation, "unknown violation '" + name + "'");
}

void DGPSpec::Validate() const {
  const auto& o = options;
  Require(o.d_x >= 1 && o.d_z >= 1 && o.T >= 1, ErrorKind::kInvalidInput, "dimensions must be positive");
  Require(o.d_z <= o.d_x, ErrorKind::kInvalidInput, "d_z must not exceed d_x");
  Require(o.lag_order >= 1, ErrorKind::kInvalidInput, "lag_order must be >= 1");
  Require(o.sigma_z > 0.0 && o.sigma_x > 0.0, ErrorKind::kInvalidInput, "noise scales must be positive");
  Require(static_cast<int>(W.size()) == o.lag_order, ErrorKind::kInvalidInput, "one transition matrix per lag");
  for (const RowMatrix& w : W)
    Require(w.rows() == o.d_z && w.cols() == o.d_z, ErrorKind::kShapeMismatch, "transition matrix shape");
  Require(B_z.rows() == o.d_z && B_z.cols() == o.d_z, ErrorKind::kShapeMismatch, "B_z shape");
  Require(IsAcyclic(Support(B_z)), ErrorKind::kInvalidInput, "B_z must be acyclic");
  Require(obs_dag.rows() == o.d_x && obs_dag.cols() == o.d_x, ErrorKind::kShapeMismatch, "obs_dag shape");
  Require(obs_dag.diagonal().isZero(), ErrorKind::kInvalidInput, "obs_dag must have zero diagonal");
  Require(IsAcyclic(obs_dag), ErrorKind::kInvalidInput, "obs_dag must be acyclic");
  Require(obs_weights.rows() == o.d_x && obs_weights.cols() == o.d_x, ErrorKind::kShapeMismatch,
          "obs_weights shape");
  for (Index i = 0; i < o.d_x; ++i)
    for (Index j = 0; j < o.d_x; ++j)
      Require(obs_dag(i, j) != 0.0 || obs_weights(i, j) == 0.0, ErrorKind::kInvalidInput,
              "obs_weights outside the support of obs_dag");
  const Index h = mix.A.rows();
  Require(mix.A.cols() == o.d_z && mix.S.rows() == o.d_x && mix.S.cols() == h && mix.b.cols() == h &&
              mix.C.rows() == o.d_x && mix.C.cols() == h,
          ErrorKind::kShapeMismatch, "mixing network shape");
  Require(F_dep.rows() == o.d_x && F_dep.cols() == o.d_x, ErrorKind::kShapeMismatch, "F_dep shape");
  Require(Q_linear.rows() == o.d_x && Q_linear.cols() == o.d_z, ErrorKind::kShapeMismatch, "Q_linear shape");
  Require(q_noise.rows() == o.d_x && q_noise.cols() == o.d_z, ErrorKind::kShapeMismatch, "q_noise shape");
}

RowMatrix SampleErDag(int d_x, double expected_degree, std::uint64_t seed) {
  Require(d_x >= 1, ErrorKind::kInvalidInput, "SampleErDag needs d_x >= 1");
  RowMatrix adj = RowMatrix::Zero(d_x, d_x);
  if (d_x == 1 || expected_degree <= 0.0) return adj;
  Rng rng(seed);
  const std::vector<int> order = rng.Permutation(d_x);
  const double p = std::min(1.0, 2.0 * expected_degree / static_cast<double>(d_x - 1));
  for (int a = 0; a < d_x; ++a) {
    for (int b = a + 1; b < d_x; ++b) {
      if (rng.Bernoulli(p)) adj(order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)]) = 1.0;
    }
  }
  return adj;
}

double EdgeWeightSchedule(int t, double a1, double a2, int T) {
  return a1 * std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(T)) + a2;
}

DGPSpec MakeSpec(const DgpOptions& options) {
  DGPSpec spec;
  spec.options = options;
  spec.options.violation = Violation::kNone;
  const int dx = options.d_x, dz = options.d_z;
  Require(dx >= 1 && dz >= 1 && dz <= dx, ErrorKind::kInvalidInput, "need 1 <= d_z <= d_x");
  Require(options.lag_order >= 1, ErrorKind::kInvalidInput, "lag_order must be >= 1");
  const std::uint64_t seed = options.seed;

  spec.obs_dag = SampleErDag(dx, options.obs_degree, DeriveSeed(seed, kObsDag));
  {
    Rng rng(DeriveSeed(seed, kObsWeights));
    spec.obs_weights = SignedUniform(spec.obs_dag, 0.5, 1.5, rng);
  }

  RowMatrix latent_adj = RowMatrix::Zero(dz, dz);
  {
    Rng rng(DeriveSeed(seed, kLatentGraph));
    if (options.setting == SparsitySetting::kSparse) {
      latent_adj = SparseLatentDag(dz, DeriveSeed(seed, kLatentGraph + 1000), rng);
    } else if (options.setting == SparsitySetting::kDense) {
      latent_adj = CompleteDag(dz, rng);
    }
  }
  {
    Rng rng(DeriveSeed(seed, kLatentWeights));
    // adjacency is src x dst; B_z is child x parent.
    spec.B_z = SignedUniform(RowMatrix(latent_adj.transpose()), 0.4, 0.8, rng);
  }

  {
    Rng rng(DeriveSeed(seed, kTransition));
    spec.W.clear();
    for (int l = 0; l < options.lag_order; ++l) {
      RowMatrix w = rng.NormalMatrix(dz, dz);
      if (options.setting == SparsitySetting::kSparse) {
        const double keep = 1.0 / static_cast<double>(dz);
        for (Index i = 0; i < dz; ++i)
          for (Index j = 0; j < dz; ++j)
            if (i != j && !rng.Bernoulli(keep)) w(i, j) = 0.0;
      }
      spec.W.push_back(std::move(w));
    }
    // Scale so the stacked lag operator through (I - B_z)^{-1} is a contraction.
    RowMatrix stacked(dz, dz * options.lag_order);
    for (int l = 0; l < options.lag_order; ++l) stacked.middleCols(l * dz, dz) = spec.W[static_cast<std::size_t>(l)];
    const RowMatrix inv = (RowMatrix::Identity(dz, dz) - spec.B_z).inverse();
    const double norm = SpectralNorm(inv * stacked);
    if (norm > 0.0) {
      const double c = options.transition_norm / norm;
      for (RowMatrix& w : spec.W) w *= c;
    }
  }

  {
    Rng rng(DeriveSeed(seed, kMixing));
    const int h = std::max(dx, 16);
    spec.mix.A = rng.NormalMatrix(h, dz, 1.0 / std::sqrt(static_cast<double>(dz)));
    spec.mix.b = rng.NormalMatrix(1, h, 1.0 / std::sqrt(static_cast<double>(dz + 1)));
    spec.mix.S = rng.NormalMatrix(dx, h);
    spec.mix.C = rng.NormalMatrix(dx, h, 1.0 / std::sqrt(static_cast<double>(h)));
    // Bound the s-path so dx_i/ds_i = 1 + sum_h C S lrelu' stays in [0.5, 1.5].
    for (Index i = 0; i < dx; ++i) {
      const double r = spec.mix.C.row(i).cwiseProduct(spec.mix.S.row(i)).cwiseAbs().sum();
      if (r > 0.0) spec.mix.S.row(i) *= 0.5 / r;
    }
  }
  {
    Rng rng(DeriveSeed(seed, kDependence));
    spec.F_dep = rng.NormalMatrix(dx, dx);
    const double norm = SpectralNorm(spec.F_dep);
    if (norm > 0.0) spec.F_dep *= options.dep_norm / norm;
  }
  {
    Rng rng(DeriveSeed(seed, kLinearMix));
    spec.Q_linear = RandomOrthonormalColumns(dx, dz, rng);
  }
  {
    Rng rng(DeriveSeed(seed, kNoiseMix));
    spec.q_noise = rng.NormalMatrix(dx, dz, 1.0 / std::sqrt(static_cast<double>(dz)));
  }
  spec = ApplyViolation(spec, options.violation);
  spec.Validate();
  return spec;
}

LatentTrace SimulateLatent(const DGPSpec& spec) {
  const int T = spec.T(), dz = spec.d_z(), L = spec.options.lag_order;
  const bool random_walk = spec.options.violation == Violation::kA2;
  Rng rng(DeriveSeed(spec.options.seed, kLatentNoise));
  LatentTrace out;
  out.eps_z.resize(T, dz);
  for (Index t = 0; t < T; ++t)
    for (Index i = 0; i < dz; ++i)
      out.eps_z(t, i) = random_walk ? rng.Uniform() : spec.options.sigma_z * rng.Normal();

  out.z.resize(T, dz);
  const RowMatrix inv = (RowMatrix::Identity(dz, dz) - spec.B_z).inverse();
  Vector pre(dz), h(dz);
  for (Index t = 0; t < T; ++t) {
    if (random_walk) {
      out.z.row(t) = out.eps_z.row(t);
      if (t > 0) out.z.row(t) += out.z.row(t - 1);
    } else if (t < L) {
      out.z.row(t) = out.eps_z.row(t);
    } else {
      pre.setZero();
      for (int l = 0; l < L; ++l) pre += spec.W[static_cast<std::size_t>(l)] * out.z.row(t - l - 1).transpose();
      for (Index i = 0; i < dz; ++i) h(i) = Lrelu(pre(i), spec.leaky_slope) + out.eps_z(t, i);
      out.z.row(t) = (inv * h).transpose();
    }
    for (Index i = 0; i < dz; ++i) {
      const double v = out.z(t, i);
      if (!std::isfinite(v) || std::abs(v) > kGuard)
        Fail(ErrorKind::kDivergedTrajectory,
             "latent trajectory left [-1e4, 1e4] at t=" + std::to_string(t) + "; transition is unstable");
    }
  }
  return out;
}

Vector Mix(const DGPSpec& spec, const Vector& z, const Vector& s) {
  if (spec.options.violation == Violation::kA3) return spec.Q_linear * z;
  const MixingNet& m = spec.mix;
  const Vector pre = m.A * z + m.b.row(0).transpose();
  Vector out(spec.d_x());
  for (Index i = 0; i < spec.d_x(); ++i) {
    double acc = 0.0;
    for (Index h = 0; h < m.A.rows(); ++h) acc += m.C(i, h) * Lrelu(pre(h) + m.S(i, h) * s(i), spec.leaky_slope);
    out(i) = acc;
  }
  return out;
}

ObservationTrace SimulateObservations(const DGPSpec& spec, const RowMatrix& z) {
  const int T = spec.T(), dx = spec.d_x();
  Require(z.rows() == T && z.cols() == spec.d_z(), ErrorKind::kInvalidLatents,
          "latents have shape " + std::to_string(z.rows()) + "x" + std::to_string(z.cols()) +
              ", spec expects " + std::to_string(T) + "x" + std::to_string(spec.d_z()));
  const bool a5 = spec.options.violation == Violation::kA5;
  Rng rng(DeriveSeed(spec.options.seed, kObsNoise));
  ObservationTrace out;
  out.eps_x.resize(T, dx);
  for (Index t = 0; t < T; ++t)
    for (Index i = 0; i < dx; ++i)
      out.eps_x(t, i) = a5 ? rng.Normal() : rng.Uniform(0.0, spec.options.sigma_x);

  const std::vector<int> order = *TopologicalOrder(spec.obs_dag);
  out.x.resize(T, dx);
  out.s.resize(T, dx);
  out.x_pre.resize(T, dx);
  Vector x_prev = Vector::Zero(dx);
  for (Index t = 0; t < T; ++t) {
    const Vector zt = z.row(t).transpose();
    Vector s = out.eps_x.row(t).transpose();
    s += a5 ? Vector(spec.q_noise * zt) : Vector(spec.F_dep * x_prev);
    Vector x = Mix(spec, zt, s) + s;
    out.x_pre.row(t) = x.transpose();
    const double alpha = EdgeWeightSchedule(static_cast<int>(t), spec.options.a1, spec.options.a2, T);
    for (int i : order) {
      for (Index j = 0; j < dx; ++j) {
        if (spec.obs_dag(j, i) != 0.0) x(i) += alpha * spec.obs_weights(j, i) * x(j);
      }
    }
    if (!x.allFinite()) Fail(ErrorKind::kDivergedTrajectory, "non-finite observation at t=" + std::to_string(t));
    out.s.row(t) = s.transpose();
    out.x.row(t) = x.transpose();
    x_prev = x;
  }
  return out;
}

Dataset MakeDataset(const DGPSpec& spec) {
  spec.Validate();
  LatentTrace latent = SimulateLatent(spec);
  ObservationTrace obs = SimulateObservations(spec, latent.z);
  Dataset data;
  data.x = std::move(obs.x);
  data.s = std::move(obs.s);
  data.eps_x = std::move(obs.eps_x);
  data.z = std::move(latent.z);
  data.eps_z = std::move(latent.eps_z);
  data.true_obs = Support(spec.obs_dag);
  data.true_latent_inst = Support(RowMatrix(spec.B_z.transpose()));
  data.true_latent_lag = Support(RowMatrix(spec.W.front().transpose()));
  data.spec = spec;
  for (int i = 0; i < spec.d_x(); ++i) data.names.push_back("x" + std::to_string(i));
  return data;
}

DGPSpec ApplyViolation(const DGPSpec& spec, Violation kind) {
  if (kind == Violation::kNone) return spec;
  DGPSpec out = spec;
  out.options.violation = kind;
  if (kind == Violation::kA2) {
    const int dz = spec.d_z();
    out.options.lag_order = 1;
    out.W = {RowMatrix::Identity(dz, dz)};
    out.B_z = RowMatrix::Zero(dz, dz);
  }
  return out;
}

DGPSpec ApplyViolation(const DGPSpec& spec, const std::string& kind) {
  return ApplyViolation(spec, ParseViolation(kind));
}

}  // namespace cadre::dgp
