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

#include "cadre/graphs/graphs.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cadre/autodiff/tape.h"
#include "cadre/core/error.h"

namespace cadre::graphs {

namespace {

constexpr double kMaxCondition = 1e12;

double Condition(const RowMatrix& m) {
  Eigen::JacobiSVD<RowMatrix> svd(m);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  return smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
}

RowMatrix ScaledByMaxAbs(const RowMatrix& m) {
  const double mx = m.cwiseAbs().maxCoeff();
  return mx > 0.0 ? RowMatrix(m / mx) : m;
}

}  // namespace

RowMatrix DecoderJacobian(const model::ModelParams& params, const Vector& z, const Vector& s) {
  return model::DecoderJacobian(params, z, s);
}

RowMatrix ObservationGraph(const RowMatrix& J_m, double ridge, double* ridge_used) {
  Require(J_m.rows() == J_m.cols(), ErrorKind::kNonSquare, "ObservationGraph needs a square J_m");
  const Index d = J_m.rows();
  const RowMatrix eye = RowMatrix::Identity(d, d);
  RowMatrix shifted = J_m + ridge * eye;
  if (Condition(shifted) > kMaxCondition) {
    ridge = std::max(ridge, 1e-6);
    shifted = J_m + ridge * eye;
    if (Condition(shifted) > kMaxCondition)
      Fail(ErrorKind::kSingularMixing, "mixing Jacobian is singular (condition number above 1e12 with ridge 1e-6)");
  }
  if (ridge_used != nullptr) *ridge_used = ridge;
  const RowMatrix D_m = J_m.diagonal().asDiagonal();
  RowMatrix J_g = eye - D_m * shifted.partialPivLu().inverse();
  J_g.diagonal().setZero();
  return J_g;
}

double FunctionalEquivalenceResidual(const RowMatrix& J_g, const RowMatrix& J_m) {
  Require(J_g.rows() == J_m.rows() && J_g.cols() == J_m.cols() && J_m.rows() == J_m.cols(),
          ErrorKind::kShapeMismatch, "FunctionalEquivalenceResidual: J_g and J_m must be the same square shape");
  const RowMatrix D_m = J_m.diagonal().asDiagonal();
  const double scale = J_m.norm();
  const double r = (J_g * J_m - (J_m - D_m)).norm();
  return scale > 0.0 ? r / scale : r;
}

RowMatrix ThresholdGraph(const RowMatrix& J, const RowMatrix* mask, double tau) {
  Require(tau > 0.0, ErrorKind::kInvalidInput, "tau must be positive");
  RowMatrix a = J.cwiseAbs();
  if (mask != nullptr) {
    Require(mask->rows() == J.rows() && mask->cols() == J.cols(), ErrorKind::kShapeMismatch, "mask shape");
    a = a.cwiseProduct(*mask);
  }
  return (a.array() > tau).cast<double>().matrix();
}

SpatialMask SarMask(const RowMatrix& coords, double radius, const RowMatrix& x) {
  Require(coords.cols() == 2 && coords.allFinite(), ErrorKind::kInvalidInput, "coords must be finite d x 2");
  Require(x.cols() == coords.rows(), ErrorKind::kShapeMismatch, "x width differs from coordinate count");
  const Index d = coords.rows();
  SpatialMask m;
  m.radius = radius;
  m.coords = coords;
  m.M_loc = RowMatrix::Zero(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      if (i != j && (coords.row(i) - coords.row(j)).norm() <= radius) m.M_loc(i, j) = 1.0;

  m.W = RowMatrix::Zero(d, d);
  for (Index j = 0; j < d; ++j) {
    std::vector<Index> nbrs;
    for (Index i = 0; i < d; ++i)
      if (m.M_loc(i, j) != 0.0) nbrs.push_back(i);
    if (nbrs.empty()) {
      ++m.degenerate_columns;
      continue;
    }
    RowMatrix X(x.rows(), static_cast<Index>(nbrs.size()));
    for (std::size_t k = 0; k < nbrs.size(); ++k) X.col(static_cast<Index>(k)) = x.col(nbrs[k]);
    const Vector w = X.colPivHouseholderQr().solve(Vector(x.col(j)));
    for (std::size_t k = 0; k < nbrs.size(); ++k) m.W(nbrs[k], j) = w(static_cast<Index>(k));
  }

  std::vector<double> allowed;
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      if (m.M_loc(i, j) != 0.0) allowed.push_back(std::abs(m.W(i, j)));
  m.M_init = RowMatrix::Zero(d, d);
  if (!allowed.empty()) {
    std::sort(allowed.begin(), allowed.end());
    const std::size_t n = allowed.size();
    const double median = n % 2 == 1 ? allowed[n / 2] : 0.5 * (allowed[n / 2 - 1] + allowed[n / 2]);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j)
        if (m.M_loc(i, j) != 0.0 && std::abs(m.W(i, j)) > median) m.M_init(i, j) = 1.0;
  }
  return m;
}

Extraction ExtractGraphs(const model::ModelParams& params, const RowMatrix& x, const ExtractOptions& opts) {
  const model::ModelConfig& mc = params.config();
  Require(x.cols() == mc.d_x, ErrorKind::kShapeMismatch, "dataset width differs from model d_x");
  Require(x.rows() >= 2, ErrorKind::kInsufficientSamples, "need at least 2 time steps");
  const Index T = x.rows();
  const Index H = std::max<Index>(1, std::min<Index>({static_cast<Index>(opts.eval_points), T / 4, T - 1}));
  const Index dz = mc.d_z, dx = mc.d_x;

  ad::Tape tape;
  const model::Bound p = model::Bind(tape, params, false);
  ad::Var xv = tape.Constant(x.bottomRows(H + 1));
  const ad::Var zm = model::EncodeZ(p, xv).mean;
  const ad::Var sm = model::EncodeS(p, xv).mean;
  const ad::Var z_prev = ad::SliceRows(zm, 0, H);
  const ad::Var z_curr = ad::SliceRows(zm, 1, H);
  const ad::Var s_curr = ad::SliceRows(sm, 1, H);

  const std::vector<RowMatrix> J_m = model::UnstackColumns(model::DecoderJacobianColumns(p, z_curr, s_curr).value(), H, dx);
  const model::FlowJacobianColumns fj = model::FlowZJacobianColumns(p, z_prev, z_curr);
  const std::vector<RowMatrix> J_c = model::UnstackColumns(fj.curr.value(), H, dz);
  const std::vector<RowMatrix> J_p = model::UnstackColumns(fj.prev.value(), H, dz);

  Extraction out;
  JacobianBundle& b = out.bundle;
  b.eval_points = H;
  b.J_m = RowMatrix::Zero(dx, dx);
  b.J_g = RowMatrix::Zero(dx, dx);
  b.J_r_curr = RowMatrix::Zero(dz, dz);
  b.J_r_prev = RowMatrix::Zero(dz, dz);
  for (Index n = 0; n < H; ++n) {
    const auto i = static_cast<std::size_t>(n);
    double ridge = 0.0;
    b.J_g += ObservationGraph(J_m[i], 0.0, &ridge).cwiseAbs();
    b.max_ridge = std::max(b.max_ridge, ridge);
    b.J_m += J_m[i];
    b.J_r_curr += J_c[i].cwiseAbs();
    b.J_r_prev += J_p[i].cwiseAbs();
  }
  const double inv = 1.0 / static_cast<double>(H);
  b.J_m *= inv;
  b.J_g *= inv;
  b.J_r_curr *= inv;
  b.J_r_prev *= inv;
  b.D_m = b.J_m.diagonal().asDiagonal();

  GraphEstimate& g = out.graphs;
  g.tau = opts.tau;
  if (opts.mask != nullptr) g.mask = *opts.mask;
  g.obs_graph = ThresholdGraph(b.J_g.transpose(), opts.mask, opts.tau);
  RowMatrix inst = b.J_r_curr;
  inst.diagonal().setZero();
  g.latent_inst = ThresholdGraph(ScaledByMaxAbs(inst).transpose(), nullptr, opts.tau);
  g.latent_lag = ThresholdGraph(ScaledByMaxAbs(b.J_r_prev).transpose(), nullptr, opts.tau);
  if (objective::DagPenalty(g.obs_graph) > 1e-9) g.warnings.push_back("observation graph contains a cycle");
  if (objective::DagPenalty(g.latent_inst) > 1e-9) g.warnings.push_back("latent instantaneous graph contains a cycle");
  return out;
}

void WriteEdgeList(const RowMatrix& adjacency, const RowMatrix* weights, const std::vector<std::string>& names,
                   const std::string& path) {
  std::ofstream out(path);
  Require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path);
  out << "src,dst,weight\n";
  auto label = [&names](Index i) {
    return static_cast<std::size_t>(i) < names.size() ? names[static_cast<std::size_t>(i)] : std::to_string(i);
  };
  char buf[64];
  for (Index i = 0; i < adjacency.rows(); ++i) {
    for (Index j = 0; j < adjacency.cols(); ++j) {
      if (adjacency(i, j) == 0.0) continue;
      std::snprintf(buf, sizeof(buf), "%.10g", weights != nullptr ? (*weights)(i, j) : 1.0);
      out << label(i) << ',' << label(j) << ',' << buf << '\n';
    }
  }
}

}  // namespace cadre::graphs
