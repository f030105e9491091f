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

#include "cadre/metrics/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cadre/core/error.h"
#include "cadre/core/rng.h"
#include "cadre/simd/kernels.h"

namespace cadre::metrics {

using nlohmann::json;

namespace {

void RequireSquareSame(const RowMatrix& a, const RowMatrix& b, const char* what) {
  Require(a.rows() == b.rows() && a.cols() == b.cols() && a.rows() == a.cols(), ErrorKind::kShapeMismatch,
          std::string(what) + ": inputs must be square matrices of the same shape");
}

double Median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
  const double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2));
  return 0.5 * (lo + hi);
}

// ZCA whitening fitted on `fit_rows`.
RowMatrix Whiten(const RowMatrix& a, const std::vector<Index>& fit_rows) {
  const Index d = a.cols();
  Vector mean = Vector::Zero(d);
  for (Index r : fit_rows) mean += a.row(r).transpose();
  mean /= static_cast<double>(fit_rows.size());
  RowMatrix cov = RowMatrix::Zero(d, d);
  for (Index r : fit_rows) {
    const Vector c = a.row(r).transpose() - mean;
    cov += c * c.transpose();
  }
  cov /= static_cast<double>(fit_rows.size());
  Eigen::SelfAdjointEigenSolver<RowMatrix> eig(cov);
  Vector ev = eig.eigenvalues();
  const double floor = std::max(ev.maxCoeff(), 0.0) * 1e-12 + 1e-300;
  for (Index i = 0; i < d; ++i) ev(i) = 1.0 / std::sqrt(std::max(ev(i), floor));
  const RowMatrix inv_sqrt = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
  return (a.rowwise() - mean.transpose()) * inv_sqrt;
}

RowMatrix Gather(const RowMatrix& a, const std::vector<Index>& rows) {
  RowMatrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = a.row(rows[i]);
  return out;
}

}  // namespace

double Shd(const RowMatrix& est, const RowMatrix& truth, bool normalize) {
  RequireSquareSame(est, truth, "Shd");
  const Index d = est.rows();
  double diff = 0.0;
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      if (i != j && ((est(i, j) != 0.0) != (truth(i, j) != 0.0))) diff += 1.0;
  if (!normalize) return diff;
  return d > 1 ? diff / static_cast<double>(d * (d - 1)) : 0.0;
}

TprPrecision ComputeTprPrecision(const RowMatrix& est, const RowMatrix& truth) {
  Require(est.rows() == truth.rows() && est.cols() == truth.cols(), ErrorKind::kShapeMismatch,
          "ComputeTprPrecision: shapes differ");
  double tp = 0.0, n_est = 0.0, n_true = 0.0;
  for (Index i = 0; i < est.rows(); ++i) {
    for (Index j = 0; j < est.cols(); ++j) {
      const bool e = est(i, j) != 0.0, t = truth(i, j) != 0.0;
      n_est += e;
      n_true += t;
      tp += e && t;
    }
  }
  TprPrecision r;
  r.tpr = n_true > 0.0 ? tp / n_true : 1.0;
  r.precision = n_est > 0.0 ? tp / n_est : 1.0;
  return r;
}

double F1(const TprPrecision& tp) {
  const double s = tp.tpr + tp.precision;
  return s > 0.0 ? 2.0 * tp.tpr * tp.precision / s : 0.0;
}

RowMatrix Ranks(const RowMatrix& a) {
  RowMatrix r(a.rows(), a.cols());
  std::vector<Index> idx(static_cast<std::size_t>(a.rows()));
  for (Index c = 0; c < a.cols(); ++c) {
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](Index x, Index y) { return a(x, c) < a(y, c); });
    std::size_t i = 0;
    while (i < idx.size()) {
      std::size_t j = i;
      while (j + 1 < idx.size() && a(idx[j + 1], c) == a(idx[i], c)) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r(idx[k], c) = avg;
      i = j + 1;
    }
  }
  return r;
}

RowMatrix PearsonCross(const RowMatrix& a, const RowMatrix& b, int* constant_columns) {
  Require(a.rows() == b.rows(), ErrorKind::kShapeMismatch, "PearsonCross: row counts differ");
  const RowMatrix ca = a.rowwise() - a.colwise().mean();
  const RowMatrix cb = b.rowwise() - b.colwise().mean();
  const Vector na = ca.colwise().norm().transpose();
  const Vector nb = cb.colwise().norm().transpose();
  RowMatrix c = ca.transpose() * cb;
  int constant = 0;
  for (Index i = 0; i < na.size(); ++i) constant += na(i) == 0.0;
  for (Index j = 0; j < nb.size(); ++j) constant += nb(j) == 0.0;
  for (Index i = 0; i < c.rows(); ++i)
    for (Index j = 0; j < c.cols(); ++j)
      c(i, j) = (na(i) > 0.0 && nb(j) > 0.0) ? std::clamp(c(i, j) / (na(i) * nb(j)), -1.0, 1.0) : 0.0;
  if (constant_columns != nullptr) *constant_columns = constant;
  return c;
}

RowMatrix SpearmanCross(const RowMatrix& a, const RowMatrix& b, int* constant_columns) {
  return PearsonCross(Ranks(a), Ranks(b), constant_columns);
}

MccResult Mcc(const RowMatrix& est, const RowMatrix& truth, bool allow_permutation) {
  Require(est.rows() == truth.rows() && est.cols() == truth.cols(), ErrorKind::kShapeMismatch,
          "Mcc: estimated and true latents must have the same shape");
  Require(est.rows() >= 3, ErrorKind::kInsufficientSamples, "Mcc needs at least 3 samples");
  MccResult r;
  r.correlations = SpearmanCross(est, truth, &r.constant_columns).cwiseAbs();
  const Index d = truth.cols();
  if (allow_permutation) {
    r.permutation = MaxWeightAssignment(RowMatrix(r.correlations.transpose()));
  } else {
    r.permutation.resize(static_cast<std::size_t>(d));
    std::iota(r.permutation.begin(), r.permutation.end(), 0);
  }
  double sum = 0.0;
  for (Index j = 0; j < d; ++j) sum += r.correlations(r.permutation[static_cast<std::size_t>(j)], j);
  r.mcc = d > 0 ? sum / static_cast<double>(d) : 0.0;
  return r;
}

R2Result R2Kernel(const RowMatrix& est, const RowMatrix& truth, const R2Options& opts) {
  Require(est.rows() == truth.rows(), ErrorKind::kShapeMismatch, "R2Kernel: row counts differ");
  const Index T = est.rows();
  Require(T >= 20, ErrorKind::kInsufficientSamples, "R2Kernel needs at least 20 samples");
  Rng rng(opts.split_seed);
  const std::vector<int> perm = rng.Permutation(static_cast<int>(T));
  const auto n_train = static_cast<Index>(std::floor(opts.train_fraction * static_cast<double>(T)));
  std::vector<Index> train_rows, test_rows;
  for (Index i = 0; i < T; ++i) (i < n_train ? train_rows : test_rows).push_back(perm[static_cast<std::size_t>(i)]);

  const RowMatrix w = Whiten(est, train_rows);
  const RowMatrix train_x = Gather(w, train_rows), test_x = Gather(w, test_rows);
  const RowMatrix train_y = Gather(truth, train_rows), test_y = Gather(truth, test_rows);
  const Index d = w.cols(), m = truth.cols();
  const RowMatrix points_t = train_x.transpose();
  const RowMatrix targets_t = train_y.transpose();
  const simd::KernelSumsFn sums = simd::Kernels().gaussian_kernel_sums;

  R2Result out;
  {
    const Index n = std::min(opts.median_points, n_train);
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) dist.push_back((train_x.row(i) - train_x.row(j)).norm());
    out.median_distance = Median(std::move(dist));
  }

  // Leave-one-out choice of the bandwidth multiplier on a training subset.
  const Index n_cv = std::min(opts.cv_points, n_train);
  const RowMatrix cv_points_t = train_x.topRows(n_cv).transpose();
  const RowMatrix cv_targets_t = train_y.topRows(n_cv).transpose();
  const Vector y_mean = train_y.colwise().mean().transpose();
  std::vector<double> weighted(static_cast<std::size_t>(m));
  double best_err = std::numeric_limits<double>::infinity();
  out.bandwidth = out.median_distance;
  for (double mult : opts.bandwidth_grid) {
    const double h = std::max(mult * out.median_distance, 1e-12);
    const double inv = 1.0 / (2.0 * h * h);
    double err = 0.0;
    for (Index i = 0; i < n_cv; ++i) {
      double wsum = 0.0;
      const Vector q = train_x.row(i).transpose();
      sums(q.data(), cv_points_t.data(), static_cast<std::size_t>(n_cv), static_cast<std::size_t>(d),
           cv_targets_t.data(), static_cast<std::size_t>(m), inv, &wsum, weighted.data());
      wsum -= 1.0;
      for (Index k = 0; k < m; ++k) {
        const double num = weighted[static_cast<std::size_t>(k)] - train_y(i, k);
        const double pred = wsum > 1e-300 ? num / wsum : y_mean(k);
        err += (pred - train_y(i, k)) * (pred - train_y(i, k));
      }
    }
    if (err < best_err) {
      best_err = err;
      out.bandwidth = h;
    }
  }

  const double inv = 1.0 / (2.0 * out.bandwidth * out.bandwidth);
  RowMatrix pred(test_x.rows(), m);
  for (Index i = 0; i < test_x.rows(); ++i) {
    double wsum = 0.0;
    const Vector q = test_x.row(i).transpose();
    sums(q.data(), points_t.data(), static_cast<std::size_t>(n_train), static_cast<std::size_t>(d), targets_t.data(),
         static_cast<std::size_t>(m), inv, &wsum, weighted.data());
    for (Index k = 0; k < m; ++k) pred(i, k) = wsum > 1e-300 ? weighted[static_cast<std::size_t>(k)] / wsum : y_mean(k);
  }
  double total = 0.0;
  for (Index k = 0; k < m; ++k) {
    const double mu = test_y.col(k).mean();
    const double sst = (test_y.col(k).array() - mu).square().sum();
    const double sse = (test_y.col(k) - pred.col(k)).squaredNorm();
    const double r2 = sst > 0.0 ? std::max(0.0, 1.0 - sse / sst) : 0.0;
    out.per_coordinate.push_back(r2);
    total += r2;
  }
  out.r2 = m > 0 ? total / static_cast<double>(m) : 0.0;
  return out;
}

double MedianNearestNeighborDistance(const RowMatrix& coords) {
  std::vector<double> nn;
  for (Index i = 0; i < coords.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < coords.rows(); ++j)
      if (j != i) best = std::min(best, (coords.row(i) - coords.row(j)).norm());
    if (std::isfinite(best)) nn.push_back(best);
  }
  return Median(std::move(nn));
}

RowMatrix WindReferenceGraph(const RowMatrix& coords, const RowMatrix& winds, double step_scale) {
  Require(coords.cols() == 2 && winds.cols() == 2 && coords.rows() == winds.rows(), ErrorKind::kShapeMismatch,
          "WindReferenceGraph needs d x 2 coords and winds");
  Require(coords.allFinite() && winds.allFinite(), ErrorKind::kInvalidInput, "non-finite coords or winds");
  if (step_scale <= 0.0) step_scale = MedianNearestNeighborDistance(coords);
  const Index d = coords.rows();
  RowMatrix adj = RowMatrix::Zero(d, d);
  for (Index i = 0; i < d; ++i) {
    if (winds.row(i).isZero(0.0)) continue;
    const Eigen::RowVector2d target = coords.row(i) + step_scale * winds.row(i);
    Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < d; ++j) {
      const double dist = (coords.row(j) - target).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = j;
      }
    }
    if (best != i) adj(i, best) = 1.0;
  }
  return adj;
}

WshdWtpr ComputeWshdWtpr(const RowMatrix& est, const RowMatrix& ref) {
  RequireSquareSame(est, ref, "ComputeWshdWtpr");
  WshdWtpr r;
  r.wshd_raw = Shd(est, ref, false);
  r.wshd = Shd(est, ref, true);
  r.wtpr = ComputeTprPrecision(est, ref).tpr;
  return r;
}

double Smcc(const RowMatrix& est, const RowMatrix& target, int subset_size) {
  Require(target.cols() == 1 && target.rows() == est.rows(), ErrorKind::kShapeMismatch,
          "Smcc needs a T x 1 target matching est");
  const Index d = est.cols();
  Require(d <= 12, ErrorKind::kDimensionTooLarge, "Smcc enumerates subsets only for d_z <= 12");
  Require(subset_size >= 1 && subset_size <= d, ErrorKind::kInvalidInput, "subset_size must lie in [1, d_z]");
  const RowMatrix c = PearsonCross(est, target).cwiseAbs();
  std::vector<char> pick(static_cast<std::size_t>(d), 0);
  std::fill(pick.begin(), pick.begin() + subset_size, 1);
  double best = 0.0;
  do {
    double sum = 0.0;
    for (Index i = 0; i < d; ++i)
      if (pick[static_cast<std::size_t>(i)]) sum += c(i, 0);
    best = std::max(best, sum / static_cast<double>(subset_size));
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

namespace {

const char* const kNumericFields[] = {"shd_norm", "shd_raw", "tpr",  "precision", "f1",   "shd_latent_inst",
                                      "shd_latent_lag", "mcc_s", "mcc_z", "r2", "wshd", "wshd_raw", "wtpr", "smcc"};

}  // namespace

json ReportToJson(const MetricsReport& r) {
  json j{{"schema", "cadre.metrics.v1"}};
  auto put = [&j](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("shd_norm", r.shd_norm);
  put("shd_raw", r.shd_raw);
  put("tpr", r.tpr);
  put("precision", r.precision);
  put("f1", r.f1);
  put("shd_latent_inst", r.shd_latent_inst);
  put("shd_latent_lag", r.shd_latent_lag);
  put("mcc_s", r.mcc_s);
  put("mcc_z", r.mcc_z);
  put("r2", r.r2);
  put("wshd", r.wshd);
  put("wshd_raw", r.wshd_raw);
  put("wtpr", r.wtpr);
  put("smcc", r.smcc);
  if (r.permutation) j["permutation"] = *r.permutation;
  j["notices"] = r.notices;
  j["protocol"] = {{"mcc", "spearman, optimal assignment for z, identity for s"},
                   {"r2", "nadaraya-watson, whitened input, 70/30 split, loo bandwidth, mean over coordinates, floor 0"},
                   {"shd", "normalized by d(d-1)"}};
  return j;
}

void ValidateReportJson(const json& j) {
  Require(j.is_object(), ErrorKind::kInvalidInput, "metrics report must be an object");
  Require(j.value("schema", "") == "cadre.metrics.v1", ErrorKind::kInvalidInput, "metrics report schema tag");
  for (const auto& [key, value] : j.items()) {
    if (key == "schema" || key == "protocol") continue;
    if (key == "notices") {
      Require(value.is_array(), ErrorKind::kInvalidInput, "notices must be an array");
      for (const auto& n : value) Require(n.is_string(), ErrorKind::kInvalidInput, "notices must be strings");
      continue;
    }
    if (key == "permutation") {
      Require(value.is_array(), ErrorKind::kInvalidInput, "permutation must be an array");
      for (const auto& p : value) Require(p.is_number_integer(), ErrorKind::kInvalidInput, "permutation entries");
      continue;
    }
    const bool known = std::find(std::begin(kNumericFields), std::end(kNumericFields), key) != std::end(kNumericFields);
    Require(known, ErrorKind::kInvalidInput, "unknown metrics field '" + key + "'");
    Require(value.is_number(), ErrorKind::kInvalidInput, "metrics field '" + key + "' must be numeric");
  }
  for (const char* key : {"tpr", "precision", "wtpr", "shd_norm", "wshd"}) {
    if (j.contains(key)) {
      const double v = j[key].get<double>();
      Require(v >= 0.0 && v <= 1.0, ErrorKind::kInvalidInput, std::string(key) + " outside [0, 1]");
    }
  }
}

MetricsReport ReportFromJson(const json& j) {
  ValidateReportJson(j);
  MetricsReport r;
  auto get = [&j](const char* key) -> std::optional<double> {
    if (j.contains(key)) return j[key].get<double>();
    return std::nullopt;
  };
  r.shd_norm = get("shd_norm");
  r.shd_raw = get("shd_raw");
  r.tpr = get("tpr");
  r.precision = get("precision");
  r.f1 = get("f1");
  r.shd_latent_inst = get("shd_latent_inst");
  r.shd_latent_lag = get("shd_latent_lag");
  r.mcc_s = get("mcc_s");
  r.mcc_z = get("mcc_z");
  r.r2 = get("r2");
  r.wshd = get("wshd");
  r.wshd_raw = get("wshd_raw");
  r.wtpr = get("wtpr");
  r.smcc = get("smcc");
  if (j.contains("permutation")) r.permutation = j["permutation"].get<std::vector<int>>();
  if (j.contains("notices")) r.notices = j["notices"].get<std::vector<std::string>>();
  return r;
}

}  // namespace cadre::metrics
