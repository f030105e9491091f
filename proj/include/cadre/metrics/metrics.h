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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cadre/core/types.h"
#include "json.hpp"

namespace cadre::metrics {

// Structure metrics on binary adjacencies (nonzero counts as an edge).

/// Differing off-diagonal entries; normalized divides by d(d-1).
double Shd(const RowMatrix& est, const RowMatrix& truth, bool normalize);

struct TprPrecision {
  double tpr = 1.0;
  double precision = 1.0;
};

/// Empty truth gives TPR 1, empty estimate gives precision 1.
TprPrecision ComputeTprPrecision(const RowMatrix& est, const RowMatrix& truth);
double F1(const TprPrecision& tp);

// Assignment.

/// Row-to-column assignment maximizing the total weight (Hungarian algorithm, O(n^3)).
/// Requires rows <= cols; result[i] is the column matched to row i.
std::vector<int> MaxWeightAssignment(const RowMatrix& weight);
/// Exhaustive search over permutations; square inputs up to 9 x 9, for testing.
std::vector<int> BruteForceAssignment(const RowMatrix& weight);

// Representation metrics.

/// Columnwise ranks with ties averaged, 1-based.
RowMatrix Ranks(const RowMatrix& a);
/// Pearson correlation between columns of a and columns of b; constant columns give 0.
RowMatrix PearsonCross(const RowMatrix& a, const RowMatrix& b, int* constant_columns = nullptr);
RowMatrix SpearmanCross(const RowMatrix& a, const RowMatrix& b, int* constant_columns = nullptr);

struct MccResult {
  double mcc = 0.0;
  std::vector<int> permutation;  // permutation[j] = est column matched to true column j
  RowMatrix correlations;        // |Spearman|, est x true
  int constant_columns = 0;
};

MccResult Mcc(const RowMatrix& est, const RowMatrix& truth, bool allow_permutation);

struct R2Options {
  double train_fraction = 0.7;
  std::uint64_t split_seed = 0;
  /// Multipliers of the median pairwise distance tried by leave-one-out CV.
  std::vector<double> bandwidth_grid = {0.05, 0.1, 0.15, 0.25, 0.4, 0.6, 1.0};
  Index cv_points = 1500;
  Index median_points = 1000;
};

struct R2Result {
  double r2 = 0.0;
  std::vector<double> per_coordinate;  // each floored at 0
  double bandwidth = 0.0;
  double median_distance = 0.0;
};

/// Nadaraya-Watson regression of each true coordinate on the (whitened) estimate,
/// scored by held-out R^2.
R2Result R2Kernel(const RowMatrix& est, const RowMatrix& truth, const R2Options& opts = {});

// Spatial surrogate metrics.

/// Median distance from each point to its nearest neighbor.
double MedianNearestNeighborDistance(const RowMatrix& coords);

/// Edge i -> j where j is the grid point nearest to coords_i + step_scale * winds_i
/// (ties to the lowest index), omitted when j == i or the wind is zero.
/// step_scale <= 0 selects the median nearest-neighbor distance.
RowMatrix WindReferenceGraph(const RowMatrix& coords, const RowMatrix& winds, double step_scale);

struct WshdWtpr {
  double wshd = 0.0;  // normalized by d(d-1)
  double wshd_raw = 0.0;
  double wtpr = 1.0;
};

WshdWtpr ComputeWshdWtpr(const RowMatrix& est, const RowMatrix& ref);

/// Max over column subsets of the given size of the mean |Pearson| with target.
double Smcc(const RowMatrix& est, const RowMatrix& target, int subset_size);

struct MetricsReport {
  std::optional<double> shd_norm, shd_raw, tpr, precision, f1;
  std::optional<double> shd_latent_inst, shd_latent_lag;
  std::optional<double> mcc_s, mcc_z, r2;
  std::optional<double> wshd, wshd_raw, wtpr, smcc;
  std::optional<std::vector<int>> permutation;
  std::vector<std::string> notices;
};

nlohmann::json ReportToJson(const MetricsReport& r);
MetricsReport ReportFromJson(const nlohmann::json& j);
/// Throws InvalidInput when `j` does not follow the report schema.
void ValidateReportJson(const nlohmann::json& j);

}  // namespace cadre::metrics
