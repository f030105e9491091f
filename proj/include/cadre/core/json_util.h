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

#include <string>

#include "cadre/core/error.h"
#include "cadre/core/types.h"
#include "json.hpp"

namespace cadre {

/// Row-major nested array; doubles are written with round-trip precision.
inline nlohmann::json MatrixToJson(const RowMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline RowMatrix MatrixFromJson(const nlohmann::json& j, const std::string& what) {
  Require(j.is_array(), ErrorKind::kInvalidConfig, what + ": expected a nested array");
  const Index rows = static_cast<Index>(j.size());
  const Index cols = rows > 0 ? static_cast<Index>(j[0].size()) : 0;
  RowMatrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    Require(row.is_array() && static_cast<Index>(row.size()) == cols, ErrorKind::kInvalidConfig,
            what + ": ragged rows");
    for (Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace cadre
