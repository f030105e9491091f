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

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cadre/core/error.h"
#include "cadre/harness/harness.h"

namespace cadre::harness {

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\"");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitRow(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(Trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool ParseDouble(const std::string& s, double* out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  *out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && errno != ERANGE && std::isfinite(*out);
}

}  // namespace

CsvTable ReadNumericCsv(const std::string& path) {
  std::ifstream in(path);
  Require(static_cast<bool>(in), ErrorKind::kIo, "cannot read " + path);
  CsvTable t;
  std::string line;
  while (std::getline(in, line) && Trim(line).empty()) {
  }
  Require(!Trim(line).empty(), ErrorKind::kEmptyData, path + ": no header row");
  t.header = SplitRow(line);
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    const std::vector<std::string> cells = SplitRow(line);
    Require(cells.size() == t.header.size(), ErrorKind::kRaggedRows,
            path + ": row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) + " cells, expected " +
                std::to_string(t.header.size()));
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      Require(ParseDouble(cells[c], &row[c]), ErrorKind::kNonNumericCell,
              path + ": row " + std::to_string(line_no) + ", column " + std::to_string(c + 1) + " ('" + cells[c] +
                  "') is not a finite number");
    }
    rows.push_back(std::move(row));
  }
  Require(!rows.empty(), ErrorKind::kEmptyData, path + ": no data rows");
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) t.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return t;
}

void WriteMatrixCsv(const RowMatrix& m, const std::vector<std::string>& header, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  Require(f != nullptr, ErrorKind::kIo, "cannot write " + path);
  for (std::size_t i = 0; i < header.size(); ++i) std::fprintf(f, "%s%s", i ? "," : "", header[i].c_str());
  if (!header.empty()) std::fputc('\n', f);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) std::fprintf(f, "%s%.17g", c ? "," : "", m(r, c));
    std::fputc('\n', f);
  }
  std::fclose(f);
}

dgp::Dataset IngestCsv(const std::string& path, const std::string& coords_path) {
  CsvTable t = ReadNumericCsv(path);
  dgp::Dataset d;
  d.names = t.header;
  d.x = std::move(t.values);
  const Index T = d.x.rows();
  for (Index c = 0; c < d.x.cols(); ++c) {
    const double mean = d.x.col(c).mean();
    d.x.col(c).array() -= mean;
    const double sd = T > 1 ? std::sqrt(d.x.col(c).squaredNorm() / static_cast<double>(T - 1)) : 0.0;
    if (sd > 0.0) d.x.col(c) /= sd;
  }
  if (!coords_path.empty()) {
    CsvTable c = ReadNumericCsv(coords_path);
    Require(c.values.cols() == 2 && c.values.rows() == d.x.cols(), ErrorKind::kShapeMismatch,
            coords_path + ": expected one x,y row per variable");
    d.coords = std::move(c.values);
  }
  return d;
}

}  // namespace cadre::harness
