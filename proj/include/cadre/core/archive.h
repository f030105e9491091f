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
#include <utility>
#include <vector>

#include "cadre/core/types.h"

namespace cadre {

/// Named-array container used for datasets, checkpoints, and graph files.
///
/// Byte layout (little-endian):
///   "CADRARC1"                      8-byte magic
///   u64 metadata length, bytes      UTF-8 JSON text (may be empty)
///   u64 array count
///   per array: u64 name length, name bytes, u64 rows, u64 cols,
///              rows*cols f64 values in row-major order
/// Arrays keep insertion order, so equal contents give identical bytes.
class Archive {
 public:
  std::string metadata;

  void Put(const std::string& name, RowMatrix value);
  bool Has(const std::string& name) const;
  const RowMatrix& Get(const std::string& name) const;
  const RowMatrix* Find(const std::string& name) const;
  const std::vector<std::pair<std::string, RowMatrix>>& arrays() const { return arrays_; }

  std::string Serialize() const;
  static Archive Deserialize(const std::string& bytes);

  void Save(const std::string& path) const;
  static Archive Load(const std::string& path);

 private:
  std::vector<std::pair<std::string, RowMatrix>> arrays_;
};

std::string ReadFileBytes(const std::string& path);
void WriteFileBytes(const std::string& path, const std::string& bytes);

/// FNV-1a 64-bit digest in hex, for reproducibility checks.
std::string HashBytes(const std::string& bytes);

}  // namespace cadre
