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

#include "cadre/core/archive.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cadre/core/error.h"

namespace cadre {
namespace {

constexpr char kMagic[8] = {'C', 'A', 'D', 'R', 'A', 'R', 'C', '1'};

static_assert(std::endian::native == std::endian::little, "archive I/O assumes little-endian hosts");

void PutU64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t U64() {
    Need(8);
    std::uint64_t v;
    std::memcpy(&v, bytes_.data() + pos_, 8);
    pos_ += 8;
    return v;
  }
  std::string Bytes(std::uint64_t n) {
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void Doubles(double* out, std::uint64_t n) {
    Need(n * 8);
    std::memcpy(out, bytes_.data() + pos_, n * 8);
    pos_ += n * 8;
  }

 private:
  void Need(std::uint64_t n) const {
    if (pos_ + n > bytes_.size()) Fail(ErrorKind::kIo, "truncated archive");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Archive::Put(const std::string& name, RowMatrix value) {
  for (auto& [key, m] : arrays_) {
    if (key == name) {
      m = std::move(value);
      return;
    }
  }
  arrays_.emplace_back(name, std::move(value));
}

bool Archive::Has(const std::string& name) const { return Find(name) != nullptr; }

const RowMatrix* Archive::Find(const std::string& name) const {
  for (const auto& [key, m] : arrays_)
    if (key == name) return &m;
  return nullptr;
}

const RowMatrix& Archive::Get(const std::string& name) const {
  const RowMatrix* m = Find(name);
  if (m == nullptr) Fail(ErrorKind::kIo, "archive has no array named '" + name + "'");
  return *m;
}

std::string Archive::Serialize() const {
  std::string out(kMagic, 8);
  PutU64(out, metadata.size());
  out += metadata;
  PutU64(out, arrays_.size());
  for (const auto& [name, m] : arrays_) {
    PutU64(out, name.size());
    out += name;
    PutU64(out, static_cast<std::uint64_t>(m.rows()));
    PutU64(out, static_cast<std::uint64_t>(m.cols()));
    out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * 8);
  }
  return out;
}

Archive Archive::Deserialize(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    Fail(ErrorKind::kIo, "not a CADRARC1 archive");
  }
  Reader reader(bytes);
  reader.Bytes(8);
  Archive archive;
  archive.metadata = reader.Bytes(reader.U64());
  const std::uint64_t count = reader.U64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = reader.Bytes(reader.U64());
    const auto rows = static_cast<Index>(reader.U64());
    const auto cols = static_cast<Index>(reader.U64());
    RowMatrix m(rows, cols);
    reader.Doubles(m.data(), static_cast<std::uint64_t>(rows * cols));
    archive.arrays_.emplace_back(std::move(name), std::move(m));
  }
  return archive;
}

void Archive::Save(const std::string& path) const { WriteFileBytes(path, Serialize()); }

Archive Archive::Load(const std::string& path) { return Deserialize(ReadFileBytes(path)); }

std::string ReadFileBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileBytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) Fail(ErrorKind::kIo, "short write to '" + path + "'");
}

std::string HashBytes(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

}  // namespace cadre
