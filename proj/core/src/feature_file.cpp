// Copyright 2026 The fmtlm Authors.
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

#include "fmtlm/feature_file.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fmtlm/errors.hpp"

namespace fmtlm {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_feature_file(const Tensor& tensor) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + 4 * tensor.rank() + 4 * tensor.size());
  out.insert(out.end(), std::begin(kFeatureMagic), std::end(kFeatureMagic));
  put_u32(out, kFeatureVersion);
  put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : tensor.values()) {
    if (!std::isfinite(v)) throw NumericError("feature file: refusing to write non-finite value");
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Tensor decode_feature_file(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
    throw FormatError(origin + ": bad magic (expected FLRT)");
  }
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kFeatureVersion) {
    throw FormatError(origin + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t rank = get_u32(bytes.data() + 8);
  const std::size_t header = 12 + 4 * static_cast<std::size_t>(rank);
  if (bytes.size() < header) throw FormatError(origin + ": truncated header");
  Shape shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) shape[i] = get_u32(bytes.data() + 12 + 4 * i);
  const std::size_t expected = 4 * shape_size(shape);
  const std::size_t actual = bytes.size() - header;
  if (actual != expected) {
    throw FormatError(origin + ": payload is " + std::to_string(actual) + " bytes, expected " +
                      std::to_string(expected) + " for shape " + shape_string(shape));
  }
  std::vector<double> data(shape_size(shape));
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes.data() + header + 4 * i));
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_feature_file(const std::filesystem::path& path, const Tensor& tensor) {
  write_bytes(path, encode_feature_file(tensor));
}

Tensor read_feature_file(const std::filesystem::path& path) {
  return decode_feature_file(read_bytes(path), path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace fmtlm
