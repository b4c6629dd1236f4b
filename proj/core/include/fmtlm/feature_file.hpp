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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fmtlm/tensor.hpp"

namespace fmtlm {

// Binary container for feature matrices and checkpoint parameters:
//
//   bytes 0..3   magic "FLRT"
//   u32 LE       version (1)
//   u32 LE       rank
//   rank × u32   extents
//   payload      ∏extents little-endian IEEE-754 float32, row-major
//
// Values are narrowed to float32 on write; a round trip of float32-exact
// data is bit-exact.
inline constexpr char kFeatureMagic[4] = {'F', 'L', 'R', 'T'};
inline constexpr std::uint32_t kFeatureVersion = 1;

std::vector<std::uint8_t> encode_feature_file(const Tensor& tensor);
Tensor decode_feature_file(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

void write_feature_file(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_feature_file(const std::filesystem::path& path);

// Whole-file helpers shared by the readers/writers in this library. Both
// throw IoError naming the path.
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace fmtlm
