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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fmtlm/dataset.hpp"
#include "fmtlm/tensor.hpp"

namespace fmtlm {

// Synthetic multimodal summarisation task.
//
// The source timeline (L steps on the reference clock) is cut into M equal
// segments; target token t names the modality with the largest mean norm in
// segment t ("visual", "acoustic" or "textual"). Visual rows run at half the
// reference rate, acoustic rows at twice it. A text token's norm is its
// salience level, encoded in its spelling (lo*, mid*, hi* → 0.5, 1.5, 2.5).
// ASR tokens cover the first M−1 segments; OCR tokens fill the last one and
// mix copies of ASR tokens (redundant, contributing nothing) with novel
// slide-only words, so the fusion gate has something to filter.
struct SyntheticProfile {
  std::size_t length = 16;    // L
  std::size_t segments = 4;   // M
  std::size_t visual_dim = 32;
  std::size_t acoustic_dim = 32;
  double reference_rate = 4.0;
  double visual_rate_factor = 0.5;
  double acoustic_rate_factor = 2.0;
  double redundancy = 0.25;   // fraction of OCR tokens copied from the ASR
  double direction_noise = 0.3;

  std::size_t segment_length() const { return length / segments; }
  void validate() const;
};

SyntheticProfile synthetic_profile(const std::string& name);

inline constexpr std::array<const char*, 3> kClassTokens = {"visual", "acoustic", "textual"};
inline constexpr std::array<const char*, 3> kLevelPrefixes = {"lo", "mid", "hi"};
inline constexpr std::array<double, 3> kLevelNorms = {0.5, 1.5, 2.5};
inline constexpr std::size_t kWordsPerLevel = 8;
inline constexpr std::size_t kSpokenWordsPerLevel = 5;  // words 0..4 may appear in ASR

// Salience of a synthetic word (0 for anything else).
double token_salience(const std::string& token);

struct SyntheticSample {
  std::string id;
  Tensor visual;    // (L·visual_rate_factor) × visual_dim
  Tensor acoustic;  // (L·acoustic_rate_factor) × acoustic_dim
  std::vector<std::string> asr;
  std::vector<std::string> ocr;
  std::vector<int> classes;  // per segment, index into kClassTokens
  std::string summary;
};

// Per-segment mean norms {visual, acoustic, textual} computed from the data.
std::vector<std::array<double, 3>> segment_norms(const SyntheticSample& sample, const SyntheticProfile& profile);
// argmax of segment_norms per segment, lowest modality index on ties.
std::vector<int> segment_targets(const SyntheticSample& sample, const SyntheticProfile& profile);

std::vector<SyntheticSample> generate_synthetic(std::size_t n_samples, std::uint64_t seed,
                                                const SyntheticProfile& profile);

// Writes manifest.json, feat/*.flrt and text/*.txt under `dir`.
// In-memory equivalent of writing the sample and reading it back.
SampleData to_sample_data(const SyntheticSample& sample, const SyntheticProfile& profile);

void write_synthetic_dataset(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples,
                             const SyntheticProfile& profile);

}  // namespace fmtlm
