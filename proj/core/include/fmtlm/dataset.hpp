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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fmtlm/autodiff.hpp"
#include "fmtlm/layers.hpp"
#include "fmtlm/tensor.hpp"

namespace fmtlm {

// One record of manifest.json. Paths are stored as written and resolved
// relative to the manifest's directory.
struct SampleRecord {
  std::string id;
  std::string visual;
  std::string acoustic;
  std::string asr;
  std::optional<std::string> ocr;
  std::string summary;
  // Native stream rates in Hz; absent fields default to the reference rate.
  std::optional<double> visual_rate;
  std::optional<double> acoustic_rate;
  std::optional<double> text_rate;
};

struct Manifest {
  std::filesystem::path root;
  std::vector<SampleRecord> samples;  // file order

  const SampleRecord& find(const std::string& id) const;
};

Manifest parse_manifest(const std::string& json, const std::filesystem::path& root);
// Loads <dir>/manifest.json and checks that every referenced file exists.
Manifest load_manifest(const std::filesystem::path& dir);
std::string manifest_to_json(const std::vector<SampleRecord>& samples);

// Raw inputs of one sample, read from disk.
struct SampleData {
  std::string id;
  Tensor visual;    // l_v × d_v
  Tensor acoustic;  // l_a × d_a
  std::vector<std::string> asr;
  std::vector<std::string> ocr;
  std::string summary;
  double visual_rate = 0;
  double acoustic_rate = 0;
  double text_rate = 0;
};

SampleData load_sample(const Manifest& manifest, const SampleRecord& record, double reference_rate);

// ---------------------------------------------------------------------------
// Reference-clock alignment.

// Source row used for each output row under nearest-previous sampling:
// l' = ceil(l·ref/src) rows, row j ← floor(j·src/ref).
std::vector<int> resample_indices(std::size_t length, double source_rate, double reference_rate);
Tensor resample_to_clock(const Tensor& seq, double source_rate, double reference_rate);

// Per-modality affine maps to the common block width d_b.
struct ModalityProjections {
  Affine visual;
  Affine acoustic;
  Affine textual;
};

// A source sequence ready for the language model: L × 3·d_b with blocks in
// ⟨visual | acoustic | textual⟩ order.
struct AlignedSample {
  Var x;
  std::vector<std::uint8_t> pad_mask;  // true where every stream was absent
  std::vector<int> target;
  bool truncated = false;
};

// Projects each stream (already on the reference clock) to d_b, places it
// in its block and zero-pads to L. Streams longer than L are truncated with
// a logged warning. A stream with zero rows leaves its block all zero.
AlignedSample pad_and_assemble(Tape& tape, Var visual, Var acoustic, Var textual, std::size_t length,
                               const ModalityProjections& projections);

}  // namespace fmtlm
