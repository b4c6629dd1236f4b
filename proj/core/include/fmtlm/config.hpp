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
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace fmtlm {

inline constexpr int kConfigVersion = 1;

struct ModelConfig {
  std::size_t d_visual = 32;    // raw visual feature width
  std::size_t d_acoustic = 32;  // raw acoustic feature width
  std::size_t d_text = 16;      // ASR/OCR token embedding width
  std::size_t d_block = 16;     // per-modality block width; d_x = 3·d_block
  std::size_t n_layers = 2;
  std::size_t fms_units = 1;    // FMS units per layer
  std::size_t d_ff = 128;
  std::size_t d_hidden = 16;    // GRU output width
  std::size_t heads = 1;
  bool tie_embeddings = true;
  bool guided_gating = true;    // false forces every fusion gate to 1
  std::size_t ocr_cap = 500;

  std::size_t d_x() const { return 3 * d_block; }
};

struct SequenceConfig {
  std::size_t source_length = 16;  // L
  std::size_t max_target = 4;      // M_max
  double reference_rate = 4.0;     // Hz
};

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t total_steps = 2000;
  double peak_lr = 0.01;
  std::size_t warmup_steps = 2000;
  double dropout = 0.1;
  double clip_norm = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  std::size_t eval_interval = 100;
  std::size_t val_count = 0;  // trailing manifest samples held out for validation
  std::size_t min_frequency = 1;
};

struct RunConfig {
  int config_version = kConfigVersion;
  std::string profile = "toy";
  ModelConfig model;
  SequenceConfig sequence;
  TrainConfig train;
  std::string data;
  std::string out;
  std::uint64_t seed = 1;

  // Positional table length: source, delimiter, M_max targets and <stop>.
  std::size_t max_positions() const { return sequence.source_length + sequence.max_target + 2; }

  // Throws ConfigError on inconsistent dimensions.
  void validate() const;
};

// Named presets. "toy" is the desk-scale configuration; "full" mirrors the
// production feature widths (2048/512/768).
RunConfig profile_config(const std::string& name);

// Parses a config document layered over the profile it names (default toy).
// Unknown keys and a config_version other than 1 throw ConfigError.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig parse_config_text(const std::string& text);
// Overlays `patch` onto `base`, with the same key checking.
void merge_config(RunConfig& base, const nlohmann::json& patch);
nlohmann::json config_to_json(const RunConfig& config);

}  // namespace fmtlm
