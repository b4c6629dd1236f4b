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
#include <string>
#include <vector>

#include "fmtlm/autodiff.hpp"
#include "fmtlm/config.hpp"
#include "fmtlm/dataset.hpp"
#include "fmtlm/fusion.hpp"
#include "fmtlm/layers.hpp"

namespace fmtlm {

// Block order inside every timestep of x.
enum class Modality : int { kVisual = 0, kAcoustic = 1, kText = 2 };

// The seven non-empty modality subsets an FMS attention may see, in the
// order L, V, A, LV, LA, VA, LVA.
enum class ReceptiveField : int { kL, kV, kA, kLV, kLA, kVA, kLVA };
inline constexpr std::size_t kNumFields = 7;
inline constexpr std::array<ReceptiveField, kNumFields> kAllFields = {
    ReceptiveField::kL,  ReceptiveField::kV,  ReceptiveField::kA,  ReceptiveField::kLV,
    ReceptiveField::kLA, ReceptiveField::kVA, ReceptiveField::kLVA};

// Block indices of a field in ascending (V, A, T) order.
std::vector<int> field_blocks(ReceptiveField f);
const char* field_name(ReceptiveField f);

// Attention mask for L' positions: key j is hidden from query i when j > i
// or when j is padding.
Mask attention_mask(std::span<const std::uint8_t> pad_mask);

struct FieldAttention {
  ReceptiveField field;
  Affine query;
  Affine key;
  Affine value;
};

struct FmsOutput {
  Var out;                                   // L'×d_x after S1
  std::array<Var, kNumFields> field_outputs; // per-field attention, pre-S1
};

// Seven receptive-field-restricted self-attentions reduced by S1.
struct FmsUnit {
  std::vector<FieldAttention> fields;
  Affine s1;  // 12·d_b → d_x
  std::size_t d_block = 0;
  std::size_t heads = 1;

  FmsOutput forward(Tape& tape, Var x, const Mask& mask) const;
};

struct MtLayer {
  std::vector<FmsUnit> units;
  Affine s2;  // P·d_x → d_x
  LayerNorm norm1;
  Affine ff_in;
  Affine ff_out;
  LayerNorm norm2;

  Var forward(Tape& tape, Var x, const Mask& mask, double dropout) const;
};

struct GruHead {
  Affine input;   // d_x → 3·d_y, gates ordered [reset, update, candidate]
  Affine hidden;  // d_y → 3·d_y
  std::size_t d_hidden = 0;

  // Left-to-right recurrence from h₀ = 0; returns L'×d_y.
  Var forward(Tape& tape, Var states) const;
};

// Everything a sample contributes to the source side, already on the
// reference clock (visual/acoustic) with tokens mapped to ids.
struct SourceInputs {
  Tensor visual;    // l_v × d_visual
  Tensor acoustic;  // l_a × d_acoustic
  std::vector<int> asr;
  std::vector<int> ocr;
  double text_rate = 0;
  double reference_rate = 0;
};

class FmtModel {
 public:
  // Initialises every parameter from `rng`: affine weights Glorot-uniform,
  // biases 0, embeddings N(0, 0.02²).
  FmtModel(const RunConfig& config, std::size_t vocab_size, Rng& rng);
  static FmtModel from_seed(const RunConfig& config, std::size_t vocab_size, std::uint64_t seed);

  FmtModel(const FmtModel&) = delete;
  FmtModel& operator=(const FmtModel&) = delete;
  FmtModel(FmtModel&&) = default;

  const RunConfig& config() const { return config_; }
  std::size_t vocab_size() const { return vocab_size_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }

  const std::vector<MtLayer>& layers() const { return layers_; }
  const GruHead& head() const { return head_; }
  const ModalityProjections& projections() const { return projections_; }

  Var token_table(Tape& tape) const { return tape.param(*token_embedding_); }
  Var text_table(Tape& tape) const;
  Var correlation(Tape& tape) const { return tape.param(*w_b_); }

  // Fuses ASR/OCR, aligns every stream and assembles the L×d_x source.
  AlignedSample encode_source(Tape& tape, const SourceInputs& in) const;

  // Stack of MTLs over x (L'×d_x) after adding positional embeddings.
  // Throws LengthError when L' exceeds the positional table.
  Var fmt_forward(Tape& tape, Var x, std::span<const std::uint8_t> pad_mask) const;

  // GRU head and vocabulary projection: L'×|V| logits.
  Var head_logits(Tape& tape, Var states) const;

  Var logits(Tape& tape, Var x, std::span<const std::uint8_t> pad_mask) const {
    return head_logits(tape, fmt_forward(tape, x, pad_mask));
  }

  // Closed-form scalar count for a configuration; used to audit init.
  static std::size_t expected_parameter_count(const RunConfig& config, std::size_t vocab_size);

 private:
  RunConfig config_;
  std::size_t vocab_size_;
  ParameterStore params_;
  ModalityProjections projections_;
  Parameter* token_embedding_ = nullptr;  // |V|×d_b
  Parameter* text_embedding_ = nullptr;   // |V|×d_text, only when d_text ≠ d_b
  Parameter* w_b_ = nullptr;              // d_text×d_text
  Parameter* positions_ = nullptr;        // max_positions × d_x
  std::vector<MtLayer> layers_;
  GruHead head_;
  Affine output_;                         // untied projection
  Parameter* output_bias_ = nullptr;      // tied projection bias
};

}  // namespace fmtlm
