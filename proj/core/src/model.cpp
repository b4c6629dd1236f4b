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

#include "fmtlm/model.hpp"

#include <cmath>

#include "fmtlm/errors.hpp"

namespace fmtlm {

std::vector<int> field_blocks(ReceptiveField f) {
  constexpr int V = static_cast<int>(Modality::kVisual);
  constexpr int A = static_cast<int>(Modality::kAcoustic);
  constexpr int T = static_cast<int>(Modality::kText);
  switch (f) {
    case ReceptiveField::kL: return {T};
    case ReceptiveField::kV: return {V};
    case ReceptiveField::kA: return {A};
    case ReceptiveField::kLV: return {V, T};
    case ReceptiveField::kLA: return {A, T};
    case ReceptiveField::kVA: return {V, A};
    case ReceptiveField::kLVA: return {V, A, T};
  }
  return {};
}

const char* field_name(ReceptiveField f) {
  static constexpr const char* names[] = {"L", "V", "A", "LV", "LA", "VA", "LVA"};
  return names[static_cast<int>(f)];
}

Mask attention_mask(std::span<const std::uint8_t> pad_mask) {
  const std::size_t n = pad_mask.size();
  Mask m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m.set(i, j, j > i || pad_mask[j]);
  return m;
}

namespace {

// Masked positions get −1e9 rather than −∞ so a fully masked row degrades
// to a uniform distribution instead of NaN.
constexpr double kMaskFill = -1e9;

Var field_input(Var x, ReceptiveField f, std::size_t d_block) {
  std::vector<Var> parts;
  for (int b : field_blocks(f)) {
    const auto begin = static_cast<std::size_t>(b) * d_block;
    parts.push_back(slice_cols(x, begin, begin + d_block));
  }
  return parts.size() == 1 ? parts[0] : concat(parts, 1);
}

}  // namespace

FmsOutput FmsUnit::forward(Tape& tape, Var x, const Mask& mask) const {
  if (x.cols() != 3 * d_block) {
    throw ConfigError("fms_forward: input width " + std::to_string(x.cols()) + " is not 3·d_block = " +
                      std::to_string(3 * d_block));
  }
  FmsOutput out;
  std::vector<Var> outputs;
  for (std::size_t k = 0; k < fields.size(); ++k) {
    const FieldAttention& fa = fields[k];
    Var xf = field_input(x, fa.field, d_block);
    Var q = fa.query(tape, xf);
    Var key = fa.key(tape, xf);
    Var v = fa.value(tape, xf);
    const std::size_t width = xf.cols();
    const std::size_t head_dim = width / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Var> head_out;
    for (std::size_t h = 0; h < heads; ++h) {
      Var qh = heads == 1 ? q : slice_cols(q, h * head_dim, (h + 1) * head_dim);
      Var kh = heads == 1 ? key : slice_cols(key, h * head_dim, (h + 1) * head_dim);
      Var vh = heads == 1 ? v : slice_cols(v, h * head_dim, (h + 1) * head_dim);
      Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
      Var weights = softmax(masked_fill(scores, mask, kMaskFill));
      head_out.push_back(matmul(weights, vh));
    }
    Var attended = heads == 1 ? head_out[0] : concat(head_out, 1);
    out.field_outputs[k] = attended;
    outputs.push_back(attended);
  }
  out.out = s1(tape, concat(outputs, 1));
  return out;
}

Var MtLayer::forward(Tape& tape, Var x, const Mask& mask, double dropout_rate) const {
  std::vector<Var> unit_out;
  for (const auto& u : units) unit_out.push_back(u.forward(tape, x, mask).out);
  Var stacked = unit_out.size() == 1 ? unit_out[0] : concat(unit_out, 1);
  Var summarized = dropout(s2(tape, stacked), dropout_rate);
  Var h = norm1(tape, add(x, summarized));
  Var ff = ff_out(tape, relu(ff_in(tape, h)));
  return norm2(tape, add(h, dropout(ff, dropout_rate)));
}

Var GruHead::forward(Tape& tape, Var states) const {
  const std::size_t d = d_hidden;
  const std::size_t n = states.rows();
  Var xi = input(tape, states);
  Var h = tape.constant(Tensor::zeros(1, d));
  std::vector<Var> outs;
  outs.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    Var xt = slice_rows(xi, t, t + 1);
    Var hh = hidden(tape, h);
    Var r = sigmoid(add(slice_cols(xt, 0, d), slice_cols(hh, 0, d)));
    Var z = sigmoid(add(slice_cols(xt, d, 2 * d), slice_cols(hh, d, 2 * d)));
    Var cand = tanh(add(slice_cols(xt, 2 * d, 3 * d), mul(r, slice_cols(hh, 2 * d, 3 * d))));
    // h' = (1 − z)⊙n + z⊙h = n + z⊙(h − n)
    h = add(cand, mul(z, sub(h, cand)));
    outs.push_back(h);
  }
  return concat(outs, 0);
}

// ---------------------------------------------------------------------------

FmtModel::FmtModel(const RunConfig& config, std::size_t vocab_size, Rng& rng)
    : config_(config), vocab_size_(vocab_size) {
  config_.validate();
  if (vocab_size_ <= 4) throw ConfigError("vocabulary must include the reserved tokens");
  const ModelConfig& m = config_.model;
  const std::size_t d_b = m.d_block;
  const std::size_t d_x = m.d_x();

  projections_.visual = Affine::create(params_, "proj.visual", m.d_visual, d_b, rng);
  projections_.acoustic = Affine::create(params_, "proj.acoustic", m.d_acoustic, d_b, rng);
  projections_.textual = Affine::create(params_, "proj.textual", m.d_text, d_b, rng);
  token_embedding_ = &params_.create("embed.token", normal_init(vocab_size_, d_b, 0.02, rng));
  if (m.d_text != d_b) {
    text_embedding_ = &params_.create("embed.text", normal_init(vocab_size_, m.d_text, 0.02, rng));
  }
  w_b_ = &params_.create("fusion.w_b", glorot_uniform(m.d_text, m.d_text, rng));
  positions_ = &params_.create("embed.position", normal_init(config_.max_positions(), d_x, 0.02, rng));

  for (std::size_t l = 0; l < m.n_layers; ++l) {
    const std::string lp = "layer" + std::to_string(l);
    MtLayer layer;
    for (std::size_t p = 0; p < m.fms_units; ++p) {
      const std::string up = lp + ".fms" + std::to_string(p);
      FmsUnit unit;
      unit.d_block = d_b;
      unit.heads = m.heads;
      std::size_t total = 0;
      for (ReceptiveField f : kAllFields) {
        const std::size_t w = field_blocks(f).size() * d_b;
        total += w;
        const std::string fp = up + "." + field_name(f);
        unit.fields.push_back(FieldAttention{f, Affine::create(params_, fp + ".query", w, w, rng),
                                             Affine::create(params_, fp + ".key", w, w, rng, /*with_bias=*/false),
                                             Affine::create(params_, fp + ".value", w, w, rng)});
      }
      unit.s1 = Affine::create(params_, up + ".s1", total, d_x, rng);
      layer.units.push_back(std::move(unit));
    }
    layer.s2 = Affine::create(params_, lp + ".s2", m.fms_units * d_x, d_x, rng);
    layer.norm1 = LayerNorm::create(params_, lp + ".norm1", d_x);
    layer.ff_in = Affine::create(params_, lp + ".ff_in", d_x, m.d_ff, rng);
    layer.ff_out = Affine::create(params_, lp + ".ff_out", m.d_ff, d_x, rng);
    layer.norm2 = LayerNorm::create(params_, lp + ".norm2", d_x);
    layers_.push_back(std::move(layer));
  }

  head_.d_hidden = m.d_hidden;
  head_.input = Affine::create(params_, "gru.input", d_x, 3 * m.d_hidden, rng);
  head_.hidden = Affine::create(params_, "gru.hidden", m.d_hidden, 3 * m.d_hidden, rng);
  if (m.tie_embeddings) {
    output_bias_ = &params_.create("output.bias", Tensor::zeros(1, vocab_size_));
  } else {
    output_ = Affine::create(params_, "output", m.d_hidden, vocab_size_, rng);
  }
}

FmtModel FmtModel::from_seed(const RunConfig& config, std::size_t vocab_size, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 0x1417);
  return FmtModel(config, vocab_size, rng);
}

Var FmtModel::text_table(Tape& tape) const {
  return tape.param(text_embedding_ ? *text_embedding_ : *token_embedding_);
}

AlignedSample FmtModel::encode_source(Tape& tape, const SourceInputs& in) const {
  const ModelConfig& m = config_.model;
  if (in.asr.empty()) throw InputError("encode_source: ASR transcript is empty");
  Var table = text_table(tape);
  Var asr = embed(table, in.asr);
  const std::vector<int> ocr_ids = cap_ocr(in.ocr, m.ocr_cap);
  Var ocr = ocr_ids.empty() ? tape.constant(Tensor::zeros(0, m.d_text)) : embed(table, ocr_ids);
  FusionResult fusion =
      fuse(asr, ocr, correlation(tape), m.guided_gating ? GateMode::kGuided : GateMode::kOpen);
  Var text = fusion.fused;
  const double ref = in.reference_rate > 0 ? in.reference_rate : config_.sequence.reference_rate;
  const double text_rate = in.text_rate > 0 ? in.text_rate : ref;
  if (text_rate != ref) text = embed(text, resample_indices(text.rows(), text_rate, ref));
  Var visual = tape.constant(in.visual.empty() ? Tensor::zeros(0, m.d_visual) : in.visual);
  Var acoustic = tape.constant(in.acoustic.empty() ? Tensor::zeros(0, m.d_acoustic) : in.acoustic);
  return pad_and_assemble(tape, visual, acoustic, text, config_.sequence.source_length, projections_);
}

Var FmtModel::fmt_forward(Tape& tape, Var x, std::span<const std::uint8_t> pad_mask) const {
  const std::size_t n = x.rows();
  if (x.cols() != config_.model.d_x()) {
    throw ConfigError("fmt_forward: input width " + std::to_string(x.cols()) + ", expected d_x = " +
                      std::to_string(config_.model.d_x()));
  }
  if (n > positions_->value.rows()) {
    throw LengthError("fmt_forward: sequence of " + std::to_string(n) + " positions exceeds the positional table of " +
                      std::to_string(positions_->value.rows()));
  }
  if (pad_mask.size() != n) throw ShapeError("fmt_forward: pad mask length does not match sequence");
  const double rate = tape.training() ? config_.train.dropout : 0.0;
  Var h = dropout(add(x, slice_rows(tape.param(*positions_), 0, n)), rate);
  const Mask mask = attention_mask(pad_mask);
  for (const auto& layer : layers_) h = layer.forward(tape, h, mask, rate);
  return h;
}

Var FmtModel::head_logits(Tape& tape, Var states) const {
  Var hs = head_.forward(tape, states);
  if (config_.model.tie_embeddings) {
    return add(matmul(hs, transpose(token_table(tape))), tape.param(*output_bias_));
  }
  return output_(tape, hs);
}

std::size_t FmtModel::expected_parameter_count(const RunConfig& config, std::size_t vocab_size) {
  const ModelConfig& m = config.model;
  const std::size_t d_b = m.d_block, d_x = m.d_x(), d_y = m.d_hidden, V = vocab_size;
  std::size_t n = (m.d_visual + 1) * d_b + (m.d_acoustic + 1) * d_b + (m.d_text + 1) * d_b;
  n += V * d_b;
  if (m.d_text != d_b) n += V * m.d_text;
  n += m.d_text * m.d_text;
  n += config.max_positions() * d_x;
  std::size_t unit = 0;
  for (std::size_t blocks : {1, 1, 1, 2, 2, 2, 3}) {
    const std::size_t w = blocks * d_b;
    unit += 3 * w * w + 2 * w;  // key map has no bias
  }
  unit += (12 * d_b + 1) * d_x;
  std::size_t layer = m.fms_units * unit;
  layer += (m.fms_units * d_x + 1) * d_x;
  layer += 2 * d_x + (d_x + 1) * m.d_ff + (m.d_ff + 1) * d_x + 2 * d_x;
  n += m.n_layers * layer;
  n += (d_x + 1) * 3 * d_y + (d_y + 1) * 3 * d_y;
  n += m.tie_embeddings ? V : (d_y + 1) * V;
  return n;
}

}  // namespace fmtlm
