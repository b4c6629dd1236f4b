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

#include "fmtlm/dataset.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "fmtlm/errors.hpp"
#include "fmtlm/feature_file.hpp"
#include "fmtlm/vocab.hpp"

namespace fmtlm {

namespace fs = std::filesystem;
using nlohmann::json;

const SampleRecord& Manifest::find(const std::string& id) const {
  for (const auto& s : samples)
    if (s.id == id) return s;
  throw InputError("no sample with id '" + id + "' in manifest");
}

Manifest parse_manifest(const std::string& text, const fs::path& root) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  if (!doc.is_array()) throw FormatError("manifest: top level must be an array");
  Manifest m;
  m.root = root;
  for (const auto& rec : doc) {
    auto str = [&](const char* key) {
      if (!rec.contains(key) || !rec[key].is_string()) {
        throw FormatError(std::string("manifest: record missing string field '") + key + "'");
      }
      return rec[key].get<std::string>();
    };
    auto rate = [&](const char* key) -> std::optional<double> {
      if (!rec.contains(key) || rec[key].is_null()) return std::nullopt;
      return rec[key].get<double>();
    };
    SampleRecord r;
    r.id = str("id");
    r.visual = str("visual");
    r.acoustic = str("acoustic");
    r.asr = str("asr");
    if (rec.contains("ocr") && !rec["ocr"].is_null()) r.ocr = rec["ocr"].get<std::string>();
    r.summary = str("summary");
    r.visual_rate = rate("visual_rate");
    r.acoustic_rate = rate("acoustic_rate");
    r.text_rate = rate("text_rate");
    m.samples.push_back(std::move(r));
  }
  return m;
}

Manifest load_manifest(const fs::path& dir) {
  Manifest m = parse_manifest(read_text(dir / "manifest.json"), dir);
  for (const auto& s : m.samples) {
    for (const std::string* p : {&s.visual, &s.acoustic, &s.asr}) {
      if (!fs::exists(dir / *p)) throw IoError("manifest: sample '" + s.id + "' references missing " + (dir / *p).string());
    }
    if (s.ocr && !fs::exists(dir / *s.ocr)) {
      throw IoError("manifest: sample '" + s.id + "' references missing " + (dir / *s.ocr).string());
    }
  }
  return m;
}

std::string manifest_to_json(const std::vector<SampleRecord>& samples) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& s : samples) {
    nlohmann::ordered_json rec;
    rec["id"] = s.id;
    rec["visual"] = s.visual;
    rec["acoustic"] = s.acoustic;
    rec["asr"] = s.asr;
    rec["ocr"] = s.ocr ? nlohmann::ordered_json(*s.ocr) : nlohmann::ordered_json(nullptr);
    rec["summary"] = s.summary;
    if (s.visual_rate) rec["visual_rate"] = *s.visual_rate;
    if (s.acoustic_rate) rec["acoustic_rate"] = *s.acoustic_rate;
    if (s.text_rate) rec["text_rate"] = *s.text_rate;
    doc.push_back(std::move(rec));
  }
  return doc.dump(1) + "\n";
}

SampleData load_sample(const Manifest& manifest, const SampleRecord& record, double reference_rate) {
  SampleData d;
  d.id = record.id;
  d.visual = read_feature_file(manifest.root / record.visual);
  d.acoustic = read_feature_file(manifest.root / record.acoustic);
  if (d.visual.rank() != 2 || d.acoustic.rank() != 2) {
    throw FormatError("sample '" + record.id + "': feature files must be rank 2");
  }
  d.asr = split_tokens(read_text(manifest.root / record.asr));
  if (record.ocr) d.ocr = split_tokens(read_text(manifest.root / *record.ocr));
  d.summary = record.summary;
  d.visual_rate = record.visual_rate.value_or(reference_rate);
  d.acoustic_rate = record.acoustic_rate.value_or(reference_rate);
  d.text_rate = record.text_rate.value_or(reference_rate);
  return d;
}

// ---------------------------------------------------------------------------

std::vector<int> resample_indices(std::size_t length, double source_rate, double reference_rate) {
  if (!(source_rate > 0) || !(reference_rate > 0)) {
    throw ContractError("resample_to_clock: rates must be positive");
  }
  if (length == 0) return {};
  // The small slack keeps exact rational cases (e.g. 10 Hz → 5 Hz) exact
  // despite binary rounding of the ratio.
  const double ratio = reference_rate / source_rate;
  const auto out_len = static_cast<std::size_t>(std::ceil(static_cast<double>(length) * ratio - 1e-9));
  std::vector<int> idx(out_len);
  for (std::size_t j = 0; j < out_len; ++j) {
    const auto src = static_cast<std::size_t>(std::floor(static_cast<double>(j) * source_rate / reference_rate + 1e-9));
    idx[j] = static_cast<int>(std::min(src, length - 1));
  }
  return idx;
}

Tensor resample_to_clock(const Tensor& seq, double source_rate, double reference_rate) {
  if (seq.rank() != 2) throw ShapeError("resample_to_clock: expected l×d, got " + shape_string(seq.shape()));
  if (seq.rows() == 0) throw ContractError("resample_to_clock: sequence must have at least one row");
  const auto idx = resample_indices(seq.rows(), source_rate, reference_rate);
  Tensor out = Tensor::zeros(idx.size(), seq.cols());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    auto src = seq.row_span(static_cast<std::size_t>(idx[j]));
    std::copy(src.begin(), src.end(), out.row_span(j).begin());
  }
  return out;
}

namespace {

Var place_block(Tape& tape, Var stream, std::size_t length, const Affine& proj, const char* name,
                bool& truncated) {
  const std::size_t d_b = proj.out();
  std::size_t rows = stream.rows();
  if (stream.cols() != proj.in()) {
    throw ShapeError(std::string("pad_and_assemble: ") + name + " stream has width " +
                     std::to_string(stream.cols()) + ", projection expects " + std::to_string(proj.in()));
  }
  if (rows > length) {
    spdlog::warn("{} stream of {} rows truncated to L={}", name, rows, length);
    stream = slice_rows(stream, 0, length);
    rows = length;
    truncated = true;
  }
  if (rows == 0) return tape.constant(Tensor::zeros(length, d_b));
  Var projected = proj(tape, stream);
  if (rows == length) return projected;
  return concat({projected, tape.constant(Tensor::zeros(length - rows, d_b))}, 0);
}

}  // namespace

AlignedSample pad_and_assemble(Tape& tape, Var visual, Var acoustic, Var textual, std::size_t length,
                               const ModalityProjections& projections) {
  if (length == 0) throw ContractError("pad_and_assemble: L must be positive");
  const std::size_t d_b = projections.visual.out();
  if (projections.acoustic.out() != d_b || projections.textual.out() != d_b) {
    throw ConfigError("pad_and_assemble: projections disagree on block width");
  }
  AlignedSample out;
  const std::size_t present = std::min(length, std::max({visual.rows(), acoustic.rows(), textual.rows()}));
  Var v = place_block(tape, visual, length, projections.visual, "visual", out.truncated);
  Var a = place_block(tape, acoustic, length, projections.acoustic, "acoustic", out.truncated);
  Var t = place_block(tape, textual, length, projections.textual, "textual", out.truncated);
  out.x = concat({v, a, t}, 1);
  out.pad_mask.assign(length, 0);
  for (std::size_t i = present; i < length; ++i) out.pad_mask[i] = 1;
  return out;
}

}  // namespace fmtlm
