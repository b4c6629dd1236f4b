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

#include "fmtlm/config.hpp"

#include <nlohmann/json.hpp>

#include "fmtlm/errors.hpp"

namespace fmtlm {

using nlohmann::json;

namespace {

template <typename T>
void read_field(const json& obj, const char* key, T& dst, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown config key '" + where + "." + key + "'");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (config_version != kConfigVersion) {
    throw ConfigError("config_version must be " + std::to_string(kConfigVersion));
  }
  const auto& m = model;
  if (m.d_visual == 0 || m.d_acoustic == 0 || m.d_text == 0 || m.d_block == 0 || m.n_layers == 0 ||
      m.fms_units == 0 || m.d_ff == 0 || m.d_hidden == 0 || m.heads == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (m.d_block % m.heads != 0) throw ConfigError("heads must divide d_block");
  if (m.tie_embeddings && m.d_hidden != m.d_block) {
    throw ConfigError("tied embeddings need d_hidden == d_block");
  }
  if (sequence.source_length == 0 || sequence.max_target == 0 || !(sequence.reference_rate > 0)) {
    throw ConfigError("sequence lengths and reference_rate must be positive");
  }
  const auto& t = train;
  if (t.batch_size == 0 || t.total_steps == 0 || !(t.peak_lr > 0) || t.eval_interval == 0 ||
      !(t.clip_norm > 0) || t.min_frequency == 0) {
    throw ConfigError("training parameters must be positive");
  }
  if (t.dropout < 0 || t.dropout >= 1) throw ConfigError("dropout must lie in [0, 1)");
}

RunConfig profile_config(const std::string& name) {
  RunConfig c;
  c.profile = name;
  if (name == "toy") {
    c.model.tie_embeddings = false;
    c.train.total_steps = 2000;
    c.train.warmup_steps = 2000;
    c.train.peak_lr = 0.01;
    c.train.dropout = 0.1;
    c.train.val_count = 64;
    return c;
  }
  if (name == "full") {
    c.model.d_visual = 2048;
    c.model.d_acoustic = 512;
    c.model.d_text = 768;
    c.model.d_block = 128;
    c.model.n_layers = 4;
    c.model.fms_units = 2;
    c.model.d_ff = 4 * c.model.d_x();
    c.model.d_hidden = 128;
    c.model.heads = 4;
    c.sequence.source_length = 64;
    c.sequence.max_target = 8;
    c.train.total_steps = 500000;
    c.train.warmup_steps = 2000;
    c.train.eval_interval = 1000;
    c.train.val_count = 64;
    return c;
  }
  throw ConfigError("unknown profile '" + name + "' (expected toy or full)");
}

void merge_config(RunConfig& c, const json& doc) {
  reject_unknown(doc, {"config_version", "profile", "model", "sequence", "train", "data", "out", "seed"}, "config");
  read_field(doc, "config_version", c.config_version, "config");
  read_field(doc, "data", c.data, "config");
  read_field(doc, "out", c.out, "config");
  read_field(doc, "seed", c.seed, "config");
  if (doc.contains("model")) {
    const json& m = doc["model"];
    reject_unknown(m, {"d_visual", "d_acoustic", "d_text", "d_block", "n_layers", "fms_units", "d_ff", "d_hidden",
                       "heads", "tie_embeddings", "guided_gating", "ocr_cap"},
                   "model");
    read_field(m, "d_visual", c.model.d_visual, "model");
    read_field(m, "d_acoustic", c.model.d_acoustic, "model");
    read_field(m, "d_text", c.model.d_text, "model");
    read_field(m, "d_block", c.model.d_block, "model");
    read_field(m, "n_layers", c.model.n_layers, "model");
    read_field(m, "fms_units", c.model.fms_units, "model");
    read_field(m, "d_ff", c.model.d_ff, "model");
    read_field(m, "d_hidden", c.model.d_hidden, "model");
    read_field(m, "heads", c.model.heads, "model");
    read_field(m, "tie_embeddings", c.model.tie_embeddings, "model");
    read_field(m, "guided_gating", c.model.guided_gating, "model");
    read_field(m, "ocr_cap", c.model.ocr_cap, "model");
  }
  if (doc.contains("sequence")) {
    const json& s = doc["sequence"];
    reject_unknown(s, {"source_length", "max_target", "reference_rate"}, "sequence");
    read_field(s, "source_length", c.sequence.source_length, "sequence");
    read_field(s, "max_target", c.sequence.max_target, "sequence");
    read_field(s, "reference_rate", c.sequence.reference_rate, "sequence");
  }
  if (doc.contains("train")) {
    const json& t = doc["train"];
    reject_unknown(t, {"batch_size", "total_steps", "peak_lr", "warmup_steps", "dropout", "clip_norm", "adam_beta1",
                       "adam_beta2", "adam_eps", "eval_interval", "val_count", "min_frequency"},
                   "train");
    read_field(t, "batch_size", c.train.batch_size, "train");
    read_field(t, "total_steps", c.train.total_steps, "train");
    read_field(t, "peak_lr", c.train.peak_lr, "train");
    read_field(t, "warmup_steps", c.train.warmup_steps, "train");
    read_field(t, "dropout", c.train.dropout, "train");
    read_field(t, "clip_norm", c.train.clip_norm, "train");
    read_field(t, "adam_beta1", c.train.adam_beta1, "train");
    read_field(t, "adam_beta2", c.train.adam_beta2, "train");
    read_field(t, "adam_eps", c.train.adam_eps, "train");
    read_field(t, "eval_interval", c.train.eval_interval, "train");
    read_field(t, "val_count", c.train.val_count, "train");
    read_field(t, "min_frequency", c.train.min_frequency, "train");
  }
}

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  std::string profile = "toy";
  if (doc.contains("profile")) read_field(doc, "profile", profile, "config");
  RunConfig c = profile_config(profile);
  merge_config(c, doc);
  c.validate();
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config(doc);
}

json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["config_version"] = c.config_version;
  j["profile"] = c.profile;
  j["model"] = {{"d_visual", c.model.d_visual},
                {"d_acoustic", c.model.d_acoustic},
                {"d_text", c.model.d_text},
                {"d_block", c.model.d_block},
                {"n_layers", c.model.n_layers},
                {"fms_units", c.model.fms_units},
                {"d_ff", c.model.d_ff},
                {"d_hidden", c.model.d_hidden},
                {"heads", c.model.heads},
                {"tie_embeddings", c.model.tie_embeddings},
                {"guided_gating", c.model.guided_gating},
                {"ocr_cap", c.model.ocr_cap}};
  j["sequence"] = {{"source_length", c.sequence.source_length},
                   {"max_target", c.sequence.max_target},
                   {"reference_rate", c.sequence.reference_rate}};
  j["train"] = {{"batch_size", c.train.batch_size},   {"total_steps", c.train.total_steps},
                {"peak_lr", c.train.peak_lr},         {"warmup_steps", c.train.warmup_steps},
                {"dropout", c.train.dropout},         {"clip_norm", c.train.clip_norm},
                {"adam_beta1", c.train.adam_beta1},   {"adam_beta2", c.train.adam_beta2},
                {"adam_eps", c.train.adam_eps},       {"eval_interval", c.train.eval_interval},
                {"val_count", c.train.val_count},     {"min_frequency", c.train.min_frequency}};
  j["data"] = c.data;
  j["out"] = c.out;
  j["seed"] = c.seed;
  return json::parse(j.dump());
}

}  // namespace fmtlm
