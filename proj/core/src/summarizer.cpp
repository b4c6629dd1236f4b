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

#include "fmtlm/summarizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "fmtlm/checkpoint.hpp"
#include "fmtlm/errors.hpp"
#include "fmtlm/feature_file.hpp"

namespace fmtlm {

namespace fs = std::filesystem;

PreparedSample prepare_sample(const SampleData& data, const Vocab& vocab, const RunConfig& config) {
  const double ref = config.sequence.reference_rate;
  PreparedSample s;
  s.id = data.id;
  if (data.visual.rows() > 0) s.source.visual = resample_to_clock(data.visual, data.visual_rate, ref);
  else s.source.visual = Tensor::zeros(0, config.model.d_visual);
  if (data.acoustic.rows() > 0) s.source.acoustic = resample_to_clock(data.acoustic, data.acoustic_rate, ref);
  else s.source.acoustic = Tensor::zeros(0, config.model.d_acoustic);
  for (const auto& t : data.asr) s.source.asr.push_back(vocab.id(t));
  for (const auto& t : data.ocr) s.source.ocr.push_back(vocab.id(t));
  s.source.ocr = cap_ocr(std::move(s.source.ocr), config.model.ocr_cap);
  s.source.text_rate = data.text_rate;
  s.source.reference_rate = ref;
  s.target = vocab.tokenize(data.summary);
  return s;
}

std::vector<PreparedSample> prepare_manifest(const Manifest& manifest, const Vocab& vocab, const RunConfig& config) {
  std::vector<PreparedSample> out;
  out.reserve(manifest.samples.size());
  for (const auto& rec : manifest.samples) {
    out.push_back(prepare_sample(load_sample(manifest, rec, config.sequence.reference_rate), vocab, config));
  }
  return out;
}

Vocab build_manifest_vocab(const Manifest& manifest, const RunConfig& config) {
  std::vector<std::string> corpus;
  for (const auto& rec : manifest.samples) {
    corpus.push_back(rec.summary);
    corpus.push_back(read_text(manifest.root / rec.asr));
    if (rec.ocr) corpus.push_back(read_text(manifest.root / *rec.ocr));
  }
  return Vocab::build(corpus, config.train.min_frequency);
}

PreparedSample text_only(PreparedSample sample) {
  sample.source.visual = Tensor::zeros(0, sample.source.visual.cols());
  sample.source.acoustic = Tensor::zeros(0, sample.source.acoustic.cols());
  return sample;
}

// ---------------------------------------------------------------------------

LmSequence build_lm_sequence(Tape& tape, const FmtModel& model, const AlignedSample& source,
                             std::span<const int> target, SequenceLayout layout) {
  const RunConfig& cfg = model.config();
  const std::size_t L = source.x.rows();
  const std::size_t d_b = cfg.model.d_block;
  LmSequence seq;
  std::vector<int> tokens(target.begin(), target.end());
  if (tokens.size() > cfg.sequence.max_target) {
    spdlog::warn("target of {} tokens truncated to M_max={}", tokens.size(), cfg.sequence.max_target);
    tokens.resize(cfg.sequence.max_target);
    seq.truncated = true;
  }
  seq.appended.push_back(kDelimId);
  seq.appended.insert(seq.appended.end(), tokens.begin(), tokens.end());
  if (layout == SequenceLayout::kTraining) seq.appended.push_back(kStopId);

  const std::size_t k = seq.appended.size();
  Var text = embed(model.token_table(tape), seq.appended);
  Var appended = concat({tape.constant(Tensor::zeros(k, 2 * d_b)), text}, 1);
  seq.blocks = concat({source.x, appended}, 0);

  const std::size_t total = L + k;
  seq.pad_mask.assign(total, 0);
  std::copy(source.pad_mask.begin(), source.pad_mask.end(), seq.pad_mask.begin());
  seq.loss_mask.assign(total, 0);
  seq.labels.assign(total, kPadId);
  if (layout == SequenceLayout::kTraining) {
    for (std::size_t i = 0; i + 1 < k; ++i) {
      seq.labels[L + i] = seq.appended[i + 1];
      seq.loss_mask[L + i] = 1;
    }
  }
  return seq;
}

BatchLoss batch_loss(Tape& tape, const FmtModel& model, std::span<const PreparedSample* const> batch) {
  BatchLoss out;
  std::vector<std::pair<Var, std::size_t>> parts;
  for (const PreparedSample* s : batch) {
    try {
      AlignedSample src = model.encode_source(tape, s->source);
      LmSequence seq = build_lm_sequence(tape, model, src, s->target, SequenceLayout::kTraining);
      const auto count = static_cast<std::size_t>(std::count(seq.loss_mask.begin(), seq.loss_mask.end(), 1));
      if (count == 0) continue;
      Var logits = model.logits(tape, seq.blocks, seq.pad_mask);
      parts.emplace_back(cross_entropy(logits, seq.labels, seq.loss_mask), count);
      out.target_positions += count;
    } catch (const NumericError& e) {
      throw NumericError("sample '" + s->id + "': " + e.what());
    }
  }
  if (out.target_positions == 0) {
    out.loss = tape.constant(Tensor::scalar(0.0));
    return out;
  }
  const double total = static_cast<double>(out.target_positions);
  Var acc;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    Var weighted = scale(parts[i].first, static_cast<double>(parts[i].second) / total);
    acc = i == 0 ? weighted : add(acc, weighted);
  }
  out.loss = acc;
  return out;
}

StepOutcome train_step(FmtModel& model, std::span<const PreparedSample* const> batch, Adam& adam, std::size_t step) {
  const TrainConfig& tc = model.config().train;
  Tape tape(Rng::derive(model.config().seed, 0xd0, step).next_u64(), /*training=*/true);
  BatchLoss bl = batch_loss(tape, model, batch);
  StepOutcome out;
  if (bl.target_positions == 0) {
    out.skipped = true;
    return out;
  }
  out.loss = bl.loss.value().item();
  if (!std::isfinite(out.loss)) {
    throw NumericError("non-finite loss at step " + std::to_string(step) +
                       (batch.empty() ? std::string() : " (first sample '" + batch.front()->id + "')"));
  }
  GradTable grads = tape.backward(bl.loss);
  out.grad_norm = clip_global_norm(grads, model.params(), tc.clip_norm);
  out.learning_rate = learning_rate(tc, step);
  adam.step(model.params(), grads, out.learning_rate);
  return out;
}

double evaluate_loss(const FmtModel& model, std::span<const PreparedSample> samples) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    Tape tape;
    const PreparedSample* one[] = {&s};
    BatchLoss bl = batch_loss(tape, model, one);
    total += bl.loss.value().item() * static_cast<double>(bl.target_positions);
    count += bl.target_positions;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

std::vector<int> generate(const FmtModel& model, const SourceInputs& source, std::size_t max_len,
                          std::span<const int> prefix) {
  std::vector<int> emitted(prefix.begin(), prefix.end());
  if (emitted.size() >= max_len) {
    emitted.resize(max_len);
    return emitted;
  }
  const std::size_t cap = std::min(max_len, model.config().sequence.max_target);
  Tape tape;
  AlignedSample src = model.encode_source(tape, source);
  while (emitted.size() < cap) {
    LmSequence seq = build_lm_sequence(tape, model, src, emitted, SequenceLayout::kInference);
    Var logits = model.logits(tape, seq.blocks, seq.pad_mask);
    auto last = logits.value().row_span(logits.rows() - 1);
    // max_element returns the first maximum: lowest id wins ties.
    const int next = static_cast<int>(std::max_element(last.begin(), last.end()) - last.begin());
    if (next == kStopId) break;
    emitted.push_back(next);
  }
  return emitted;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::size_t step) {
  if (n == 0) return {};
  const std::size_t per_epoch = (n + batch_size - 1) / batch_size;
  const std::size_t epoch = (step - 1) / per_epoch;
  const std::size_t slot = (step - 1) % per_epoch;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::derive(seed, 0xe0, epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const std::size_t begin = slot * batch_size;
  const std::size_t end = std::min(n, begin + batch_size);
  return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

TrainResult train(FmtModel& model, const Vocab& vocab, std::span<const PreparedSample> train_set,
                  std::span<const PreparedSample> val_set, const TrainOptions& options) {
  if (train_set.empty()) throw ContractError("train: training set is empty");
  const RunConfig& cfg = model.config();
  const TrainConfig& tc = cfg.train;
  const fs::path resume_dir = options.out_dir / "resume";
  const fs::path metrics_path = options.out_dir / "metrics.jsonl";
  std::error_code ec;
  fs::create_directories(options.out_dir, ec);
  if (ec) throw IoError("cannot create " + options.out_dir.string() + ": " + ec.message());

  Adam adam(model.params(), tc.adam_beta1, tc.adam_beta2, tc.adam_eps);
  TrainState state;
  state.best_val_loss = std::numeric_limits<double>::infinity();
  if (options.resume) {
    state = load_train_state(resume_dir, model, adam);
  }
  if (!options.resume) write_text(options.out_dir / "config.json", config_to_json(cfg).dump(2) + "\n");
  std::ofstream metrics(metrics_path, options.resume ? std::ios::app : std::ios::trunc);
  if (!metrics) throw IoError("cannot open " + metrics_path.string());

  TrainResult result;
  result.first_step = state.step + 1;
  const std::size_t last = options.stop_after ? std::min(*options.stop_after, tc.total_steps) : tc.total_steps;
  for (std::size_t step = state.step + 1; step <= last; ++step) {
    const auto idx = batch_indices(train_set.size(), tc.batch_size, cfg.seed, step);
    std::vector<const PreparedSample*> batch;
    for (std::size_t i : idx) batch.push_back(&train_set[i]);
    const StepOutcome o = train_step(model, batch, adam, step);
    result.step_losses.push_back(o.loss);
    state.step = step;
    if (!o.skipped) {
      state.interval_loss_sum += o.loss;
      ++state.interval_steps;
    }

    const bool eval_now = step % tc.eval_interval == 0 || step == tc.total_steps;
    if (eval_now) {
      const double train_loss =
          state.interval_steps ? state.interval_loss_sum / static_cast<double>(state.interval_steps) : 0.0;
      nlohmann::ordered_json line;
      line["step"] = step;
      line["train_loss"] = train_loss;
      if (!val_set.empty()) {
        const double val = evaluate_loss(model, val_set);
        line["val_loss"] = val;
        if (val < state.best_val_loss) {
          state.best_val_loss = val;
          state.best_step = step;
          save_checkpoint(options.out_dir, model, vocab);
        }
      } else {
        line["val_loss"] = nullptr;
        state.best_step = step;
        save_checkpoint(options.out_dir, model, vocab);
      }
      const std::string text = line.dump();
      metrics << text << '\n' << std::flush;
      if (options.on_metrics) options.on_metrics(text);
      spdlog::info("step {} train_loss {:.6f}{}", step, train_loss,
                   val_set.empty() ? std::string() : fmt::format(" val_loss {:.6f}", line["val_loss"].get<double>()));
      state.interval_loss_sum = 0.0;
      state.interval_steps = 0;
    }
    if (eval_now || step == last) save_train_state(resume_dir, model, adam, state);
  }
  result.last_step = state.step;
  result.best_val_loss = state.best_val_loss;
  result.best_step = state.best_step;
  return result;
}

}  // namespace fmtlm
