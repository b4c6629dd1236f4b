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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fmtlm/dataset.hpp"
#include "fmtlm/model.hpp"
#include "fmtlm/optimizer.hpp"
#include "fmtlm/vocab.hpp"

namespace fmtlm {

// A sample converted to model inputs once, before training.
struct PreparedSample {
  std::string id;
  SourceInputs source;
  std::vector<int> target;
};

PreparedSample prepare_sample(const SampleData& data, const Vocab& vocab, const RunConfig& config);
std::vector<PreparedSample> prepare_manifest(const Manifest& manifest, const Vocab& vocab, const RunConfig& config);
// Vocabulary over summaries and ASR/OCR transcripts of `manifest`.
Vocab build_manifest_vocab(const Manifest& manifest, const RunConfig& config);
// Drops the visual and acoustic streams (text-only LM pretraining data).
PreparedSample text_only(PreparedSample sample);

// Source followed by <delim>, then the target tokens and <stop> when
// training. labels[p] is the token expected after position p.
struct LmSequence {
  Var blocks;                            // L'×d_x
  std::vector<std::uint8_t> pad_mask;    // L'
  std::vector<std::uint8_t> loss_mask;   // L'
  std::vector<int> labels;               // L'
  std::vector<int> appended;             // tokens after the source, <delim> first
  bool truncated = false;
};

enum class SequenceLayout {
  kTraining,   // [source | <delim> | target | <stop>] with loss on the target region
  kInference,  // [source | <delim> | prefix] with no loss positions
};

LmSequence build_lm_sequence(Tape& tape, const FmtModel& model, const AlignedSample& source,
                             std::span<const int> target, SequenceLayout layout);

// Token-weighted mean cross-entropy over a batch, on `tape`.
struct BatchLoss {
  Var loss;
  std::size_t target_positions = 0;
};
BatchLoss batch_loss(Tape& tape, const FmtModel& model, std::span<const PreparedSample* const> batch);

struct StepOutcome {
  bool skipped = false;  // no target positions in the batch; parameters untouched
  double loss = 0.0;
  double grad_norm = 0.0;
  double learning_rate = 0.0;
};

// One teacher-forced update. `step` is the 1-based optimizer step used for
// the schedule and the dropout stream. A non-finite loss throws
// NumericError naming the sample.
StepOutcome train_step(FmtModel& model, std::span<const PreparedSample* const> batch, Adam& adam,
                       std::size_t step);

// Evaluation-mode mean cross-entropy over target positions.
double evaluate_loss(const FmtModel& model, std::span<const PreparedSample> samples);

// Greedy decoding. The emitted token is appended to the sequence and the
// whole model re-run each step; stops at <stop> (excluded) or max_len.
// Equal logits resolve to the lowest id. `prefix` pre-fills emitted tokens.
std::vector<int> generate(const FmtModel& model, const SourceInputs& source, std::size_t max_len,
                          std::span<const int> prefix = {});

struct TrainOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  std::optional<std::size_t> stop_after;  // halt (with state saved) after this step
  // Receives one line of JSON per evaluation in addition to metrics.jsonl.
  std::function<void(const std::string&)> on_metrics;
};

struct TrainResult {
  std::vector<double> step_losses;  // indexed by step − 1 for steps run in this call
  std::size_t first_step = 1;
  std::size_t last_step = 0;
  double best_val_loss = 0.0;
  std::size_t best_step = 0;
};

// Training loop. Batch composition is a function of (seed, epoch) only and
// dropout draws of (seed, step), so a resumed run retraces the original.
// Writes the best-validation checkpoint to out_dir, resumable state to
// out_dir/resume and appends {step, train_loss, val_loss} lines to
// out_dir/metrics.jsonl every eval_interval steps.
TrainResult train(FmtModel& model, const Vocab& vocab, std::span<const PreparedSample> train_set,
                  std::span<const PreparedSample> val_set, const TrainOptions& options);

// Indices of the batch used at 1-based `step`.
std::vector<std::size_t> batch_indices(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed,
                                       std::size_t step);

}  // namespace fmtlm
