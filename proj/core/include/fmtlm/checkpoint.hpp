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
#include <filesystem>

#include "fmtlm/config.hpp"
#include "fmtlm/model.hpp"
#include "fmtlm/optimizer.hpp"
#include "fmtlm/vocab.hpp"

namespace fmtlm {

// Inference checkpoint directory:
//   index.json        {"format", "version", "config", "vocab_size",
//                      "params": {name → {"file", "shape"}}}
//   params/<name>.flrt one feature file per parameter (float32)
//   vocab.json
void save_checkpoint(const std::filesystem::path& dir, const FmtModel& model, const Vocab& vocab);

struct LoadedCheckpoint {
  RunConfig config;
  Vocab vocab;
  FmtModel model;
};

// Rebuilds the model from the stored config and overwrites every parameter,
// verifying names and shapes. Throws FormatError on any mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

// Exact (float64) training state for resumption: parameters, Adam moments
// and loop counters, stored as state.bin next to an inference checkpoint.
struct TrainState {
  std::size_t step = 0;
  double best_val_loss = 0.0;
  std::size_t best_step = 0;
  double interval_loss_sum = 0.0;
  std::size_t interval_steps = 0;
};

void save_train_state(const std::filesystem::path& dir, const FmtModel& model, const Adam& adam,
                      const TrainState& state);
TrainState load_train_state(const std::filesystem::path& dir, FmtModel& model, Adam& adam);

}  // namespace fmtlm
