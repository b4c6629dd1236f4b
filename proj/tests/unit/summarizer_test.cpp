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

#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "fmtlm/checkpoint.hpp"
#include "fmtlm/errors.hpp"
#include "fmtlm/feature_file.hpp"
#include "fmtlm/summarizer.hpp"
#include "fmtlm/synthetic.hpp"
#include "support.hpp"

namespace fmtlm {
namespace {

namespace fs = std::filesystem;

struct Fixture {
  RunConfig config;
  SyntheticProfile profile;
  Vocab vocab;
  std::vector<PreparedSample> samples;
};

Fixture make_fixture(std::size_t n, std::uint64_t seed = 3) {
  Fixture f;
  f.config = profile_config("toy");
  f.config.model.d_visual = 5;
  f.config.model.d_acoustic = 3;
  f.config.model.d_text = 4;
  f.config.model.d_block = 4;
  f.config.model.d_hidden = 4;
  f.config.model.d_ff = 8;
  f.config.model.n_layers = 1;
  f.config.sequence.source_length = 8;
  f.config.train.batch_size = 3;
  f.config.train.total_steps = 6;
  f.config.train.warmup_steps = 2;
  f.config.train.eval_interval = 2;
  f.config.train.dropout = 0.1;
  f.config.seed = seed;
  f.profile = synthetic_profile("toy");
  f.profile.length = 8;
  f.profile.visual_dim = 5;
  f.profile.acoustic_dim = 3;
  std::vector<std::string> corpus;
  std::vector<SampleData> data;
  for (const auto& s : generate_synthetic(n, seed, f.profile)) {
    data.push_back(to_sample_data(s, f.profile));
    corpus.push_back(s.summary);
    for (const auto& t : s.asr) corpus.push_back(t);
    for (const auto& t : s.ocr) corpus.push_back(t);
  }
  f.vocab = Vocab::build(corpus, 1);
  for (const auto& d : data) f.samples.push_back(prepare_sample(d, f.vocab, f.config));
  return f;
}

TEST(Prepare, ResamplesToTheReferenceClock) {
  const Fixture f = make_fixture(1);
  const PreparedSample& s = f.samples[0];
  EXPECT_EQ(s.source.visual.rows(), 8u);
  EXPECT_EQ(s.source.acoustic.rows(), 8u);
  EXPECT_EQ(s.source.asr.size(), 6u);
  EXPECT_EQ(s.source.ocr.size(), 2u);
  EXPECT_EQ(s.target.size(), 4u);
  for (int id : s.target) EXPECT_GE(id, kNumReserved);
  const PreparedSample t = text_only(s);
  EXPECT_EQ(t.source.visual.rows(), 0u);
  EXPECT_EQ(t.source.acoustic.rows(), 0u);
  EXPECT_EQ(t.source.asr, s.source.asr);
}

TEST(LmSequence, TrainingLayout) {
  Fixture f = make_fixture(1);
  f.config.sequence.source_length = 4;
  const FmtModel model = FmtModel::from_seed(f.config, f.vocab.size(), 1);
  Tape tape;
  Rng rng(2);
  AlignedSample src{tape.constant(testing::random_matrix(4, 12, rng)), {0, 0, 0, 1}, {}, false};
  const std::vector<int> target = {7, 9};
  const LmSequence seq = build_lm_sequence(tape, model, src, target, SequenceLayout::kTraining);
  EXPECT_EQ(seq.blocks.shape(), (Shape{8, 12}));
  EXPECT_EQ(seq.appended, (std::vector<int>{kDelimId, 7, 9, kStopId}));
  EXPECT_EQ(seq.loss_mask, (std::vector<std::uint8_t>{0, 0, 0, 0, 1, 1, 1, 0}));
  EXPECT_EQ(seq.labels[4], 7);
  EXPECT_EQ(seq.labels[5], 9);
  EXPECT_EQ(seq.labels[6], kStopId);
  EXPECT_EQ(seq.pad_mask, (std::vector<std::uint8_t>{0, 0, 0, 1, 0, 0, 0, 0}));
  // Appended rows carry only the token embedding in the textual block.
  const Tensor& table = model.params().find("embed.token")->value;
  for (std::size_t r = 4; r < 8; ++r) {
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(seq.blocks.value()(r, j), 0.0);
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_EQ(seq.blocks.value()(r, 8 + j), table(static_cast<std::size_t>(seq.appended[r - 4]), j));
    }
  }
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(seq.blocks.value()(r, j), src.x.value()(r, j));
}

TEST(LmSequence, InferenceLayoutAndTruncation) {
  Fixture f = make_fixture(1);
  const FmtModel model = FmtModel::from_seed(f.config, f.vocab.size(), 1);
  Tape tape;
  AlignedSample src{tape.constant(Tensor::zeros(8, 12)), std::vector<std::uint8_t>(8, 0), {}, false};
  const LmSequence empty = build_lm_sequence(tape, model, src, {}, SequenceLayout::kInference);
  EXPECT_EQ(empty.blocks.rows(), 9u);
  for (auto m : empty.loss_mask) EXPECT_EQ(m, 0);
  const std::vector<int> longer = {5, 6, 7, 8, 9, 10};
  const LmSequence cut = build_lm_sequence(tape, model, src, longer, SequenceLayout::kTraining);
  EXPECT_TRUE(cut.truncated);
  EXPECT_EQ(cut.blocks.rows(), 8u + 1 + 4 + 1);
  EXPECT_EQ(cut.blocks.rows(), f.config.max_positions());
}

TEST(BatchLoss, IgnoresLabelsOutsideTheLossMask) {
  Tape tape;
  Rng rng(3);
  Var logits = tape.constant(testing::random_matrix(5, 7, rng));
  const std::vector<std::uint8_t> mask = {0, 1, 1, 0, 0};
  const std::vector<int> a = {0, 3, 4, 0, 0}, b = {6, 3, 4, 2, 5};
  EXPECT_EQ(cross_entropy(logits, a, mask).value().item(), cross_entropy(logits, b, mask).value().item());
}

TEST(BatchLoss, TokenWeightedMean) {
  const Fixture f = make_fixture(3);
  const FmtModel model = FmtModel::from_seed(f.config, f.vocab.size(), 1);
  std::vector<PreparedSample> samples = f.samples;
  samples[1].target.resize(1);
  double weighted = 0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    Tape tape;
    const PreparedSample* one[] = {&s};
    const BatchLoss bl = batch_loss(tape, model, one);
    weighted += bl.loss.value().item() * static_cast<double>(bl.target_positions);
    count += bl.target_positions;
  }
  EXPECT_EQ(count, 5u + 2u + 5u);
  Tape tape;
  const PreparedSample* all[] = {&samples[0], &samples[1], &samples[2]};
  const BatchLoss bl = batch_loss(tape, model, all);
  EXPECT_EQ(bl.target_positions, count);
  EXPECT_NEAR(bl.loss.value().item(), weighted / static_cast<double>(count), 1e-12);
  EXPECT_NEAR(evaluate_loss(model, samples), weighted / static_cast<double>(count), 1e-12);
}

TEST(TrainStep, EmptyBatchIsSkippedAndLeavesParameters) {
  const Fixture f = make_fixture(2);
  FmtModel model = FmtModel::from_seed(f.config, f.vocab.size(), 1);
  Adam adam(model.params(), 0.9, 0.98, 1e-9);
  std::vector<Tensor> before;
  for (const auto& p : model.params().all()) before.push_back(p.value);
  const StepOutcome o = train_step(model, {}, adam, 1);
  EXPECT_TRUE(o.skipped);
  EXPECT_EQ(adam.steps(), 0u);
  for (std::size_t k = 0; k < before.size(); ++k) EXPECT_EQ(model.params().all()[k].value, before[k]);
}

TEST(TrainStep, LowersTheLossOnARepeatedBatch) {
  Fixture f = make_fixture(2);
  f.config.train.dropout = 0.0;
  f.config.train.warmup_steps = 0;
  f.config.train.peak_lr = 0.01;
  f.config.train.total_steps = 1000;
  FmtModel model = FmtModel::from_seed(f.config, f.vocab.size(), 1);
  Adam adam(model.params(), 0.9, 0.98, 1e-9);
  const PreparedSample* batch[] = {&f.samples[0], &f.samples[1]};
  const double first = train_step(model, batch, adam, 1).loss;
  double last = first;
  for (std::size_t s = 2; s <= 20; ++s) last = train_step(model, batch, adam, s).loss;
  EXPECT_LT(last, first);
}

TEST(BatchIndices, EpochsArePermutations) {
  for (std::size_t step = 1; step <= 12; step += 4) {
    std::multiset<std::size_t> seen;
    for (std::size_t s = step; s < step + 4; ++s)
      for (std::size_t i : batch_indices(10, 3, 5, s)) seen.insert(i);
    EXPECT_EQ(seen.size(), 10u);
    EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 10u);
  }
  EXPECT_EQ(batch_indices(10, 3, 5, 4).size(), 1u);
  EXPECT_EQ(batch_indices(10, 3, 5, 2), batch_indices(10, 3, 5, 2));
  EXPECT_NE(batch_indices(10, 3, 5, 1), batch_indices(10, 3, 5, 5));
  EXPECT_TRUE(batch_indices(0, 3, 5, 1).empty());
}

TEST(Generate, StopsAndCapsLength) {
  const Fixture f = make_fixture(1);
  FmtModel model = FmtModel::from_seed(f.config, f.vocab.size(), 1);
  Parameter* bias = model.params().find("output.bias");
  bias->value(0, kStopId) = 1e3;
  EXPECT_TRUE(generate(model, f.samples[0].source, 4).empty());
  bias->value(0, kStopId) = 0.0;
  bias->value(0, 7) = 1e3;
  EXPECT_EQ(generate(model, f.samples[0].source, 3), (std::vector<int>{7, 7, 7}));
  EXPECT_EQ(generate(model, f.samples[0].source, 10).size(), f.config.sequence.max_target);
  const std::vector<int> prefix = {9, 9};
  EXPECT_EQ(generate(model, f.samples[0].source, 4, prefix), (std::vector<int>{9, 9, 7, 7}));
  EXPECT_EQ(generate(model, f.samples[0].source, 1, prefix), (std::vector<int>{9}));
}

TEST(Generate, GreedyPrefixConsistencyAndDeterminism) {
  const Fixture f = make_fixture(2);
  const FmtModel model = FmtModel::from_seed(f.config, f.vocab.size(), 4);
  for (const auto& s : f.samples) {
    const auto full = generate(model, s.source, 4);
    EXPECT_EQ(full, generate(model, s.source, 4));
    for (std::size_t k = 0; k < full.size(); ++k) {
      const std::vector<int> head(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(k));
      EXPECT_EQ(generate(model, s.source, 4, head), full);
      EXPECT_EQ(generate(model, s.source, k + 1), std::vector<int>(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(k + 1)));
    }
  }
}

TEST(Train, WritesCheckpointMetricsAndConfig) {
  const Fixture f = make_fixture(8);
  testing::TempDir dir;
  FmtModel model = FmtModel::from_seed(f.config, f.vocab.size(), f.config.seed);
  std::vector<std::string> lines;
  TrainOptions opt;
  opt.out_dir = dir.path();
  opt.on_metrics = [&](const std::string& l) { lines.push_back(l); };
  const std::span<const PreparedSample> all(f.samples);
  const TrainResult r = train(model, f.vocab, all.first(6), all.subspan(6), opt);
  EXPECT_EQ(r.last_step, 6u);
  EXPECT_EQ(r.step_losses.size(), 6u);
  ASSERT_EQ(lines.size(), 3u);
  const auto last = nlohmann::json::parse(lines.back());
  EXPECT_EQ(last["step"], 6);
  EXPECT_TRUE(last["val_loss"].is_number());
  EXPECT_TRUE(fs::exists(dir / "index.json"));
  EXPECT_TRUE(fs::exists(dir / "metrics.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "resume/state.bin"));
  EXPECT_EQ(parse_config_text(read_text(dir / "config.json")).seed, f.config.seed);
  const LoadedCheckpoint ck = load_checkpoint(dir.path());
  EXPECT_NEAR(evaluate_loss(ck.model, all.subspan(6)), r.best_val_loss, 1e-4);
}

TEST(Train, ResumedRunMatchesUninterruptedRun) {
  const Fixture f = make_fixture(8);
  const std::span<const PreparedSample> all(f.samples);
  testing::TempDir a, b;
  FmtModel straight = FmtModel::from_seed(f.config, f.vocab.size(), f.config.seed);
  TrainOptions oa;
  oa.out_dir = a.path();
  const TrainResult ra = train(straight, f.vocab, all.first(6), all.subspan(6), oa);

  FmtModel first = FmtModel::from_seed(f.config, f.vocab.size(), f.config.seed);
  TrainOptions ob;
  ob.out_dir = b.path();
  ob.stop_after = 3;
  train(first, f.vocab, all.first(6), all.subspan(6), ob);
  FmtModel second = FmtModel::from_seed(f.config, f.vocab.size(), 77);
  ob.stop_after.reset();
  ob.resume = true;
  const TrainResult rb = train(second, f.vocab, all.first(6), all.subspan(6), ob);
  EXPECT_EQ(rb.first_step, 4u);
  ASSERT_EQ(rb.step_losses.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(rb.step_losses[i], ra.step_losses[3 + i], 1e-9);
  EXPECT_NEAR(rb.best_val_loss, ra.best_val_loss, 1e-9);
  for (std::size_t k = 0; k < straight.params().all().size(); ++k) {
    EXPECT_LT(max_abs_diff(second.params().all()[k].value, straight.params().all()[k].value), 1e-9);
  }
  EXPECT_EQ(read_text(a / "metrics.jsonl"), read_text(b / "metrics.jsonl"));
}

TEST(Train, EmptyTrainingSetIsContractError) {
  const Fixture f = make_fixture(1);
  testing::TempDir dir;
  FmtModel model = FmtModel::from_seed(f.config, f.vocab.size(), 1);
  TrainOptions opt;
  opt.out_dir = dir.path();
  EXPECT_THROW(train(model, f.vocab, {}, {}, opt), ContractError);
}

}  // namespace
}  // namespace fmtlm
