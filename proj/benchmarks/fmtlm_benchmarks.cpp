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

#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "fmtlm/autodiff.hpp"
#include "fmtlm/config.hpp"
#include "fmtlm/fusion.hpp"
#include "fmtlm/mfcc.hpp"
#include "fmtlm/model.hpp"
#include "fmtlm/rng.hpp"
#include "fmtlm/rouge.hpp"

namespace {

using namespace fmtlm;

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t = Tensor::zeros(r, c);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(matmul(tape.constant(a), tape.constant(b)).value());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 128)->Complexity();

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Tensor a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) {
    Tape tape;
    Var x = tape.variable(a);
    tape.backward(sum(tanh(matmul(x, tape.constant(b)))));
    benchmark::DoNotOptimize(tape.grad(x));
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(32)->Arg(64);

void BM_Fuse(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m = static_cast<std::size_t>(state.range(1));
  Rng rng(3);
  const Tensor asr = random_matrix(n, 64, rng), ocr = random_matrix(m, 64, rng), w = random_matrix(64, 64, rng);
  for (auto _ : state) benchmark::DoNotOptimize(fuse_values(asr, ocr, w).fused);
}
BENCHMARK(BM_Fuse)->Args({32, 8})->Args({128, 32})->Args({512, 128});

void BM_FmtForward(benchmark::State& state) {
  const RunConfig cfg = profile_config(state.range(0) == 0 ? "toy" : "full");
  const FmtModel model = FmtModel::from_seed(cfg, 32, 4);
  const std::size_t n = cfg.sequence.source_length + 1;
  Rng rng(4);
  const Tensor x = random_matrix(n, cfg.model.d_x(), rng);
  const std::vector<std::uint8_t> pad(n, 0);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(model.logits(tape, tape.constant(x), pad).value());
  }
  state.SetLabel(state.range(0) == 0 ? "toy" : "full");
}
BENCHMARK(BM_FmtForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Mfcc(benchmark::State& state) {
  const MfccConfig c;
  std::vector<double> signal(static_cast<std::size_t>(c.sample_rate * static_cast<double>(state.range(0))));
  for (std::size_t i = 0; i < signal.size(); ++i) {
    signal[i] = 0.3 * std::sin(2 * std::numbers::pi * 440.0 * static_cast<double>(i) / c.sample_rate);
  }
  for (auto _ : state) benchmark::DoNotOptimize(mfcc(signal, c).frames);
  state.SetLabel(std::to_string(state.range(0)) + " s of audio");
}
BENCHMARK(BM_Mfcc)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_Rouge(benchmark::State& state) {
  Rng rng(5);
  std::vector<std::string> hyp, ref;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    std::string h, r;
    for (int k = 0; k < 30; ++k) {
      h += "w" + std::to_string(rng.below(50)) + " ";
      r += "w" + std::to_string(rng.below(50)) + " ";
    }
    hyp.push_back(h);
    ref.push_back(r);
  }
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_corpus(hyp, ref).mean);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Rouge)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
