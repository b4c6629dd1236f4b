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

#include <cmath>
#include <string>
#include <vector>

#include "fmtlm/errors.hpp"
#include "fmtlm/optimizer.hpp"

namespace fmtlm {
namespace {

TEST(Schedule, WarmupThenLinearDecay) {
  TrainConfig c;
  c.peak_lr = 0.01;
  c.warmup_steps = 10;
  c.total_steps = 110;
  EXPECT_EQ(learning_rate(c, 0), 0.0);
  EXPECT_DOUBLE_EQ(learning_rate(c, 1), 0.001);
  EXPECT_DOUBLE_EQ(learning_rate(c, 5), 0.005);
  EXPECT_DOUBLE_EQ(learning_rate(c, 10), 0.01);
  EXPECT_DOUBLE_EQ(learning_rate(c, 60), 0.005);
  EXPECT_EQ(learning_rate(c, 110), 0.0);
  EXPECT_EQ(learning_rate(c, 200), 0.0);
  c.warmup_steps = 110;
  EXPECT_DOUBLE_EQ(learning_rate(c, 110), 0.01);
  c.warmup_steps = 0;
  EXPECT_DOUBLE_EQ(learning_rate(c, 1), 0.01 * 109.0 / 110.0);
}

TEST(Clip, ScalesToMaxNormOnlyWhenAbove) {
  ParameterStore store;
  const Parameter& a = store.create("a", Tensor::matrix({{3.0}}));
  const Parameter& b = store.create("b", Tensor::matrix({{4.0}}));
  GradTable g{{&a, Tensor::matrix({{3.0}})}, {&b, Tensor::matrix({{4.0}})}};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, store, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(g.at(&a).item(), 0.6);
  EXPECT_DOUBLE_EQ(g.at(&b).item(), 0.8);
  EXPECT_DOUBLE_EQ(clip_global_norm(g, store, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(g.at(&a).item(), 0.6);
}

TEST(Clip, NormIsSummedInStoreOrder) {
  // Entries chosen so that float addition order changes the rounded sum.
  ParameterStore store;
  std::vector<const Parameter*> ps;
  for (int i = 0; i < 40; ++i) ps.push_back(&store.create("p" + std::to_string(i), Tensor::zeros(1, 1)));
  GradTable g;
  for (int i = 0; i < 40; ++i) g[ps[i]] = Tensor::matrix({{i % 3 == 0 ? 1e8 : 0.1 * (i + 1)}});
  double sq = 0.0;
  for (int i = 0; i < 40; ++i) sq += g.at(ps[i]).item() * g.at(ps[i]).item();
  EXPECT_EQ(clip_global_norm(g, store, 1e30), std::sqrt(sq));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterStore store;
  Parameter& p = store.create("p", Tensor::matrix({{1.0, -2.0, 0.5}}));
  Adam adam(store, 0.9, 0.98, 1e-9);
  GradTable g{{&p, Tensor::matrix({{0.3, -7.0, 0.0}})}};
  adam.step(store, g, 0.1);
  // Bias-corrected m/√v is sign(g) on the first step.
  EXPECT_NEAR(p.value(0, 0), 0.9, 1e-8);
  EXPECT_NEAR(p.value(0, 1), -1.9, 1e-8);
  EXPECT_EQ(p.value(0, 2), 0.5);
}

TEST(Adam, MatchesScalarRecurrence) {
  ParameterStore store;
  Parameter& p = store.create("p", Tensor::matrix({{0.7}}));
  Parameter& q = store.create("q", Tensor::matrix({{-0.2}}));
  Adam adam(store, 0.9, 0.98, 1e-9);
  double x = 0.7, m = 0, v = 0;
  const double grads[] = {0.5, -0.1, 0.3, 0.0, 2.0};
  for (int t = 1; t <= 5; ++t) {
    const double gr = grads[t - 1];
    // q is absent from the table, so its moments only decay and it stays put.
    adam.step(store, GradTable{{&p, Tensor::matrix({{gr}})}}, 0.01);
    m = 0.9 * m + 0.1 * gr;
    v = 0.98 * v + 0.02 * gr * gr;
    x -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.98, t))) + 1e-9);
    EXPECT_NEAR(p.value.item(), x, 1e-15);
  }
  EXPECT_EQ(q.value.item(), -0.2);
  EXPECT_EQ(adam.steps(), 5u);
  store.create("r", Tensor::zeros(1, 1));
  EXPECT_THROW(adam.step(store, {}, 0.01), ContractError);
}

}  // namespace
}  // namespace fmtlm
