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
#include <numeric>

#include "fmtlm/errors.hpp"
#include "fmtlm/fusion.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace fmtlm {
namespace {

using testing::brute_fuse;
using testing::BruteFusion;
using testing::random_matrix;

double max_diff(const Tensor& t, const std::vector<std::vector<double>>& ref) {
  double m = 0;
  for (std::size_t i = 0; i < ref.size(); ++i)
    for (std::size_t j = 0; j < ref[i].size(); ++j) m = std::max(m, std::abs(t(i, j) - ref[i][j]));
  return m;
}

TEST(Affinity, IdentityCorrelationOfEqualUnitVectors) {
  Tape tape;
  Var a = tape.constant(Tensor::matrix({{1, 0}}));
  Var c = affinity(a, a, tape.constant(Tensor::identity(2)));
  EXPECT_NEAR(c.value().item(), std::tanh(1.0), 1e-15);
  EXPECT_NEAR(c.value().item(), 0.7616, 1e-4);
}

TEST(Affinity, OrthogonalTokensGiveZero) {
  Tape tape;
  Var c = affinity(tape.constant(Tensor::matrix({{1, 0}})), tape.constant(Tensor::matrix({{0, 1}})),
                   tape.constant(Tensor::identity(2)));
  EXPECT_EQ(c.value().item(), 0.0);
}

TEST(Affinity, MatchesTripleLoop) {
  Rng rng(1);
  const Tensor A = random_matrix(2, 4, rng), O = random_matrix(3, 4, rng), W = random_matrix(4, 4, rng);
  Tape tape;
  Var c = affinity(tape.constant(A), tape.constant(O), tape.constant(W));
  EXPECT_EQ(c.shape(), (Shape{2, 3}));
  EXPECT_LT(max_diff(c.value(), brute_fuse(A, O, W).c), 1e-12);
}

TEST(Affinity, DimensionMismatchIsShapeError) {
  Tape tape;
  EXPECT_THROW(affinity(tape.constant(Tensor::zeros(2, 3)), tape.constant(Tensor::zeros(2, 4)),
                        tape.constant(Tensor::identity(3))),
               ShapeError);
}

TEST(AttendContexts, SingleAsrTokenTakesAllWeight) {
  Rng rng(2);
  const Tensor A = random_matrix(1, 3, rng);
  Tape tape;
  auto r = attend_contexts(tape.constant(random_matrix(1, 4, rng)), tape.constant(A));
  for (double v : r.alpha.value().values()) EXPECT_EQ(v, 1.0);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t p = 0; p < 3; ++p) EXPECT_NEAR(r.contexts.value()(j, p), A(0, p), 1e-15);
}

TEST(AttendContexts, EqualColumnGivesMeanOfAsrRows) {
  Rng rng(3);
  const Tensor A = random_matrix(3, 2, rng);
  Tape tape;
  auto r = attend_contexts(tape.constant(Tensor({3, 1}, 0.4)), tape.constant(A));
  for (std::size_t p = 0; p < 2; ++p) {
    EXPECT_NEAR(r.contexts.value()(0, p), (A(0, p) + A(1, p) + A(2, p)) / 3.0, 1e-15);
  }
}

TEST(AttendContexts, MatchesBruteForceAndColumnsAreStochastic) {
  Rng rng(4);
  const Tensor A = random_matrix(3, 5, rng), O = random_matrix(2, 5, rng), W = random_matrix(5, 5, rng);
  const BruteFusion b = brute_fuse(A, O, W);
  Tape tape;
  auto r = attend_contexts(affinity(tape.constant(A), tape.constant(O), tape.constant(W)), tape.constant(A));
  EXPECT_LT(max_diff(r.alpha.value(), b.alpha), 1e-12);
  EXPECT_LT(max_diff(r.contexts.value(), b.g), 1e-12);
  for (std::size_t j = 0; j < 2; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_GT(r.alpha.value()(i, j), 0.0);
      s += r.alpha.value()(i, j);
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(RedundancyGate, EqualOrthogonalAndAntipodal) {
  Tape tape;
  Var g = tape.constant(Tensor::matrix({{1, 2, 0}, {1, 2, 0}, {1, 2, 0}}));
  Var o = tape.constant(Tensor::matrix({{1, 2, 0}, {-2, 1, 3}, {-1, -2, 0}}));
  const Tensor r = redundancy_gate(o, g).value();
  EXPECT_NEAR(r(0, 0), 0.0, 1e-9);
  EXPECT_NEAR(r(1, 0), 1.0, 1e-9);
  EXPECT_NEAR(r(2, 0), 2.0, 1e-9);
}

TEST(RedundancyGate, ZeroVectorsGiveGateOne) {
  Tape tape;
  const Tensor r = redundancy_gate(tape.constant(Tensor::zeros(1, 3)), tape.constant(Tensor::zeros(1, 3))).value();
  EXPECT_EQ(r.item(), 1.0);
}

TEST(Fuse, SingleIdenticalTokenIsSuppressed) {
  const Tensor a = Tensor::matrix({{0.6, -0.8, 0.0}});
  const FusionValues r = fuse_values(a, a, Tensor::identity(3));
  EXPECT_LT(r.gates.item(), 1e-9);
  EXPECT_EQ(r.fused.rows(), 2u);
  for (std::size_t p = 0; p < 3; ++p) {
    EXPECT_EQ(r.fused(0, p), a(0, p));
    EXPECT_LT(std::abs(r.fused(1, p)), 1e-9);
  }
}

TEST(Fuse, OrthogonalTokenPassesWithGateOne) {
  const FusionValues r =
      fuse_values(Tensor::matrix({{1, 0, 0}}), Tensor::matrix({{0, 0, 2}}), Tensor::identity(3));
  EXPECT_NEAR(r.gates.item(), 1.0, 1e-9);
}

TEST(Fuse, NoOcrReturnsAsrExactly) {
  Rng rng(5);
  const Tensor a = random_matrix(4, 3, rng);
  const FusionValues r = fuse_values(a, Tensor::zeros(0, 3), random_matrix(3, 3, rng));
  EXPECT_EQ(r.fused, a);
}

TEST(Fuse, MatchesBruteForceOnRandomInstances) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(6), m = 1 + rng.below(6), d = 1 + rng.below(16);
    const Tensor A = random_matrix(n, d, rng), O = random_matrix(m, d, rng), W = random_matrix(d, d, rng, 0.3);
    const FusionValues r = fuse_values(A, O, W);
    const BruteFusion b = brute_fuse(A, O, W);
    ASSERT_EQ(r.fused.rows(), n + m);
    EXPECT_LT(max_diff(r.fused, b.fused), 1e-10) << trial;
    for (std::size_t j = 0; j < m; ++j) {
      EXPECT_NEAR(r.gates(j, 0), b.gate[j], 1e-10);
      EXPECT_GE(r.gates(j, 0), 0.0);
      EXPECT_LE(r.gates(j, 0), 2.0);
    }
  }
}

TEST(Fuse, OpenModeForcesUnitGates) {
  Rng rng(7);
  const Tensor A = random_matrix(3, 4, rng), O = random_matrix(2, 4, rng), W = random_matrix(4, 4, rng);
  const FusionValues r = fuse_values(A, O, W, GateMode::kOpen);
  EXPECT_LT(max_diff(r.fused, brute_fuse(A, O, W, false).fused), 1e-15);
}

TEST(Fuse, OcrPermutationEquivariance) {
  Rng rng(8);
  const Tensor A = random_matrix(3, 4, rng), O = random_matrix(4, 4, rng), W = random_matrix(4, 4, rng);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  Tensor P = Tensor::zeros(4, 4);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t p = 0; p < 4; ++p) P(j, p) = O(perm[j], p);
  const FusionValues r = fuse_values(A, O, W), rp = fuse_values(A, P, W);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(rp.fused(i, p), r.fused(i, p));
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_NEAR(rp.gates(j, 0), r.gates(perm[j], 0), 1e-12);
    for (std::size_t p = 0; p < 4; ++p) {
      EXPECT_NEAR(rp.contexts(j, p), r.contexts(perm[j], p), 1e-12);
      EXPECT_NEAR(rp.fused(3 + j, p), r.fused(3 + perm[j], p), 1e-12);
    }
  }
}

TEST(RedundancyGate, InvariantToTokenScale) {
  Rng rng(9);
  const Tensor O = random_matrix(3, 4, rng), G = random_matrix(3, 4, rng);
  Tensor O3 = O;
  for (double& v : O3.values()) v *= 3.0;
  Tape tape;
  const Tensor r = redundancy_gate(tape.constant(O), tape.constant(G)).value();
  const Tensor r3 = redundancy_gate(tape.constant(O3), tape.constant(G)).value();
  EXPECT_LT(max_abs_diff(r, r3), 1e-12);
}

TEST(Fuse, GradientsThroughAllInputs) {
  Rng rng(10);
  const Tensor A = random_matrix(3, 4, rng), O = random_matrix(2, 4, rng), W = random_matrix(4, 4, rng, 0.5);
  const Tensor weights = random_matrix(5, 4, rng);
  auto reduce = [&](Tape& t, const FusionResult& r) { return sum(mul(r.fused, t.constant(weights))); };
  EXPECT_LT(grad_check([&](Tape& t, Var x) { return reduce(t, fuse(x, t.constant(O), t.constant(W))); }, A), 1e-4);
  EXPECT_LT(grad_check([&](Tape& t, Var x) { return reduce(t, fuse(t.constant(A), x, t.constant(W))); }, O), 1e-4);
  EXPECT_LT(grad_check([&](Tape& t, Var x) { return reduce(t, fuse(t.constant(A), t.constant(O), x)); }, W), 1e-4);
}

TEST(CapOcr, KeepsFirstTokens) {
  std::vector<int> ids(600);
  std::iota(ids.begin(), ids.end(), 0);
  const auto capped = cap_ocr(ids);
  ASSERT_EQ(capped.size(), 500u);
  EXPECT_EQ(capped.back(), 499);
  EXPECT_EQ(cap_ocr(std::vector<int>{1, 2}, 5).size(), 2u);
}

}  // namespace
}  // namespace fmtlm
