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
#include <vector>

#include "fmtlm/autodiff.hpp"
#include "fmtlm/tensor.hpp"

namespace fmtlm {

// Guided attention between an ASR transcript (n×d) and an OCR transcript
// (m×d). Every OCR token attends over the ASR tokens; the cosine distance
// between the token and what it attended to becomes a gate in [0, 2], so
// OCR tokens already said aloud are suppressed and novel ones pass.

enum class GateMode {
  kGuided,  // gate_j = 1 − cos(o_j, g_j)
  kOpen,    // gates forced to 1 (plain ASR+OCR concatenation, for ablation)
};

struct FusionResult {
  Var affinity;  // n×m, tanh(A·W_b·Oᵀ)
  Var alpha;     // n×m, softmax over the ASR index of each column
  Var contexts;  // m×d, g_j = Σ_i α_ij a_i
  Var gates;     // m×1
  Var fused;     // (n+m)×d, [ASR rows ; gate_j·o_j]
};

Var affinity(Var asr, Var ocr, Var w_b);

struct AttendedContexts {
  Var alpha;
  Var contexts;
};
AttendedContexts attend_contexts(Var affinity, Var asr);

Var redundancy_gate(Var ocr, Var contexts);

// With m = 0 the fused stream is the ASR stream itself and the other
// members are left unset.
FusionResult fuse(Var asr, Var ocr, Var w_b, GateMode mode = GateMode::kGuided);

// Plain-value result for callers outside a training graph.
struct FusionValues {
  Tensor affinity;
  Tensor alpha;
  Tensor contexts;
  Tensor gates;
  Tensor fused;
};
FusionValues fuse_values(const Tensor& asr, const Tensor& ocr, const Tensor& w_b,
                         GateMode mode = GateMode::kGuided);

inline constexpr std::size_t kDefaultOcrCap = 500;

template <typename T>
std::vector<T> cap_ocr(std::vector<T> tokens, std::size_t cap = kDefaultOcrCap) {
  if (tokens.size() > cap) tokens.resize(cap);
  return tokens;
}

}  // namespace fmtlm
