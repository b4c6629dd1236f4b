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

#include "fmtlm/fusion.hpp"

#include "fmtlm/errors.hpp"

namespace fmtlm {

Var affinity(Var asr, Var ocr, Var w_b) {
  const std::size_t d = asr.cols();
  if (ocr.cols() != d || w_b.rows() != d || w_b.cols() != d) {
    throw ShapeError("affinity: asr " + shape_string(asr.shape()) + ", ocr " + shape_string(ocr.shape()) +
                     ", w_b " + shape_string(w_b.shape()) + " do not share d");
  }
  return tanh(matmul(matmul(asr, w_b), transpose(ocr)));
}

AttendedContexts attend_contexts(Var affinity, Var asr) {
  if (affinity.rows() != asr.rows()) {
    throw ShapeError("attend_contexts: affinity " + shape_string(affinity.shape()) + " vs asr " +
                     shape_string(asr.shape()));
  }
  // Row softmax of Cᵀ normalises each OCR column over the ASR index.
  Var alpha_t = softmax(transpose(affinity));  // m×n
  return {transpose(alpha_t), matmul(alpha_t, asr)};
}

Var redundancy_gate(Var ocr, Var contexts) {
  if (ocr.rows() != contexts.rows()) {
    throw ShapeError("redundancy_gate: ocr " + shape_string(ocr.shape()) + " vs contexts " +
                     shape_string(contexts.shape()));
  }
  return add_scalar(scale(cosine_rows(ocr, contexts, 1e-12), -1.0), 1.0);
}

FusionResult fuse(Var asr, Var ocr, Var w_b, GateMode mode) {
  if (asr.rows() == 0) throw ContractError("fuse: ASR stream must have at least one token");
  if (ocr.cols() != asr.cols()) {
    throw ShapeError("fuse: asr " + shape_string(asr.shape()) + " vs ocr " + shape_string(ocr.shape()));
  }
  FusionResult r;
  if (ocr.rows() == 0) {
    r.fused = asr;
    return r;
  }
  r.affinity = affinity(asr, ocr, w_b);
  auto [alpha, contexts] = attend_contexts(r.affinity, asr);
  r.alpha = alpha;
  r.contexts = contexts;
  Tape& tape = *asr.tape;
  r.gates = mode == GateMode::kGuided ? redundancy_gate(ocr, contexts)
                                      : tape.constant(Tensor({ocr.rows(), 1}, 1.0));
  r.fused = concat({asr, mul(ocr, r.gates)}, 0);
  return r;
}

FusionValues fuse_values(const Tensor& asr, const Tensor& ocr, const Tensor& w_b, GateMode mode) {
  Tape tape;
  FusionResult r = fuse(tape.constant(asr), tape.constant(ocr), tape.constant(w_b), mode);
  FusionValues v;
  v.fused = r.fused.value();
  if (ocr.rows() == 0) return v;
  v.affinity = r.affinity.value();
  v.alpha = r.alpha.value();
  v.contexts = r.contexts.value();
  v.gates = r.gates.value();
  return v;
}

}  // namespace fmtlm
