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
#include <deque>
#include <string>
#include <vector>

#include "fmtlm/autodiff.hpp"
#include "fmtlm/rng.hpp"

namespace fmtlm {

// Owns parameters with stable addresses, in creation order.
class ParameterStore {
 public:
  Parameter& create(const std::string& name, Tensor value);

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }
  std::size_t scalar_count() const;

 private:
  std::deque<Parameter> params_;
};

// Glorot-uniform weights, zero bias. Computes x·W + b per row.
struct Affine {
  Parameter* weight = nullptr;  // in × out
  Parameter* bias = nullptr;    // 1 × out, or null for a purely linear map

  static Affine create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                       Rng& rng, bool with_bias = true);
  Var operator()(Tape& tape, Var x) const;
  std::size_t in() const { return weight->value.rows(); }
  std::size_t out() const { return weight->value.cols(); }
};

// Row normalisation followed by a learned per-column gain and shift.
struct LayerNorm {
  Parameter* gain = nullptr;  // 1 × d, initialised to 1
  Parameter* shift = nullptr; // 1 × d, initialised to 0

  static LayerNorm create(ParameterStore& store, const std::string& name, std::size_t d);
  Var operator()(Tape& tape, Var x) const;
};

Tensor glorot_uniform(std::size_t in, std::size_t out, Rng& rng);
Tensor normal_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

}  // namespace fmtlm
