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
#include "fmtlm/config.hpp"
#include "fmtlm/layers.hpp"

namespace fmtlm {

// Linear warmup to the peak over `warmup_steps`, then linear decay to zero
// at `total_steps`. `step` is 1-based.
double learning_rate(const TrainConfig& config, std::size_t step);

// Scales `grads` in place so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping. The sum runs in `store` order so the
// result does not depend on parameter addresses; gradients of parameters
// outside `store` are scaled but not counted.
double clip_global_norm(GradTable& grads, const ParameterStore& store, double max_norm);

// Adam with bias correction. Moments are kept per parameter in store order.
class Adam {
 public:
  Adam(const ParameterStore& store, double beta1, double beta2, double eps);

  void step(ParameterStore& store, const GradTable& grads, double lr);

  std::size_t steps() const { return steps_; }
  void set_steps(std::size_t n) { steps_ = n; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  double beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace fmtlm
