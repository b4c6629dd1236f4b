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

#include "fmtlm/optimizer.hpp"

#include <cmath>

#include "fmtlm/errors.hpp"

namespace fmtlm {

double learning_rate(const TrainConfig& c, std::size_t step) {
  if (step == 0) return 0.0;
  const auto s = static_cast<double>(step);
  if (c.warmup_steps > 0 && step <= c.warmup_steps) {
    return c.peak_lr * s / static_cast<double>(c.warmup_steps);
  }
  if (c.total_steps <= c.warmup_steps) return c.peak_lr;
  const double remaining = static_cast<double>(c.total_steps) - s;
  const double span = static_cast<double>(c.total_steps - c.warmup_steps);
  return c.peak_lr * std::max(0.0, remaining) / span;
}

double clip_global_norm(GradTable& grads, const ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& p : store.all()) {
    auto it = grads.find(&p);
    if (it == grads.end()) continue;
    for (double v : it->second.values()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [_, g] : grads)
      for (double& v : g.values()) v *= s;
  }
  return norm;
}

Adam::Adam(const ParameterStore& store, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : store.all()) {
    m_.emplace_back(p.value.shape());
    v_.emplace_back(p.value.shape());
  }
}

void Adam::step(ParameterStore& store, const GradTable& grads, double lr) {
  if (m_.size() != store.all().size()) throw ContractError("adam: parameter store changed size");
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  std::size_t k = 0;
  for (auto& p : store.all()) {
    auto it = grads.find(&p);
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    ++k;
    // Parameters untouched by this batch still decay their moments.
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = it == grads.end() ? 0.0 : it->second[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace fmtlm
