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

#include "fmtlm/layers.hpp"

#include <cmath>

#include "fmtlm/errors.hpp"

namespace fmtlm {

Parameter& ParameterStore::create(const std::string& name, Tensor value) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  params_.push_back(Parameter{name, std::move(value)});
  return params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Tensor glorot_uniform(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w = Tensor::zeros(in, out);
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
  return w;
}

Tensor normal_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.values()) v = rng.normal(0.0, stddev);
  return t;
}

Affine Affine::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                      Rng& rng, bool with_bias) {
  Affine a;
  a.weight = &store.create(name + ".weight", glorot_uniform(in, out, rng));
  if (with_bias) a.bias = &store.create(name + ".bias", Tensor::zeros(1, out));
  return a;
}

Var Affine::operator()(Tape& tape, Var x) const {
  Var y = matmul(x, tape.param(*weight));
  return bias ? add(y, tape.param(*bias)) : y;
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, std::size_t d) {
  LayerNorm ln;
  ln.gain = &store.create(name + ".gain", Tensor({1, d}, 1.0));
  ln.shift = &store.create(name + ".shift", Tensor::zeros(1, d));
  return ln;
}

Var LayerNorm::operator()(Tape& tape, Var x) const {
  return add(mul(layer_norm(x), tape.param(*gain)), tape.param(*shift));
}

}  // namespace fmtlm
