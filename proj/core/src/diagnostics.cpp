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

#include "fmtlm/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "fmtlm/autodiff.hpp"
#include "fmtlm/errors.hpp"
#include "fmtlm/model.hpp"
#include "fmtlm/summarizer.hpp"
#include "fmtlm/synthetic.hpp"

namespace fmtlm {

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t = Tensor::zeros(r, c);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

// Values bounded away from zero so relu's kink is never straddled.
Tensor away_from_zero(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t = Tensor::zeros(r, c);
  for (double& v : t.values()) {
    const double m = 0.1 + std::abs(rng.normal());
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

// Σ y ⊙ w for a fixed random w, or y itself when already scalar.
Var reduce(Var y, const Tensor& weights) {
  if (y.rows() == 1 && y.cols() == 1) return y;
  return sum(mul(y, y.tape->constant(weights)));
}

struct Case {
  std::vector<Tensor> inputs;
  PrimitiveArgs args;
  bool training = false;
};

Case make_case(const std::string& name, std::size_t point, Rng& rng) {
  const std::size_t r = 1 + rng.below(4);
  const std::size_t c = 2 + rng.below(4);
  Case k;
  if (name == "matmul") {
    const std::size_t inner = 1 + rng.below(4);
    k.inputs = {random_tensor(r, inner, rng), random_tensor(inner, c, rng)};
  } else if (name == "add" || name == "sub" || name == "mul") {
    // Cycle through the broadcast forms of the right operand.
    static const std::size_t kForms = 4;
    const std::size_t form = point % kForms;
    const std::size_t br = form == 2 || form == 3 ? 1 : r;
    const std::size_t bc = form == 1 || form == 3 ? 1 : c;
    k.inputs = {random_tensor(r, c, rng), random_tensor(br, bc, rng)};
  } else if (name == "relu") {
    k.inputs = {away_from_zero(r, c, rng)};
  } else if (name == "scale" || name == "add_scalar") {
    k.inputs = {random_tensor(r, c, rng)};
    k.args.scalar = rng.normal();
  } else if (name == "dropout") {
    k.inputs = {random_tensor(r, c, rng)};
    k.args.scalar = 0.3;
    k.training = true;
  } else if (name == "embed") {
    const std::size_t vocab = 2 + rng.below(5);
    k.inputs = {random_tensor(vocab, c, rng)};
    for (std::size_t i = 0; i < r + 2; ++i) k.args.ids.push_back(static_cast<int>(rng.below(vocab)));
  } else if (name == "concat") {
    k.args.axis = static_cast<int>(point % 2);
    const std::size_t parts = 2 + rng.below(2);
    for (std::size_t i = 0; i < parts; ++i) {
      const std::size_t extra = 1 + rng.below(3);
      k.inputs.push_back(k.args.axis == 0 ? random_tensor(extra, c, rng) : random_tensor(r, extra, rng));
    }
  } else if (name == "slice") {
    k.args.axis = static_cast<int>(point % 2);
    const std::size_t rows = r + 2;
    k.inputs = {random_tensor(rows, c, rng)};
    const std::size_t extent = k.args.axis == 0 ? rows : c;
    k.args.begin = rng.below(extent);
    k.args.end = k.args.begin + 1 + rng.below(extent - k.args.begin);
  } else if (name == "cosine_rows") {
    k.inputs = {random_tensor(r, c, rng), random_tensor(r, c, rng)};
  } else if (name == "masked_fill") {
    k.inputs = {random_tensor(r, c, rng)};
    k.args.mask = Mask(r, c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) k.args.mask.set(i, j, rng.uniform() < 0.4);
    k.args.scalar = -3.0;
  } else if (name == "cross_entropy") {
    k.inputs = {random_tensor(r, c, rng)};
    for (std::size_t i = 0; i < r; ++i) {
      k.args.ids.push_back(static_cast<int>(rng.below(c)));
      k.args.row_mask.push_back(rng.uniform() < 0.7 ? 1 : 0);
    }
    k.args.row_mask[rng.below(r)] = 1;
  } else {
    k.inputs = {random_tensor(r, c, rng)};
  }
  return k;
}

}  // namespace

std::vector<GradCheckEntry> check_primitives(std::uint64_t seed, std::size_t points, double h) {
  std::vector<GradCheckEntry> out;
  for (const auto& name : registered_primitives()) {
    Rng rng = Rng::derive(seed, std::hash<std::string>{}(name));
    GradCheckEntry entry{name, 0.0};
    for (std::size_t p = 0; p < points; ++p) {
      const Case k = make_case(name, p, rng);
      // Probe output shape once to draw the reduction weights.
      Tensor weights;
      {
        Tape probe;
        std::vector<Var> vars;
        for (const auto& t : k.inputs) vars.push_back(probe.constant(t));
        const Var y = forward(probe, name, vars, k.args);
        weights = random_tensor(y.rows(), y.cols(), rng);
      }
      for (std::size_t slot = 0; slot < k.inputs.size(); ++slot) {
        auto fn = [&](Tape& tape, Var x) {
          tape.set_training(k.training);
          std::vector<Var> vars;
          for (std::size_t i = 0; i < k.inputs.size(); ++i) vars.push_back(i == slot ? x : tape.constant(k.inputs[i]));
          return reduce(forward(tape, name, vars, k.args), weights);
        };
        entry.max_rel_error = std::max(entry.max_rel_error, grad_check(fn, k.inputs[slot], h));
      }
    }
    out.push_back(entry);
  }
  return out;
}

std::vector<GradCheckEntry> check_model(const RunConfig& config, std::uint64_t seed, std::size_t n_params,
                                        std::size_t coords, double h, double spread) {
  SyntheticProfile profile = synthetic_profile("toy");
  profile.length = config.sequence.source_length;
  profile.segments = config.sequence.max_target;
  profile.visual_dim = config.model.d_visual;
  profile.acoustic_dim = config.model.d_acoustic;
  profile.reference_rate = config.sequence.reference_rate;
  const auto synthetic = generate_synthetic(2, Rng::derive(seed, 0x9c).next_u64(), profile);

  std::vector<std::string> corpus;
  std::vector<SampleData> data;
  for (const auto& s : synthetic) {
    data.push_back(to_sample_data(s, profile));
    corpus.push_back(s.summary);
    for (const auto* stream : {&s.asr, &s.ocr})
      for (const auto& t : *stream) corpus.push_back(t);
  }
  const Vocab vocab = Vocab::build(corpus, 1);
  std::vector<PreparedSample> prepared;
  for (const auto& d : data) prepared.push_back(prepare_sample(d, vocab, config));
  std::vector<const PreparedSample*> batch;
  for (const auto& p : prepared) batch.push_back(&p);

  FmtModel model = FmtModel::from_seed(config, vocab.size(), seed);
  Rng rng = Rng::derive(seed, 0x9d);
  for (auto& p : model.params().all())
    for (double& v : p.value.values()) v += spread * rng.normal();

  auto& params = model.params().all();
  std::vector<std::size_t> order(params.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  order.resize(std::min(n_params, order.size()));
  std::sort(order.begin(), order.end());

  std::vector<GradCheckEntry> out;
  for (std::size_t idx : order) {
    Parameter& p = params[idx];
    std::vector<std::size_t> picks(p.value.size());
    for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
    for (std::size_t i = picks.size(); i > 1; --i) std::swap(picks[i - 1], picks[rng.below(i)]);
    picks.resize(std::min(coords, picks.size()));
    const double err =
        grad_check_param([&](Tape& tape) { return batch_loss(tape, model, batch).loss; }, p, h, picks);
    out.push_back({p.name, err});
  }
  return out;
}

}  // namespace fmtlm
