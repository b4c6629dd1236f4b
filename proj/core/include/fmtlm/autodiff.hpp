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

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <deque>
#include <vector>

#include "fmtlm/rng.hpp"
#include "fmtlm/tensor.hpp"

namespace fmtlm {

// A named learnable tensor. Owned by a model; tapes refer to it by pointer.
struct Parameter {
  std::string name;
  Tensor value;
};

class Tape;

// Handle to a node recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

using GradTable = std::unordered_map<const Parameter*, Tensor>;

// Boolean matrix used by masked_fill; true marks entries to overwrite.
struct Mask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t r, std::size_t c, bool fill = false)
      : rows(r), cols(c), bits(r * c, fill ? 1 : 0) {}
  bool operator()(std::size_t r, std::size_t c) const { return bits[r * cols + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { bits[r * cols + c] = v ? 1 : 0; }
};

// Records a computation in topological order. Every node's inputs precede it,
// so a reverse sweep visits each node exactly once.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  explicit Tape(std::uint64_t dropout_seed = 0, bool training = false)
      : rng_(dropout_seed), training_(training) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that does not require a gradient.
  Var constant(Tensor value);
  // Leaf that does require a gradient (gradient-check inputs).
  Var variable(Tensor value);
  // Leaf for a parameter; repeated calls return the same node so shared uses
  // accumulate into a single gradient.
  Var param(const Parameter& p);

  // Appends a node. `backward` receives the node's output gradient and must
  // route it into the inputs with accumulate(). Throws NumericError if the
  // value contains NaN or Inf.
  Var record(std::string_view op, Tensor value, std::vector<int> inputs, BackwardFn backward);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool training() const { return training_; }
  void set_training(bool t) { training_ = t; }
  Rng& rng() { return rng_; }

  // Adds `g` into the gradient slot of node `id`.
  void accumulate(int id, const Tensor& g);
  // Gradient of the last backward pass at node `id` (zeros if unreached).
  Tensor grad(Var v) const;

  // Reverse sweep from a 1×1 loss. Returns the gradient of every parameter
  // reachable from the loss.
  GradTable backward(Var loss);

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    std::vector<int> inputs;
    BackwardFn backward;
    const Parameter* param = nullptr;
    bool needs_grad = false;
    std::optional<Tensor> grad;
  };

  std::deque<Node> nodes_;  // deque: references stay valid while recording
  std::unordered_map<const Parameter*, int> param_nodes_;
  Rng rng_;
  bool training_;
};

// ---------------------------------------------------------------------------
// Primitives. All operate on rank-2 values.

Var matmul(Var a, Var b);
// Elementwise add/mul. The right operand may broadcast as 1×c, r×1 or 1×1.
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var sub(Var a, Var b);
Var tanh(Var x);
Var sigmoid(Var x);
Var relu(Var x);
Var scale(Var x, double s);
Var add_scalar(Var x, double s);
Var sum(Var x);
Var softmax(Var x);      // over each row
Var log_softmax(Var x);  // over each row
// Per-row normalisation to zero mean and unit variance (no affine).
Var layer_norm(Var x, double eps = 1e-5);
// Inverted dropout: active only when the tape is in training mode.
Var dropout(Var x, double rate);
// Row gather: out[i] = table[ids[i]].
Var embed(Var table, std::span<const int> ids);
Var concat(std::span<const Var> parts, int axis);
Var concat(std::initializer_list<Var> parts, int axis);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var transpose(Var x);
// Row-wise cosine similarity of two r×c inputs → r×1. The denominator is
// ‖a‖‖b‖ + eps.
Var cosine_rows(Var a, Var b, double eps = 1e-12);
Var masked_fill(Var x, const Mask& mask, double fill);
// Mean of −log softmax(logits)[target] over rows where mask is true.
// Returns 0 when no row is selected.
Var cross_entropy(Var logits, std::span<const int> targets, std::span<const std::uint8_t> mask);

// Extra arguments for the by-name dispatcher.
struct PrimitiveArgs {
  double scalar = 0.0;
  int axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<int> ids;
  std::vector<std::uint8_t> row_mask;
  Mask mask;
};

// Names accepted by forward(); the gradient suite iterates this list.
const std::vector<std::string>& registered_primitives();

// Applies a primitive by name. Unknown names throw ContractError.
Var forward(Tape& tape, std::string_view primitive, std::span<const Var> inputs,
            const PrimitiveArgs& args = {});

// ---------------------------------------------------------------------------
// Finite-difference checking.

// Max over coordinates of |analytic − central difference| /
// max(|analytic|, |cd|, 1e-8) for a scalar function of one tensor.
double grad_check(const std::function<Var(Tape&, Var)>& fn, const Tensor& point, double h = 1e-5);

// Check against a parameter inside a larger graph. `fn` rebuilds the graph
// on a fresh tape each call; `coords` restricts the checked entries (empty →
// all). The error is norm-wise over those entries,
// ‖analytic − cd‖ / max(‖analytic‖, ‖cd‖, 1e-8), so entries whose gradient
// sits below the central-difference roundoff floor do not dominate.
double grad_check_param(const std::function<Var(Tape&)>& fn, Parameter& param, double h = 1e-5,
                        std::span<const std::size_t> coords = {});

}  // namespace fmtlm
