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

#include "fmtlm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fmtlm/errors.hpp"

namespace fmtlm {
namespace {

void require_rank2(const Tensor& t, std::string_view op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 operand, got " + shape_string(t.shape()));
  }
}

[[noreturn]] void shape_mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                   shape_string(b));
}

// C (r×c) += A (r×k) · B (k×c)
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t r = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* pc = c.values().data();
  for (std::size_t i = 0; i < r; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C (r×c) += A (r×k) · Bᵀ where B is c×k
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t r = a.rows(), k = a.cols(), n = b.rows();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* pc = c.values().data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      pc[i * n + j] += s;
    }
  }
}

// C (r×c) += Aᵀ · B where A is k×r and B is k×c
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t k = a.rows(), r = a.cols(), n = b.cols();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* pc = c.values().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = pb + p * n;
    for (std::size_t i = 0; i < r; ++i) {
      const double av = pa[p * r + i];
      if (av == 0.0) continue;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

enum class Broadcast { kSame, kRow, kCol, kScalar };

Broadcast classify(std::string_view op, const Tensor& a, const Tensor& b) {
  require_rank2(a, op);
  require_rank2(b, op);
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kCol;
  shape_mismatch(op, a.shape(), b.shape());
}

inline std::size_t bindex(Broadcast kind, std::size_t i, std::size_t j, std::size_t cols) {
  switch (kind) {
    case Broadcast::kSame: return i * cols + j;
    case Broadcast::kRow: return j;
    case Broadcast::kCol: return i;
    case Broadcast::kScalar: return 0;
  }
  return 0;
}

// Sums a full-shape gradient down to the broadcast operand's shape.
Tensor reduce_to(Broadcast kind, const Tensor& g, const Shape& target) {
  if (kind == Broadcast::kSame) return g;
  Tensor out(target);
  const std::size_t r = g.rows(), c = g.cols();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[bindex(kind, i, j, c)] += g(i, j);
  return out;
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return y;
}

}  // namespace

// ---------------------------------------------------------------------------

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  return record("constant", std::move(value), {}, nullptr);
}

Var Tape::variable(Tensor value) {
  Var v = record("variable", std::move(value), {}, nullptr);
  nodes_.back().needs_grad = true;
  return v;
}

Var Tape::param(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Var v = record("param", p.value, {}, nullptr);
  nodes_.back().param = &p;
  nodes_.back().needs_grad = true;
  param_nodes_.emplace(&p, v.id);
  return v;
}

Var Tape::record(std::string_view op, Tensor value, std::vector<int> inputs, BackwardFn backward) {
  const int id = static_cast<int>(nodes_.size());
  if (!value.all_finite()) {
    std::ostringstream os;
    os << "non-finite value produced by '" << op << "' at node " << id;
    throw NumericError(os.str());
  }
  bool needs = false;
  for (int in : inputs) needs = needs || nodes_[static_cast<std::size_t>(in)].needs_grad;
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.inputs = std::move(inputs);
  node.needs_grad = needs;
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, id};
}

void Tape::accumulate(int id, const Tensor& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (!n.grad) {
    n.grad = g;
    return;
  }
  auto dst = n.grad->values();
  auto src = g.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  return n.grad ? *n.grad : Tensor(n.value.shape());
}

GradTable Tape::backward(Var loss) {
  const Tensor& lv = value(loss.id);
  if (lv.size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_string(lv.shape()));
  }
  for (auto& n : nodes_) n.grad.reset();
  accumulate(loss.id, Tensor(lv.shape(), 1.0));
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad || !n.backward) continue;
    n.backward(*this, *n.grad);
  }
  GradTable table;
  for (const auto& [param, id] : param_nodes_) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    table.emplace(param, n.grad ? *n.grad : Tensor(n.value.shape()));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Primitives

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  if (av.cols() != bv.rows()) shape_mismatch("matmul", av.shape(), bv.shape());
  Tensor out = Tensor::zeros(av.rows(), bv.cols());
  gemm_nn(av, bv, out);
  Tape& t = *a.tape;
  return t.record("matmul", std::move(out), {a.id, b.id}, [a, b](Tape& tape, const Tensor& g) {
    if (tape.needs_grad(a.id)) {
      const Tensor& bv = tape.value(b.id);
      Tensor ga = Tensor::zeros(g.rows(), bv.rows());
      gemm_nt(g, bv, ga);
      tape.accumulate(a.id, ga);
    }
    if (tape.needs_grad(b.id)) {
      const Tensor& av = tape.value(a.id);
      Tensor gb = Tensor::zeros(av.cols(), g.cols());
      gemm_tn(av, g, gb);
      tape.accumulate(b.id, gb);
    }
  });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = classify("add", av, bv);
  Tensor out = av;
  const std::size_t c = av.cols();
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += bv[bindex(kind, i, j, c)];
  const Shape bshape = bv.shape();
  return a.tape->record("add", std::move(out), {a.id, b.id},
                        [a, b, kind, bshape](Tape& tape, const Tensor& g) {
                          tape.accumulate(a.id, g);
                          if (tape.needs_grad(b.id)) tape.accumulate(b.id, reduce_to(kind, g, bshape));
                        });
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = classify("mul", av, bv);
  Tensor out = av;
  const std::size_t c = av.cols();
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) *= bv[bindex(kind, i, j, c)];
  return a.tape->record("mul", std::move(out), {a.id, b.id}, [a, b, kind](Tape& tape, const Tensor& g) {
    const Tensor& av = tape.value(a.id);
    const Tensor& bv = tape.value(b.id);
    const std::size_t r = g.rows(), c = g.cols();
    if (tape.needs_grad(a.id)) {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga(i, j) = g(i, j) * bv[bindex(kind, i, j, c)];
      tape.accumulate(a.id, ga);
    }
    if (tape.needs_grad(b.id)) {
      Tensor gb(bv.shape());
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[bindex(kind, i, j, c)] += g(i, j) * av(i, j);
      tape.accumulate(b.id, gb);
    }
  });
}

Var tanh(Var x) {
  Tensor out = map(x.value(), [](double v) { return std::tanh(v); });
  const int out_id = static_cast<int>(x.tape->size());
  return x.tape->record("tanh", std::move(out), {x.id}, [x, out_id](Tape& tape, const Tensor& g) {
    const Tensor& y = tape.value(out_id);
    Tensor gx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * (1.0 - y[i] * y[i]);
    tape.accumulate(x.id, gx);
  });
}

Var sigmoid(Var x) {
  Tensor out = map(x.value(), [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  const int out_id = static_cast<int>(x.tape->size());
  return x.tape->record("sigmoid", std::move(out), {x.id}, [x, out_id](Tape& tape, const Tensor& g) {
    const Tensor& y = tape.value(out_id);
    Tensor gx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * y[i] * (1.0 - y[i]);
    tape.accumulate(x.id, gx);
  });
}

Var relu(Var x) {
  Tensor out = map(x.value(), [](double v) { return v > 0 ? v : 0.0; });
  return x.tape->record("relu", std::move(out), {x.id}, [x](Tape& tape, const Tensor& g) {
    const Tensor& xv = tape.value(x.id);
    Tensor gx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = xv[i] > 0 ? g[i] : 0.0;
    tape.accumulate(x.id, gx);
  });
}

Var scale(Var x, double s) {
  Tensor out = map(x.value(), [s](double v) { return v * s; });
  return x.tape->record("scale", std::move(out), {x.id}, [x, s](Tape& tape, const Tensor& g) {
    tape.accumulate(x.id, map(g, [s](double v) { return v * s; }));
  });
}

Var add_scalar(Var x, double s) {
  Tensor out = map(x.value(), [s](double v) { return v + s; });
  return x.tape->record("add_scalar", std::move(out), {x.id},
                        [x](Tape& tape, const Tensor& g) { tape.accumulate(x.id, g); });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const Shape shape = x.value().shape();
  return x.tape->record("sum", Tensor::scalar(s), {x.id}, [x, shape](Tape& tape, const Tensor& g) {
    tape.accumulate(x.id, Tensor(shape, g.item()));
  });
}

Var softmax(Var x) {
  const Tensor& xv = x.value();
  require_rank2(xv, "softmax");
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    auto in = xv.row_span(i);
    auto o = out.row_span(i);
    const double m = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) z += (o[j] = std::exp(in[j] - m));
    for (double& v : o) v /= z;
  }
  const int out_id = static_cast<int>(x.tape->size());
  return x.tape->record("softmax", std::move(out), {x.id}, [x, out_id](Tape& tape, const Tensor& g) {
    const Tensor& y = tape.value(out_id);
    Tensor gx(g.shape());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) = y(i, j) * (g(i, j) - dot);
    }
    tape.accumulate(x.id, gx);
  });
}

Var log_softmax(Var x) {
  const Tensor& xv = x.value();
  require_rank2(xv, "log_softmax");
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    auto in = xv.row_span(i);
    const double m = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (double v : in) z += std::exp(v - m);
    const double lse = m + std::log(z);
    for (std::size_t j = 0; j < in.size(); ++j) out(i, j) = in[j] - lse;
  }
  const int out_id = static_cast<int>(x.tape->size());
  return x.tape->record("log_softmax", std::move(out), {x.id}, [x, out_id](Tape& tape, const Tensor& g) {
    const Tensor& y = tape.value(out_id);
    Tensor gx(g.shape());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) gs += g(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) = g(i, j) - std::exp(y(i, j)) * gs;
    }
    tape.accumulate(x.id, gx);
  });
}

Var layer_norm(Var x, double eps) {
  const Tensor& xv = x.value();
  require_rank2(xv, "layer_norm");
  const std::size_t r = xv.rows(), c = xv.cols();
  Tensor out(xv.shape());
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    auto in = xv.row_span(i);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) out(i, j) = (in[j] - mean) * inv_std[i];
  }
  const int out_id = static_cast<int>(x.tape->size());
  return x.tape->record("layer_norm", std::move(out), {x.id},
                        [x, out_id, inv_std = std::move(inv_std)](Tape& tape, const Tensor& g) {
                          const Tensor& y = tape.value(out_id);
                          const std::size_t c = g.cols();
                          const double inv_c = 1.0 / static_cast<double>(c);
                          Tensor gx(g.shape());
                          for (std::size_t i = 0; i < g.rows(); ++i) {
                            double mg = 0.0, mgy = 0.0;
                            for (std::size_t j = 0; j < c; ++j) {
                              mg += g(i, j);
                              mgy += g(i, j) * y(i, j);
                            }
                            mg *= inv_c;
                            mgy *= inv_c;
                            for (std::size_t j = 0; j < c; ++j)
                              gx(i, j) = inv_std[i] * (g(i, j) - mg - y(i, j) * mgy);
                          }
                          tape.accumulate(x.id, gx);
                        });
}

Var dropout(Var x, double rate) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must lie in [0, 1)");
  Tape& tape = *x.tape;
  if (!tape.training() || rate == 0.0) return x;
  const Tensor& xv = x.value();
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(xv.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = tape.rng().uniform() < rate ? 0.0 : keep_scale;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return tape.record("dropout", std::move(out), {x.id}, [x, mask = std::move(mask)](Tape& t, const Tensor& g) {
    Tensor gx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * mask[i];
    t.accumulate(x.id, gx);
  });
}

Var embed(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  require_rank2(tv, "embed");
  const std::size_t c = tv.cols();
  Tensor out = Tensor::zeros(ids.size(), c);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw ContractError("embed: id " + std::to_string(ids[i]) + " outside table of " +
                          std::to_string(tv.rows()) + " rows");
    }
    auto src = tv.row_span(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  std::vector<int> idv(ids.begin(), ids.end());
  const Shape tshape = tv.shape();
  return table.tape->record("embed", std::move(out), {table.id},
                            [table, idv = std::move(idv), tshape](Tape& tape, const Tensor& g) {
                              Tensor gt(tshape);
                              const std::size_t c = g.cols();
                              for (std::size_t i = 0; i < idv.size(); ++i) {
                                auto dst = gt.row_span(static_cast<std::size_t>(idv[i]));
                                for (std::size_t j = 0; j < c; ++j) dst[j] += g(i, j);
                              }
                              tape.accumulate(table.id, gt);
                            });
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ContractError("concat: axis must be 0 or 1");
  Tape& tape = *parts[0].tape;
  std::size_t rows = 0, cols = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    require_rank2(v, "concat");
    const Shape& first = parts[0].value().shape();
    if (axis == 0) {
      if (v.cols() != first[1]) shape_mismatch("concat", first, v.shape());
      rows += v.rows();
      cols = v.cols();
    } else {
      if (v.rows() != first[0]) shape_mismatch("concat", first, v.shape());
      cols += v.cols();
      rows = v.rows();
    }
  }
  Tensor out = Tensor::zeros(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    offsets.push_back(off);
    for (std::size_t i = 0; i < v.rows(); ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) {
        if (axis == 0) out(off + i, j) = v(i, j);
        else out(i, off + j) = v(i, j);
      }
    off += axis == 0 ? v.rows() : v.cols();
  }
  std::vector<int> ids;
  std::vector<Shape> shapes;
  for (const Var& p : parts) {
    ids.push_back(p.id);
    shapes.push_back(p.value().shape());
  }
  return tape.record("concat", std::move(out), ids,
                     [ids, shapes, offsets, axis](Tape& t, const Tensor& g) {
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         if (!t.needs_grad(ids[k])) continue;
                         Tensor gp(shapes[k]);
                         for (std::size_t i = 0; i < shapes[k][0]; ++i)
                           for (std::size_t j = 0; j < shapes[k][1]; ++j)
                             gp(i, j) = axis == 0 ? g(offsets[k] + i, j) : g(i, offsets[k] + j);
                         t.accumulate(ids[k], gp);
                       }
                     });
}

Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require_rank2(xv, "slice_rows");
  if (begin > end || end > xv.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + shape_string(xv.shape()));
  }
  const std::size_t c = xv.cols();
  Tensor out({end - begin, c}, std::vector<double>(xv.values().begin() + static_cast<std::ptrdiff_t>(begin * c),
                                                   xv.values().begin() + static_cast<std::ptrdiff_t>(end * c)));
  const Shape shape = xv.shape();
  return x.tape->record("slice_rows", std::move(out), {x.id}, [x, begin, shape](Tape& tape, const Tensor& g) {
    Tensor gx(shape);
    std::copy(g.values().begin(), g.values().end(),
              gx.values().begin() + static_cast<std::ptrdiff_t>(begin * shape[1]));
    tape.accumulate(x.id, gx);
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require_rank2(xv, "slice_cols");
  if (begin > end || end > xv.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + shape_string(xv.shape()));
  }
  Tensor out = Tensor::zeros(xv.rows(), end - begin);
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = xv(i, j);
  const Shape shape = xv.shape();
  return x.tape->record("slice_cols", std::move(out), {x.id}, [x, begin, shape](Tape& tape, const Tensor& g) {
    Tensor gx(shape);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gx(i, begin + j) = g(i, j);
    tape.accumulate(x.id, gx);
  });
}

Var transpose(Var x) {
  const Tensor& xv = x.value();
  require_rank2(xv, "transpose");
  Tensor out = Tensor::zeros(xv.cols(), xv.rows());
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < xv.cols(); ++j) out(j, i) = xv(i, j);
  return x.tape->record("transpose", std::move(out), {x.id}, [x](Tape& tape, const Tensor& g) {
    Tensor gx = Tensor::zeros(g.cols(), g.rows());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gx(j, i) = g(i, j);
    tape.accumulate(x.id, gx);
  });
}

Var cosine_rows(Var a, Var b, double eps) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "cosine_rows");
  if (av.shape() != bv.shape()) shape_mismatch("cosine_rows", av.shape(), bv.shape());
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = Tensor::zeros(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      dot += av(i, j) * bv(i, j);
      na += av(i, j) * av(i, j);
      nb += bv(i, j) * bv(i, j);
    }
    out(i, 0) = dot / (std::sqrt(na) * std::sqrt(nb) + eps);
  }
  return a.tape->record("cosine_rows", std::move(out), {a.id, b.id}, [a, b, eps](Tape& tape, const Tensor& g) {
    const Tensor& av = tape.value(a.id);
    const Tensor& bv = tape.value(b.id);
    const std::size_t r = av.rows(), c = av.cols();
    Tensor ga(av.shape()), gb(bv.shape());
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        dot += av(i, j) * bv(i, j);
        na += av(i, j) * av(i, j);
        nb += bv(i, j) * bv(i, j);
      }
      na = std::sqrt(na);
      nb = std::sqrt(nb);
      const double denom = na * nb + eps;
      const double gi = g(i, 0);
      for (std::size_t j = 0; j < c; ++j) {
        // d(dot/D) = d(dot)/D − dot·dD/D², with dD/da = ‖b‖·a/‖a‖.
        const double dna = na > 0 ? av(i, j) / na : 0.0;
        const double dnb = nb > 0 ? bv(i, j) / nb : 0.0;
        ga(i, j) = gi * (bv(i, j) / denom - dot * nb * dna / (denom * denom));
        gb(i, j) = gi * (av(i, j) / denom - dot * na * dnb / (denom * denom));
      }
    }
    tape.accumulate(a.id, ga);
    tape.accumulate(b.id, gb);
  });
}

Var masked_fill(Var x, const Mask& mask, double fill) {
  const Tensor& xv = x.value();
  require_rank2(xv, "masked_fill");
  if (mask.rows != xv.rows() || mask.cols != xv.cols()) {
    shape_mismatch("masked_fill", xv.shape(), Shape{mask.rows, mask.cols});
  }
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask.bits[i]) out[i] = fill;
  return x.tape->record("masked_fill", std::move(out), {x.id}, [x, mask](Tape& tape, const Tensor& g) {
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (mask.bits[i]) gx[i] = 0.0;
    tape.accumulate(x.id, gx);
  });
}

Var cross_entropy(Var logits, std::span<const int> targets, std::span<const std::uint8_t> mask) {
  const Tensor& lv = logits.value();
  require_rank2(lv, "cross_entropy");
  const std::size_t r = lv.rows(), c = lv.cols();
  if (targets.size() != r || mask.size() != r) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets and " +
                     std::to_string(mask.size()) + " mask entries for logits " + shape_string(lv.shape()));
  }
  std::size_t count = 0;
  double total = 0.0;
  Tensor probs(lv.shape());
  for (std::size_t i = 0; i < r; ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= c) {
      throw ContractError("cross_entropy: target " + std::to_string(targets[i]) + " outside " +
                          std::to_string(c) + " classes");
    }
    auto in = lv.row_span(i);
    const double m = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (double v : in) z += std::exp(v - m);
    const double lse = m + std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs(i, j) = std::exp(in[j] - lse);
    total += lse - in[static_cast<std::size_t>(targets[i])];
    ++count;
  }
  const double inv = count ? 1.0 / static_cast<double>(count) : 0.0;
  std::vector<int> tv(targets.begin(), targets.end());
  std::vector<std::uint8_t> mv(mask.begin(), mask.end());
  return logits.tape->record(
      "cross_entropy", Tensor::scalar(total * inv), {logits.id},
      [logits, probs = std::move(probs), tv = std::move(tv), mv = std::move(mv), inv](Tape& tape, const Tensor& g) {
        Tensor gl(probs.shape());
        const double s = g.item() * inv;
        for (std::size_t i = 0; i < gl.rows(); ++i) {
          if (!mv[i]) continue;
          for (std::size_t j = 0; j < gl.cols(); ++j) gl(i, j) = s * probs(i, j);
          gl(i, static_cast<std::size_t>(tv[i])) -= s;
        }
        tape.accumulate(logits.id, gl);
      });
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& registered_primitives() {
  static const std::vector<std::string> names = {
      "matmul",  "add",       "sub",         "mul",         "tanh",  "sigmoid",
      "relu",    "scale",     "add_scalar",  "sum",         "softmax", "log_softmax",
      "layer_norm", "dropout", "embed",      "concat",      "slice", "transpose",
      "cosine_rows", "masked_fill", "cross_entropy"};
  return names;
}

Var forward(Tape& tape, std::string_view primitive, std::span<const Var> inputs,
            const PrimitiveArgs& args) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ContractError(std::string(primitive) + ": expected " + std::to_string(n) + " inputs, got " +
                          std::to_string(inputs.size()));
    }
    for (const Var& v : inputs)
      if (v.tape != &tape) throw ContractError(std::string(primitive) + ": input from another tape");
  };
  if (primitive == "matmul") { need(2); return matmul(inputs[0], inputs[1]); }
  if (primitive == "add") { need(2); return add(inputs[0], inputs[1]); }
  if (primitive == "sub") { need(2); return sub(inputs[0], inputs[1]); }
  if (primitive == "mul") { need(2); return mul(inputs[0], inputs[1]); }
  if (primitive == "tanh") { need(1); return tanh(inputs[0]); }
  if (primitive == "sigmoid") { need(1); return sigmoid(inputs[0]); }
  if (primitive == "relu") { need(1); return relu(inputs[0]); }
  if (primitive == "scale") { need(1); return scale(inputs[0], args.scalar); }
  if (primitive == "add_scalar") { need(1); return add_scalar(inputs[0], args.scalar); }
  if (primitive == "sum") { need(1); return sum(inputs[0]); }
  if (primitive == "softmax") { need(1); return softmax(inputs[0]); }
  if (primitive == "log_softmax") { need(1); return log_softmax(inputs[0]); }
  if (primitive == "layer_norm") { need(1); return layer_norm(inputs[0], args.scalar > 0 ? args.scalar : 1e-5); }
  if (primitive == "dropout") { need(1); return dropout(inputs[0], args.scalar); }
  if (primitive == "embed") { need(1); return embed(inputs[0], args.ids); }
  if (primitive == "concat") {
    if (inputs.empty()) throw ContractError("concat: no inputs");
    return concat(inputs, args.axis);
  }
  if (primitive == "slice") {
    need(1);
    return args.axis == 0 ? slice_rows(inputs[0], args.begin, args.end)
                          : slice_cols(inputs[0], args.begin, args.end);
  }
  if (primitive == "transpose") { need(1); return transpose(inputs[0]); }
  if (primitive == "cosine_rows") { need(2); return cosine_rows(inputs[0], inputs[1]); }
  if (primitive == "masked_fill") { need(1); return masked_fill(inputs[0], args.mask, args.scalar); }
  if (primitive == "cross_entropy") {
    need(1);
    return cross_entropy(inputs[0], args.ids, args.row_mask);
  }
  throw ContractError("unknown primitive '" + std::string(primitive) + "'");
}

// ---------------------------------------------------------------------------

namespace {

double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

double grad_check(const std::function<Var(Tape&, Var)>& fn, const Tensor& point, double h) {
  Tensor analytic;
  {
    Tape tape;
    Var x = tape.variable(point);
    Var y = fn(tape, x);
    tape.backward(y);
    analytic = tape.grad(x);
  }
  auto eval = [&](const Tensor& p) {
    Tape tape;
    Var x = tape.variable(p);
    return fn(tape, x).value().item();
  };
  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + h;
    const double up = eval(probe);
    probe[i] = point[i] - h;
    const double down = eval(probe);
    probe[i] = point[i];
    worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

double grad_check_param(const std::function<Var(Tape&)>& fn, Parameter& param, double h,
                        std::span<const std::size_t> coords) {
  Tensor analytic;
  {
    Tape tape;
    Var y = fn(tape);
    GradTable grads = tape.backward(y);
    auto it = grads.find(&param);
    analytic = it != grads.end() ? it->second : Tensor(param.value.shape());
  }
  auto eval = [&] {
    Tape tape;
    return fn(tape).value().item();
  };
  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(param.value.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    coords = all;
  }
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t i : coords) {
    const double saved = param.value[i];
    param.value[i] = saved + h;
    const double up = eval();
    param.value[i] = saved - h;
    const double down = eval();
    param.value[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
    a2 += analytic[i] * analytic[i];
    n2 += numeric * numeric;
  }
  return std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-8});
}

}  // namespace fmtlm
