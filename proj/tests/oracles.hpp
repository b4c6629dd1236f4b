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

// Plain-loop reference implementations shared by the unit tests and the
// acceptance suite. They avoid the library's tensor primitives entirely.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fmtlm/tensor.hpp"

namespace fmtlm::testing {

using Tokens = std::vector<std::string>;

// Direct loop transcription of the guided attention: affinity
// c_ij = tanh(a_i·W·o_j), column softmax α_ij over i, context g_j = Σ_i α_ij a_i,
// gate_j = 1 − cos(o_j, g_j), fused = [a ; gate_j·o_j].
struct BruteFusion {
  std::vector<std::vector<double>> c, alpha, g;
  std::vector<double> gate;
  std::vector<std::vector<double>> fused;
};

inline BruteFusion brute_fuse(const Tensor& A, const Tensor& O, const Tensor& W, bool gated = true) {
  const std::size_t n = A.rows(), m = O.rows(), d = A.cols();
  BruteFusion b;
  b.c.assign(n, std::vector<double>(m));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = 0; q < d; ++q) s += A(i, p) * W(p, q) * O(j, q);
      b.c[i][j] = std::tanh(s);
    }
  b.alpha.assign(n, std::vector<double>(m));
  for (std::size_t j = 0; j < m; ++j) {
    double z = 0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(b.c[i][j]);
    for (std::size_t i = 0; i < n; ++i) b.alpha[i][j] = std::exp(b.c[i][j]) / z;
  }
  b.g.assign(m, std::vector<double>(d, 0.0));
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < d; ++p) b.g[j][p] += b.alpha[i][j] * A(i, p);
  for (std::size_t j = 0; j < m; ++j) {
    double dot = 0, no = 0, ng = 0;
    for (std::size_t p = 0; p < d; ++p) {
      dot += O(j, p) * b.g[j][p];
      no += O(j, p) * O(j, p);
      ng += b.g[j][p] * b.g[j][p];
    }
    b.gate.push_back(gated ? 1.0 - dot / (std::sqrt(no) * std::sqrt(ng) + 1e-12) : 1.0);
  }
  for (std::size_t i = 0; i < n; ++i) b.fused.emplace_back(A.row_span(i).begin(), A.row_span(i).end());
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<double> row(d);
    for (std::size_t p = 0; p < d; ++p) row[p] = b.gate[j] * O(j, p);
    b.fused.push_back(row);
  }
  return b;
}

// Each candidate n-gram claims one unused identical reference n-gram.
inline double brute_overlap(const Tokens& c, const Tokens& r, std::size_t n) {
  if (c.size() < n || r.size() < n) return 0;
  std::vector<bool> used(r.size() - n + 1, false);
  std::size_t hits = 0;
  for (std::size_t i = 0; i + n <= c.size(); ++i) {
    for (std::size_t j = 0; j + n <= r.size(); ++j) {
      if (used[j] || !std::equal(c.begin() + static_cast<std::ptrdiff_t>(i),
                                 c.begin() + static_cast<std::ptrdiff_t>(i + n),
                                 r.begin() + static_cast<std::ptrdiff_t>(j))) {
        continue;
      }
      used[j] = true;
      ++hits;
      break;
    }
  }
  return static_cast<double>(hits);
}

inline bool is_subsequence(const Tokens& s, const Tokens& of) {
  std::size_t k = 0;
  for (const auto& t : of)
    if (k < s.size() && s[k] == t) ++k;
  return k == s.size();
}

// Longest subsequence of `a` (by exhaustive subset search) that is also a
// subsequence of `b`.
inline std::size_t brute_lcs(const Tokens& a, const Tokens& b) {
  std::size_t best = 0;
  for (std::uint32_t bits = 0; bits < (1u << a.size()); ++bits) {
    Tokens s;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (bits >> i & 1u) s.push_back(a[i]);
    if (s.size() > best && is_subsequence(s, b)) best = s.size();
  }
  return best;
}

struct BruteScore {
  double precision = 0, recall = 0, f1 = 0;
  bool degenerate = false;
};

inline BruteScore brute_score(double hits, double cand_units, double ref_units) {
  BruteScore s;
  s.precision = hits / cand_units;
  s.recall = hits / ref_units;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

inline BruteScore brute_rouge_n(const Tokens& c, const Tokens& r, std::size_t n) {
  if (c.size() < n || r.size() < n) return {0, 0, 0, true};
  return brute_score(brute_overlap(c, r, n), static_cast<double>(c.size() - n + 1),
                     static_cast<double>(r.size() - n + 1));
}

inline BruteScore brute_rouge_l(const Tokens& c, const Tokens& r) {
  if (c.empty() || r.empty()) return {0, 0, 0, true};
  return brute_score(static_cast<double>(brute_lcs(c, r)), static_cast<double>(c.size()),
                     static_cast<double>(r.size()));
}

}  // namespace fmtlm::testing
