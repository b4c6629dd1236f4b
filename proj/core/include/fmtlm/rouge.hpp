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
#include <string>
#include <string_view>
#include <vector>

namespace fmtlm {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when the inputs are too short for the metric to be defined; all
  // three values are then 0.
  bool degenerate = false;
};

// F = 2PR/(P+R), or 0 when P+R = 0.
double harmonic_f1(double precision, double recall);

// Clipped n-gram overlap (multiset intersection), n ∈ {1, 2}.
RougeScore rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference, int n);

// Dynamic-programming longest common subsequence length.
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Sentence-level ROUGE-L over the whole summary, β = 1.
RougeScore rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);

struct SampleRouge {
  RougeScore r1;
  RougeScore r2;
  RougeScore rl;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
};

struct RougeReport {
  std::vector<SampleRouge> samples;
  SampleRouge mean;  // arithmetic mean of each field; lengths are rounded means
  double mean_candidate_length = 0.0;
  double mean_reference_length = 0.0;
  // histogram[k] = number of candidates with k tokens (and likewise for
  // references), for summary-length plots.
  std::vector<std::size_t> candidate_length_histogram;
  std::vector<std::size_t> reference_length_histogram;

  std::string to_json() const;
};

SampleRouge score_pair(std::string_view candidate, std::string_view reference);

// Scores line-aligned summaries. Throws FormatError on a line-count mismatch.
RougeReport evaluate_corpus(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references);
RougeReport evaluate_corpus_files(const std::string& hyp_path, const std::string& ref_path);

}  // namespace fmtlm
