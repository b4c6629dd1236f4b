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

#include "fmtlm/rouge.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fmtlm/errors.hpp"
#include "fmtlm/feature_file.hpp"
#include "fmtlm/vocab.hpp"

namespace fmtlm {

double harmonic_f1(double p, double r) { return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0; }

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& toks, int n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  const auto un = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + un <= toks.size(); ++i) {
    ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                      toks.begin() + static_cast<std::ptrdiff_t>(i + un))];
  }
  return counts;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

nlohmann::ordered_json score_json(const RougeScore& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"degenerate", s.degenerate}};
}

nlohmann::ordered_json sample_json(const SampleRouge& s) {
  return {{"rouge_1", score_json(s.r1)},
          {"rouge_2", score_json(s.r2)},
          {"rouge_l", score_json(s.rl)},
          {"candidate_length", s.candidate_length},
          {"reference_length", s.reference_length}};
}

}  // namespace

RougeScore rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference, int n) {
  if (n != 1 && n != 2) throw ContractError("rouge_n: n must be 1 or 2");
  RougeScore s;
  const auto un = static_cast<std::size_t>(n);
  if (reference.size() < un || candidate.size() < un) {
    s.degenerate = true;
    return s;
  }
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  std::size_t overlap = 0;
  for (const auto& [gram, c] : cand) {
    if (auto it = ref.find(gram); it != ref.end()) overlap += std::min(c, it->second);
  }
  s.precision = static_cast<double>(overlap) / static_cast<double>(candidate.size() - un + 1);
  s.recall = static_cast<double>(overlap) / static_cast<double>(reference.size() - un + 1);
  s.f1 = harmonic_f1(s.precision, s.recall);
  return s;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  RougeScore s;
  if (candidate.empty() || reference.empty()) {
    s.degenerate = true;
    return s;
  }
  const auto l = static_cast<double>(lcs_length(candidate, reference));
  s.precision = l / static_cast<double>(candidate.size());
  s.recall = l / static_cast<double>(reference.size());
  s.f1 = harmonic_f1(s.precision, s.recall);
  return s;
}

SampleRouge score_pair(std::string_view candidate, std::string_view reference) {
  const auto c = split_tokens(candidate);
  const auto r = split_tokens(reference);
  SampleRouge s;
  s.r1 = rouge_n(c, r, 1);
  s.r2 = rouge_n(c, r, 2);
  s.rl = rouge_l(c, r);
  s.candidate_length = c.size();
  s.reference_length = r.size();
  return s;
}

RougeReport evaluate_corpus(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  if (hyps.size() != refs.size()) {
    throw FormatError("rouge: " + std::to_string(hyps.size()) + " hypothesis lines vs " +
                      std::to_string(refs.size()) + " reference lines");
  }
  RougeReport report;
  auto bump = [](std::vector<std::size_t>& hist, std::size_t k) {
    if (hist.size() <= k) hist.resize(k + 1, 0);
    ++hist[k];
  };
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    report.samples.push_back(score_pair(hyps[i], refs[i]));
    bump(report.candidate_length_histogram, report.samples.back().candidate_length);
    bump(report.reference_length_histogram, report.samples.back().reference_length);
  }
  if (report.samples.empty()) return report;
  const auto n = static_cast<double>(report.samples.size());
  auto mean_of = [&](auto field) {
    RougeScore m;
    for (const auto& s : report.samples) {
      const RougeScore& x = field(s);
      m.precision += x.precision;
      m.recall += x.recall;
      m.f1 += x.f1;
    }
    m.precision /= n;
    m.recall /= n;
    m.f1 /= n;
    return m;
  };
  report.mean.r1 = mean_of([](const SampleRouge& s) -> const RougeScore& { return s.r1; });
  report.mean.r2 = mean_of([](const SampleRouge& s) -> const RougeScore& { return s.r2; });
  report.mean.rl = mean_of([](const SampleRouge& s) -> const RougeScore& { return s.rl; });
  double cl = 0, rl = 0;
  for (const auto& s : report.samples) {
    cl += static_cast<double>(s.candidate_length);
    rl += static_cast<double>(s.reference_length);
  }
  report.mean_candidate_length = cl / n;
  report.mean_reference_length = rl / n;
  report.mean.candidate_length = static_cast<std::size_t>(report.mean_candidate_length + 0.5);
  report.mean.reference_length = static_cast<std::size_t>(report.mean_reference_length + 0.5);
  return report;
}

RougeReport evaluate_corpus_files(const std::string& hyp_path, const std::string& ref_path) {
  return evaluate_corpus(split_lines(read_text(hyp_path)), split_lines(read_text(ref_path)));
}

std::string RougeReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["count"] = samples.size();
  doc["mean"] = {{"rouge_1", score_json(mean.r1)},
                 {"rouge_2", score_json(mean.r2)},
                 {"rouge_l", score_json(mean.rl)},
                 {"candidate_length", mean_candidate_length},
                 {"reference_length", mean_reference_length}};
  doc["length_histogram"] = {{"candidate", candidate_length_histogram}, {"reference", reference_length_histogram}};
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (const auto& s : samples) per.push_back(sample_json(s));
  doc["samples"] = std::move(per);
  return doc.dump(2);
}

}  // namespace fmtlm
