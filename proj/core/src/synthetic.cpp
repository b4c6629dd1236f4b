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

#include "fmtlm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "fmtlm/errors.hpp"
#include "fmtlm/feature_file.hpp"
#include "fmtlm/rng.hpp"

namespace fmtlm {

namespace fs = std::filesystem;

namespace {

// Fixed prototype directions shared by every dataset, whatever its seed, so
// train and test splits describe the same task.
constexpr std::uint64_t kPrototypeSeed = 0x5e9e47a1;

std::vector<double> unit_direction(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double n = 0.0;
  for (double& x : v) {
    x = rng.normal();
    n += x * x;
  }
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

// Row with exact norm `level` pointing near `prototype`.
void fill_row(std::span<double> row, const std::vector<double>& prototype, double level, double noise, Rng& rng) {
  double n = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    row[j] = prototype[j] + noise * rng.normal() / std::sqrt(static_cast<double>(row.size()));
    n += row[j] * row[j];
  }
  n = std::sqrt(n);
  for (double& x : row) x = static_cast<double>(static_cast<float>(x * level / n));
}

std::string word(std::size_t level, std::size_t index) {
  return std::string(kLevelPrefixes[level]) + std::to_string(index);
}

std::size_t rows_for(std::size_t steps, double factor) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(steps) * factor));
}

double mean_row_norm(const Tensor& t, std::size_t begin, std::size_t end) {
  if (end <= begin) return 0.0;
  double total = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    double s = 0.0;
    for (double v : t.row_span(i)) s += v * v;
    total += std::sqrt(s);
  }
  return total / static_cast<double>(end - begin);
}

}  // namespace

void SyntheticProfile::validate() const {
  if (segments == 0 || length % segments != 0) throw ConfigError("synthetic: L must be a multiple of M");
  const std::size_t s = segment_length();
  if (segments < 2) throw ConfigError("synthetic: need at least two segments");
  for (double f : {visual_rate_factor, acoustic_rate_factor}) {
    const double rows = static_cast<double>(s) * f;
    if (rows < 1.0 || std::abs(rows - std::round(rows)) > 1e-9) {
      throw ConfigError("synthetic: rate factors must give a whole number of rows per segment");
    }
  }
  if (redundancy < 0 || redundancy >= 1) throw ConfigError("synthetic: redundancy must lie in [0, 1)");
  if (static_cast<std::size_t>(std::llround(redundancy * static_cast<double>(s))) >= s) {
    throw ConfigError("synthetic: redundancy leaves no novel OCR token");
  }
}

SyntheticProfile synthetic_profile(const std::string& name) {
  SyntheticProfile p;
  if (name == "toy") return p;
  if (name == "full") {
    p.length = 64;
    p.segments = 8;
    p.visual_dim = 2048;
    p.acoustic_dim = 512;
    return p;
  }
  throw ConfigError("unknown synthetic profile '" + name + "'");
}

double token_salience(const std::string& token) {
  for (std::size_t level = kLevelPrefixes.size(); level-- > 0;) {
    const std::string prefix = kLevelPrefixes[level];
    if (token.size() > prefix.size() && token.compare(0, prefix.size(), prefix) == 0 &&
        std::isdigit(static_cast<unsigned char>(token[prefix.size()]))) {
      return kLevelNorms[level];
    }
  }
  return 0.0;
}

std::vector<std::array<double, 3>> segment_norms(const SyntheticSample& sample, const SyntheticProfile& p) {
  const std::size_t s = p.segment_length();
  const std::size_t vs = rows_for(s, p.visual_rate_factor);
  const std::size_t as = rows_for(s, p.acoustic_rate_factor);
  const std::set<std::string> spoken(sample.asr.begin(), sample.asr.end());
  std::vector<std::array<double, 3>> out(p.segments);
  for (std::size_t t = 0; t < p.segments; ++t) {
    out[t][0] = mean_row_norm(sample.visual, std::min(t * vs, sample.visual.rows()),
                              std::min((t + 1) * vs, sample.visual.rows()));
    out[t][1] = mean_row_norm(sample.acoustic, std::min(t * as, sample.acoustic.rows()),
                              std::min((t + 1) * as, sample.acoustic.rows()));
    double total = 0.0;
    std::size_t count = 0;
    if (t + 1 < p.segments) {
      for (std::size_t i = t * s; i < std::min((t + 1) * s, sample.asr.size()); ++i) {
        total += token_salience(sample.asr[i]);
        ++count;
      }
    } else {
      // Redundant OCR tokens repeat the transcript and carry no new content.
      for (const auto& tok : sample.ocr) {
        if (spoken.count(tok)) continue;
        total += token_salience(tok);
        ++count;
      }
    }
    out[t][2] = count ? total / static_cast<double>(count) : 0.0;
  }
  return out;
}

std::vector<int> segment_targets(const SyntheticSample& sample, const SyntheticProfile& p) {
  std::vector<int> classes;
  for (const auto& norms : segment_norms(sample, p)) {
    classes.push_back(static_cast<int>(std::max_element(norms.begin(), norms.end()) - norms.begin()));
  }
  return classes;
}

std::vector<SyntheticSample> generate_synthetic(std::size_t n_samples, std::uint64_t seed,
                                                const SyntheticProfile& p) {
  p.validate();
  Rng proto_rng(kPrototypeSeed);
  const auto visual_proto = unit_direction(p.visual_dim, proto_rng);
  const auto acoustic_proto = unit_direction(p.acoustic_dim, proto_rng);

  Rng rng(seed);
  const std::size_t s = p.segment_length();
  const std::size_t vs = rows_for(s, p.visual_rate_factor);
  const std::size_t as = rows_for(s, p.acoustic_rate_factor);
  const auto n_redundant = static_cast<std::size_t>(std::llround(p.redundancy * static_cast<double>(s)));
  const int width = static_cast<int>(std::to_string(n_samples).size());

  std::vector<SyntheticSample> out;
  out.reserve(n_samples);
  for (std::size_t n = 0; n < n_samples; ++n) {
    SyntheticSample smp;
    std::ostringstream id;
    id << "syn" << std::setw(std::max(width, 4)) << std::setfill('0') << n;
    smp.id = id.str();
    smp.visual = Tensor::zeros(vs * p.segments, p.visual_dim);
    smp.acoustic = Tensor::zeros(as * p.segments, p.acoustic_dim);

    for (std::size_t t = 0; t < p.segments; ++t) {
      // Winner at level 1 or 2; the other modalities strictly below it.
      const int winner = static_cast<int>(rng.below(3));
      const std::size_t win_level = 1 + rng.below(2);
      std::array<std::size_t, 3> level{};
      for (int m = 0; m < 3; ++m) level[m] = m == winner ? win_level : rng.below(win_level);

      for (std::size_t r = 0; r < vs; ++r)
        fill_row(smp.visual.row_span(t * vs + r), visual_proto, kLevelNorms[level[0]], p.direction_noise, rng);
      for (std::size_t r = 0; r < as; ++r)
        fill_row(smp.acoustic.row_span(t * as + r), acoustic_proto, kLevelNorms[level[1]], p.direction_noise, rng);

      if (t + 1 < p.segments) {
        for (std::size_t i = 0; i < s; ++i) smp.asr.push_back(word(level[2], rng.below(kSpokenWordsPerLevel)));
      } else {
        std::vector<std::string> ocr;
        for (std::size_t i = 0; i < n_redundant; ++i) ocr.push_back(smp.asr[rng.below(smp.asr.size())]);
        for (std::size_t i = n_redundant; i < s; ++i) {
          ocr.push_back(word(level[2], kSpokenWordsPerLevel + rng.below(kWordsPerLevel - kSpokenWordsPerLevel)));
        }
        for (std::size_t i = ocr.size(); i > 1; --i) std::swap(ocr[i - 1], ocr[rng.below(i)]);
        smp.ocr = std::move(ocr);
      }
    }
    smp.classes = segment_targets(smp, p);
    for (std::size_t t = 0; t < smp.classes.size(); ++t) {
      if (t) smp.summary += ' ';
      smp.summary += kClassTokens[static_cast<std::size_t>(smp.classes[t])];
    }
    out.push_back(std::move(smp));
  }
  return out;
}

SampleData to_sample_data(const SyntheticSample& smp, const SyntheticProfile& p) {
  auto as_float = [](Tensor t) {
    for (double& v : t.values()) v = static_cast<double>(static_cast<float>(v));
    return t;
  };
  SampleData d;
  d.id = smp.id;
  d.visual = as_float(smp.visual);
  d.acoustic = as_float(smp.acoustic);
  d.asr = smp.asr;
  d.ocr = smp.ocr;
  d.summary = smp.summary;
  d.visual_rate = p.reference_rate * p.visual_rate_factor;
  d.acoustic_rate = p.reference_rate * p.acoustic_rate_factor;
  d.text_rate = p.reference_rate;
  return d;
}

void write_synthetic_dataset(const fs::path& dir, const std::vector<SyntheticSample>& samples,
                             const SyntheticProfile& p) {
  std::error_code ec;
  fs::create_directories(dir / "feat", ec);
  fs::create_directories(dir / "text", ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<SampleRecord> records;
  for (const auto& smp : samples) {
    SampleRecord r;
    r.id = smp.id;
    r.visual = "feat/" + smp.id + ".visual.flrt";
    r.acoustic = "feat/" + smp.id + ".acoustic.flrt";
    r.asr = "text/" + smp.id + ".asr.txt";
    r.ocr = "text/" + smp.id + ".ocr.txt";
    r.summary = smp.summary;
    r.visual_rate = p.reference_rate * p.visual_rate_factor;
    r.acoustic_rate = p.reference_rate * p.acoustic_rate_factor;
    r.text_rate = p.reference_rate;
    write_feature_file(dir / r.visual, smp.visual);
    write_feature_file(dir / r.acoustic, smp.acoustic);
    auto join = [](const std::vector<std::string>& toks) {
      std::string s;
      for (const auto& t : toks) {
        if (!s.empty()) s += ' ';
        s += t;
      }
      return s + "\n";
    };
    write_text(dir / r.asr, join(smp.asr));
    write_text(dir / *r.ocr, join(smp.ocr));
    records.push_back(std::move(r));
  }
  write_text(dir / "manifest.json", manifest_to_json(records));
}

}  // namespace fmtlm
