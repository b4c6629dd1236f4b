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

#include "fmtlm/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include <nlohmann/json.hpp>

#include "fmtlm/errors.hpp"

namespace fmtlm {
namespace {

constexpr const char* kReserved[kNumReserved] = {"<pad>", "<bos>", "<stop>", "<delim>", "<unk>"};

}  // namespace

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocab::Vocab() {
  for (const char* t : kReserved) add(t);
}

void Vocab::add(const std::string& token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::string>& corpus, std::size_t min_frequency) {
  if (corpus.empty()) throw ContractError("build_vocab: corpus is empty");
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus)
    for (auto& tok : split_tokens(text)) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [tok, n] : ranked) {
    if (n < min_frequency || v.contains(tok)) continue;
    v.add(tok);
  }
  return v;
}

Vocab Vocab::from_json(const std::string& json) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("vocab: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("vocab: expected a JSON object token → id");
  std::vector<std::string> tokens(doc.size());
  for (const auto& [tok, id] : doc.items()) {
    if (!id.is_number_integer()) throw FormatError("vocab: id of '" + tok + "' is not an integer");
    const auto i = id.get<long long>();
    if (i < 0 || static_cast<std::size_t>(i) >= tokens.size() || !tokens[static_cast<std::size_t>(i)].empty()) {
      throw FormatError("vocab: ids must be dense and unique (bad id for '" + tok + "')");
    }
    tokens[static_cast<std::size_t>(i)] = tok;
  }
  for (int i = 0; i < kNumReserved; ++i) {
    if (tokens.size() <= static_cast<std::size_t>(i) || tokens[static_cast<std::size_t>(i)] != kReserved[i]) {
      throw FormatError(std::string("vocab: reserved id ") + std::to_string(i) + " must be " + kReserved[i]);
    }
  }
  Vocab v;
  for (std::size_t i = kNumReserved; i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

std::string Vocab::to_json() const {
  // Serialised in id order so the file is stable and diffable.
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) doc[tokens_[i]] = i;
  return doc.dump(1);
}

int Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocab::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("vocab: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::tokenize(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& tok : split_tokens(text)) ids.push_back(id(tok));
  return ids;
}

std::string Vocab::detokenize(const std::vector<int>& ids) const {
  std::string out;
  for (int i : ids) {
    if (!out.empty()) out.push_back(' ');
    out += token(i);
  }
  return out;
}

}  // namespace fmtlm
