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
#include <unordered_map>
#include <vector>

namespace fmtlm {

// Reserved ids. Never remapped by build_vocab or deserialisation.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kStopId = 2;
inline constexpr int kDelimId = 3;
inline constexpr int kUnkId = 4;
inline constexpr int kNumReserved = 5;

// Lowercased (ASCII) whitespace split.
std::vector<std::string> split_tokens(std::string_view text);

class Vocab {
 public:
  Vocab();  // reserved tokens only

  // Tokens with count ≥ min_frequency get ids in order of decreasing count,
  // ties broken lexicographically, so the table is a pure function of the
  // corpus.
  static Vocab build(const std::vector<std::string>& corpus, std::size_t min_frequency);

  static Vocab from_json(const std::string& json);
  std::string to_json() const;

  std::size_t size() const { return tokens_.size(); }
  int id(std::string_view token) const;  // <unk> when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;

  std::vector<int> tokenize(std::string_view text) const;
  std::string detokenize(const std::vector<int>& ids) const;

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace fmtlm
