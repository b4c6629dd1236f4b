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

#include <gtest/gtest.h>

#include "fmtlm/errors.hpp"
#include "fmtlm/vocab.hpp"

namespace fmtlm {
namespace {

TEST(Vocab, MinFrequencyThreshold) {
  const Vocab v = Vocab::build({"a a b"}, 2);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
  EXPECT_EQ(v.size(), static_cast<std::size_t>(kNumReserved) + 1);
  EXPECT_EQ(v.tokenize("a b"), (std::vector<int>{v.id("a"), kUnkId}));
}

TEST(Vocab, EmptyTextTokenizesToNothing) {
  const Vocab v = Vocab::build({"x"}, 1);
  EXPECT_TRUE(v.tokenize("").empty());
  EXPECT_TRUE(v.tokenize("  \n\t ").empty());
}

TEST(Vocab, EmptyCorpusIsRejected) { EXPECT_THROW(Vocab::build({}, 1), ContractError); }

TEST(Vocab, ReservedTokensSurviveSerialisation) {
  const Vocab v = Vocab::build({"the cat sat on the mat", "The Cat"}, 1);
  const Vocab back = Vocab::from_json(v.to_json());
  EXPECT_EQ(back, v);
  EXPECT_EQ(back.to_json(), v.to_json());
  EXPECT_EQ(back.id("<pad>"), kPadId);
  EXPECT_EQ(back.id("<bos>"), kBosId);
  EXPECT_EQ(back.id("<stop>"), kStopId);
  EXPECT_EQ(back.id("<delim>"), kDelimId);
  EXPECT_EQ(back.id("<unk>"), kUnkId);
}

TEST(Vocab, IdsAreDenseAndOrderedByCountThenToken) {
  const Vocab v = Vocab::build({"b a c a b a"}, 1);
  EXPECT_EQ(v.id("a"), kNumReserved);
  EXPECT_EQ(v.id("b"), kNumReserved + 1);
  EXPECT_EQ(v.id("c"), kNumReserved + 2);
  for (int i = 0; i < static_cast<int>(v.size()); ++i) EXPECT_EQ(v.id(v.token(i)), i);
}

TEST(Vocab, LowercasesAndSplitsOnWhitespace) {
  EXPECT_EQ(split_tokens("  Hello\tWORLD\nfoo  "), (std::vector<std::string>{"hello", "world", "foo"}));
  const Vocab v = Vocab::build({"hello world"}, 1);
  EXPECT_EQ(v.detokenize(v.tokenize("HELLO World")), "hello world");
}

TEST(Vocab, MalformedJsonIsFormatError) {
  EXPECT_THROW(Vocab::from_json("not json"), FormatError);
  EXPECT_THROW(Vocab::from_json(R"({"<pad>": 1, "<bos>": 0})"), FormatError);
}

}  // namespace
}  // namespace fmtlm
