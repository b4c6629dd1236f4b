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

#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "fmtlm/feature_file.hpp"
#include "fmtlm/fusion.hpp"
#include "fmtlm/mfcc.hpp"
#include "support.hpp"

namespace fmtlm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code;
  std::string out;
  std::string err;
  json doc() const { return json::parse(out); }
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "fmtlm");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Cli, HelpForEveryCommand) {
  const Outcome top = invoke({"--help"});
  EXPECT_EQ(top.code, cli::kExitOk);
  for (const char* cmd : {"synth", "train", "summarize", "rouge", "mfcc", "fuse", "gradcheck"}) {
    EXPECT_NE(top.out.find(cmd), std::string::npos) << cmd;
    const Outcome sub = invoke({cmd, "--help"});
    EXPECT_EQ(sub.code, cli::kExitOk) << cmd;
    EXPECT_NE(sub.out.find("--"), std::string::npos) << cmd;
  }
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(invoke({}).code, cli::kExitContract);
  EXPECT_EQ(invoke({"frobnicate"}).code, cli::kExitContract);
  EXPECT_EQ(invoke({"synth"}).code, cli::kExitContract);
  EXPECT_EQ(invoke({"synth", "--out", "x", "--bogus"}).code, cli::kExitContract);
  EXPECT_EQ(invoke({"gradcheck", "--profile", "toy", "--config", "c.json"}).code, cli::kExitContract);
  EXPECT_EQ(invoke({"gradcheck", "--profile", "nonexistent"}).code, cli::kExitContract);
  EXPECT_EQ(invoke({"gradcheck", "--config", "/nonexistent/config.json"}).code, cli::kExitIo);
}

TEST(Cli, SynthZeroSamplesWritesEmptyManifest) {
  testing::TempDir dir;
  const Outcome o = invoke({"synth", "--out", (dir / "d").string(), "--samples", "0"});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  EXPECT_EQ(json::parse(slurp(dir / "d/manifest.json")), json::array());
  EXPECT_EQ(o.doc()["samples"], 0);
}

TEST(Cli, SynthIsDeterministic) {
  testing::TempDir dir;
  ASSERT_EQ(invoke({"synth", "--out", (dir / "a").string(), "--samples", "3"}).code, 0);
  ASSERT_EQ(invoke({"synth", "--out", (dir / "b").string(), "--samples", "3"}).code, 0);
  ASSERT_EQ(invoke({"synth", "--out", (dir / "c").string(), "--samples", "3", "--seed", "8"}).code, 0);
  EXPECT_EQ(slurp(dir / "a/manifest.json"), slurp(dir / "b/manifest.json"));
  EXPECT_EQ(slurp(dir / "a/feat/syn0000.visual.flrt"), slurp(dir / "b/feat/syn0000.visual.flrt"));
  EXPECT_NE(slurp(dir / "a/feat/syn0000.visual.flrt"), slurp(dir / "c/feat/syn0000.visual.flrt"));
  EXPECT_EQ(invoke({"synth", "--out", (dir / "e").string(), "--redundancy", "1.5"}).code, cli::kExitContract);
}

TEST(Cli, RougeExitCodes) {
  testing::TempDir dir;
  std::ofstream(dir / "h.txt") << "the cat\n";
  std::ofstream(dir / "r.txt") << "the cat sat\n";
  std::ofstream(dir / "r2.txt") << "a\nb\n";
  const Outcome ok = invoke({"rouge", "--hyp", (dir / "h.txt").string(), "--ref", (dir / "r.txt").string()});
  ASSERT_EQ(ok.code, cli::kExitOk) << ok.err;
  EXPECT_DOUBLE_EQ(ok.doc()["mean"]["rouge_1"]["f1"].get<double>(), 0.8);
  EXPECT_EQ(invoke({"rouge", "--hyp", (dir / "h.txt").string(), "--ref", (dir / "r2.txt").string()}).code,
            cli::kExitContract);
  EXPECT_EQ(invoke({"rouge", "--hyp", (dir / "none.txt").string(), "--ref", (dir / "r.txt").string()}).code,
            cli::kExitIo);
}

TEST(Cli, MfccWritesFeatureFile) {
  testing::TempDir dir;
  std::vector<double> s(8000);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = 0.3 * std::sin(0.2 * static_cast<double>(i));
  write_wav(dir / "a.wav", s, 16000);
  const Outcome o = invoke({"mfcc", "--wav", (dir / "a.wav").string(), "--out", (dir / "a.flrt").string()});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  EXPECT_EQ(o.doc()["frames"], 48);
  EXPECT_EQ(read_feature_file(dir / "a.flrt").shape(), (Shape{48, 512}));
  EXPECT_EQ(invoke({"mfcc", "--wav", (dir / "a.wav").string(), "--out", (dir / "b.flrt").string(), "--sample-rate",
                    "22050", "--n-mels", "20"})
                .code,
            cli::kExitIo);
  EXPECT_EQ(invoke({"mfcc", "--wav", (dir / "a.wav").string(), "--out", (dir / "b.flrt").string(), "--out-width",
                    "10"})
                .code,
            cli::kExitContract);
}

TEST(Cli, FuseMatchesLibrary) {
  testing::TempDir dir;
  Rng rng(4);
  const Tensor asr = testing::random_matrix(3, 4, rng), ocr = testing::random_matrix(2, 4, rng);
  const Tensor wb = testing::random_matrix(4, 4, rng);
  write_feature_file(dir / "asr.flrt", asr);
  write_feature_file(dir / "ocr.flrt", ocr);
  write_feature_file(dir / "wb.flrt", wb);
  const Outcome o = invoke({"fuse", "--asr", (dir / "asr.flrt").string(), "--ocr", (dir / "ocr.flrt").string(),
                            "--wb", (dir / "wb.flrt").string(), "--out", (dir / "f.flrt").string()});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  // Stored features are float32, so compare against the rounded inputs.
  const FusionValues ref = fuse_values(read_feature_file(dir / "asr.flrt"), read_feature_file(dir / "ocr.flrt"),
                                       read_feature_file(dir / "wb.flrt"));
  const Tensor fused = read_feature_file(dir / "f.flrt");
  EXPECT_LT(max_abs_diff(fused, ref.fused), 1e-6);
  ASSERT_EQ(o.doc()["gates"].size(), 2u);
  EXPECT_NEAR(o.doc()["gates"][1].get<double>(), ref.gates(1, 0), 1e-12);

  const Outcome alone = invoke({"fuse", "--asr", (dir / "asr.flrt").string(), "--wb", (dir / "wb.flrt").string(),
                                "--out", (dir / "g.flrt").string()});
  ASSERT_EQ(alone.code, cli::kExitOk);
  EXPECT_EQ(read_feature_file(dir / "g.flrt").rows(), 3u);
  EXPECT_EQ(invoke({"fuse", "--asr", (dir / "asr.flrt").string(), "--ocr", (dir / "wb.flrt").string(), "--wb",
                    (dir / "ocr.flrt").string(), "--out", (dir / "h.flrt").string()})
                .code,
            cli::kExitContract);
}

TEST(Cli, GradcheckPasses) {
  const Outcome o = invoke({"gradcheck", "--params", "2", "--coords", "2", "--points", "2"});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err << o.out;
  EXPECT_TRUE(o.doc()["passed"].get<bool>());
  EXPECT_EQ(o.doc()["model"].size(), 2u);
}

TEST(Cli, TrainSummarizeRougePipeline) {
  testing::TempDir dir;
  const std::string data = (dir / "data").string(), run = (dir / "run").string();
  ASSERT_EQ(invoke({"synth", "--out", data, "--samples", "6"}).code, 0);
  EXPECT_EQ(invoke({"train", "--data", data, "--out", run, "--val-count", "6"}).code, cli::kExitContract);
  EXPECT_EQ(invoke({"train", "--out", run}).code, cli::kExitContract);

  const Outcome t = invoke({"train", "--data", data, "--out", run, "--steps", "2", "--eval-interval", "1",
                            "--val-count", "2", "--batch-size", "2"});
  ASSERT_EQ(t.code, cli::kExitOk) << t.err;
  EXPECT_EQ(t.doc()["last_step"], 2);
  EXPECT_EQ(t.doc()["train_samples"], 4);
  EXPECT_TRUE(t.doc()["best_val_loss"].is_number());

  const Outcome one = invoke({"summarize", "--ckpt", run, "--sample", "syn0004"});
  ASSERT_EQ(one.code, cli::kExitOk) << one.err;
  EXPECT_EQ(one.doc()["id"], "syn0004");
  EXPECT_LE(one.doc()["ids"].size(), 4u);

  const std::string hyp = (dir / "hyp.txt").string(), ref = (dir / "ref.txt").string();
  const Outcome all = invoke({"summarize", "--ckpt", run, "--data", data, "--all", "--hyp", hyp, "--ref", ref,
                              "--max-len", "2"});
  ASSERT_EQ(all.code, cli::kExitOk) << all.err;
  EXPECT_EQ(all.doc()["summaries"].size(), 6u);
  for (const auto& s : all.doc()["summaries"]) EXPECT_LE(s["ids"].size(), 2u);
  EXPECT_EQ(invoke({"rouge", "--hyp", hyp, "--ref", ref}).code, cli::kExitOk);

  EXPECT_EQ(invoke({"summarize", "--ckpt", run, "--sample", "syn0001", "--all"}).code, cli::kExitContract);
  EXPECT_EQ(invoke({"summarize", "--ckpt", run, "--sample", "syn0001", "--hyp", hyp}).code, cli::kExitContract);
  EXPECT_NE(invoke({"summarize", "--ckpt", run, "--sample", "nobody"}).code, cli::kExitOk);
  EXPECT_EQ(invoke({"summarize", "--ckpt", (dir / "missing").string(), "--all"}).code, cli::kExitIo);

  const Outcome resumed = invoke({"train", "--data", data, "--out", run, "--steps", "3", "--eval-interval", "1",
                                  "--val-count", "2", "--batch-size", "2", "--resume"});
  ASSERT_EQ(resumed.code, cli::kExitOk) << resumed.err;
  EXPECT_EQ(resumed.doc()["first_step"], 3);
}

}  // namespace
}  // namespace fmtlm
