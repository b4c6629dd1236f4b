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

#include "cli.hpp"

#include <chrono>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "fmtlm/checkpoint.hpp"
#include "fmtlm/config.hpp"
#include "fmtlm/dataset.hpp"
#include "fmtlm/diagnostics.hpp"
#include "fmtlm/errors.hpp"
#include "fmtlm/feature_file.hpp"
#include "fmtlm/fusion.hpp"
#include "fmtlm/mfcc.hpp"
#include "fmtlm/rouge.hpp"
#include "fmtlm/summarizer.hpp"
#include "fmtlm/synthetic.hpp"

namespace fmtlm::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr double kGradTolerance = 1e-4;

// Routes spdlog output to the caller's error stream for the duration of one
// command and restores the previous default logger afterwards.
class LogScope {
 public:
  LogScope(std::ostream& err, const std::string& level) : previous_(spdlog::default_logger()) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, /*force_flush=*/true);
    sink->set_pattern("[%H:%M:%S] [%l] %v");
    auto logger = std::make_shared<spdlog::logger>("fmtlm-cli", sink);
    logger->set_level(spdlog::level::from_str(level));
    spdlog::set_default_logger(logger);
  }
  ~LogScope() { spdlog::set_default_logger(previous_); }
  LogScope(const LogScope&) = delete;
  LogScope& operator=(const LogScope&) = delete;

 private:
  std::shared_ptr<spdlog::logger> previous_;
};

void emit(std::ostream& out, const json& doc) { out << doc.dump(2) << '\n'; }

// Shared config flags: a JSON file or a named profile, then overrides.
struct ConfigFlags {
  std::string file;
  std::optional<std::string> profile;
  std::optional<std::string> data;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::size_t> warmup;
  std::optional<double> dropout;
  std::optional<std::size_t> eval_interval;
  std::optional<std::size_t> val_count;
  bool no_gating = false;

  void add_to(CLI::App& app, bool training) {
    app.add_option("--config", file, "JSON run configuration");
    app.add_option("--profile", profile, "Base profile when no --config is given (toy|full)");
    app.add_option("--seed", seed, "Override the run seed");
    if (!training) return;
    app.add_option("--data", data, "Dataset directory containing manifest.json");
    app.add_option("--out", out, "Checkpoint / run directory");
    app.add_option("--steps", steps, "Override train.total_steps");
    app.add_option("--batch-size", batch_size, "Override train.batch_size");
    app.add_option("--lr", lr, "Override train.peak_lr");
    app.add_option("--warmup", warmup, "Override train.warmup_steps");
    app.add_option("--dropout", dropout, "Override train.dropout");
    app.add_option("--eval-interval", eval_interval, "Override train.eval_interval");
    app.add_option("--val-count", val_count, "Override train.val_count");
    app.add_flag("--no-gating", no_gating, "Force every fusion gate to 1");
  }

  RunConfig resolve() const {
    if (!file.empty() && profile) throw ConfigError("give either --config or --profile, not both");
    RunConfig cfg = file.empty() ? profile_config(profile.value_or("toy")) : parse_config_text(read_text(file));
    nlohmann::json patch = nlohmann::json::object();
    if (data) patch["data"] = *data;
    if (out) patch["out"] = *out;
    if (seed) patch["seed"] = *seed;
    if (steps) patch["train"]["total_steps"] = *steps;
    if (batch_size) patch["train"]["batch_size"] = *batch_size;
    if (lr) patch["train"]["peak_lr"] = *lr;
    if (warmup) patch["train"]["warmup_steps"] = *warmup;
    if (dropout) patch["train"]["dropout"] = *dropout;
    if (eval_interval) patch["train"]["eval_interval"] = *eval_interval;
    if (val_count) patch["train"]["val_count"] = *val_count;
    if (no_gating) patch["model"]["guided_gating"] = false;
    merge_config(cfg, patch);
    cfg.validate();
    return cfg;
  }
};

json config_json(const RunConfig& cfg) { return json::parse(config_to_json(cfg).dump()); }

// ---------------------------------------------------------------------------

struct SynthFlags {
  std::string out;
  std::size_t samples = 64;
  std::uint64_t seed = 7;
  std::string profile = "toy";
  std::optional<double> redundancy;
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  SyntheticProfile profile = synthetic_profile(f.profile);
  if (f.redundancy) profile.redundancy = *f.redundancy;
  const auto samples = generate_synthetic(f.samples, f.seed, profile);
  write_synthetic_dataset(f.out, samples, profile);
  spdlog::info("wrote {} samples to {}", samples.size(), f.out);
  emit(out, {{"command", "synth"},
             {"out", f.out},
             {"samples", samples.size()},
             {"seed", f.seed},
             {"profile", f.profile},
             {"redundancy", profile.redundancy}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainFlags {
  ConfigFlags config;
  bool resume = false;
  bool text_only = false;
  std::optional<std::size_t> stop_after;
};

int cmd_train(const TrainFlags& f, std::ostream& out) {
  const RunConfig cfg = f.config.resolve();
  if (cfg.data.empty()) throw ConfigError("train: no dataset (set --data or config.data)");
  if (cfg.out.empty()) throw ConfigError("train: no output directory (set --out or config.out)");
  spdlog::info("effective config: {}", config_to_json(cfg).dump());

  const Manifest manifest = load_manifest(cfg.data);
  const Vocab vocab = build_manifest_vocab(manifest, cfg);
  std::vector<PreparedSample> all = prepare_manifest(manifest, vocab, cfg);
  if (f.text_only)
    for (auto& s : all) s = text_only(std::move(s));
  if (cfg.train.val_count >= all.size()) {
    throw ConfigError("train: val_count " + std::to_string(cfg.train.val_count) + " leaves no training samples (" +
                      std::to_string(all.size()) + " in the manifest)");
  }
  const auto split = static_cast<std::ptrdiff_t>(all.size() - cfg.train.val_count);
  const std::vector<PreparedSample> train_set(all.begin(), all.begin() + split);
  const std::vector<PreparedSample> val_set(all.begin() + split, all.end());

  FmtModel model = FmtModel::from_seed(cfg, vocab.size(), cfg.seed);
  spdlog::info("{} training / {} validation samples, vocabulary {}, {} parameters", train_set.size(),
               val_set.size(), vocab.size(), model.parameter_count());
  TrainOptions options;
  options.out_dir = cfg.out;
  options.resume = f.resume;
  options.stop_after = f.stop_after;
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(model, vocab, train_set, val_set, options);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json doc{{"command", "train"},
           {"config", config_json(cfg)},
           {"checkpoint", cfg.out},
           {"vocab_size", vocab.size()},
           {"parameter_count", model.parameter_count()},
           {"train_samples", train_set.size()},
           {"val_samples", val_set.size()},
           {"first_step", r.first_step},
           {"last_step", r.last_step},
           {"best_step", r.best_step},
           {"seconds", seconds}};
  doc["best_val_loss"] = val_set.empty() ? json(nullptr) : json(r.best_val_loss);
  doc["final_train_loss"] = r.step_losses.empty() ? json(nullptr) : json(r.step_losses.back());
  emit(out, doc);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SummarizeFlags {
  std::string ckpt;
  std::string data;
  std::string sample;
  bool all = false;
  std::optional<std::size_t> max_len;
  std::string hyp;
  std::string ref;
  bool text_only = false;
};

int cmd_summarize(const SummarizeFlags& f, std::ostream& out) {
  if (f.all == !f.sample.empty()) throw ConfigError("summarize: give exactly one of --sample ID or --all");
  if (!f.all && (!f.hyp.empty() || !f.ref.empty())) throw ConfigError("summarize: --hyp/--ref require --all");
  const LoadedCheckpoint ck = load_checkpoint(f.ckpt);
  const RunConfig& cfg = ck.config;
  const std::string data = f.data.empty() ? cfg.data : f.data;
  if (data.empty()) throw ConfigError("summarize: no dataset (set --data)");
  const Manifest manifest = load_manifest(data);
  const std::size_t max_len = f.max_len.value_or(cfg.sequence.max_target);

  std::vector<const SampleRecord*> records;
  if (f.all) {
    for (const auto& r : manifest.samples) records.push_back(&r);
  } else {
    records.push_back(&manifest.find(f.sample));
  }
  json results = json::array();
  std::string hyp_text, ref_text;
  for (const SampleRecord* rec : records) {
    PreparedSample s = prepare_sample(load_sample(manifest, *rec, cfg.sequence.reference_rate), ck.vocab, cfg);
    if (f.text_only) s = text_only(std::move(s));
    const std::vector<int> ids = generate(ck.model, s.source, max_len);
    const std::string summary = ck.vocab.detokenize(ids);
    json tokens = json::array();
    for (int id : ids) tokens.push_back(ck.vocab.token(id));
    results.push_back({{"id", rec->id}, {"summary", summary}, {"tokens", tokens}, {"ids", ids},
                       {"reference", rec->summary}});
    hyp_text += summary + "\n";
    ref_text += rec->summary + "\n";
  }
  if (!f.hyp.empty()) write_text(f.hyp, hyp_text);
  if (!f.ref.empty()) write_text(f.ref, ref_text);

  json doc{{"command", "summarize"}, {"config", config_json(cfg)}, {"checkpoint", f.ckpt}, {"max_len", max_len}};
  if (f.all) {
    doc["summaries"] = results;
  } else {
    for (auto& [k, v] : results[0].items()) doc[k] = v;
  }
  emit(out, doc);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct RougeFlags {
  std::string hyp;
  std::string ref;
};

int cmd_rouge(const RougeFlags& f, std::ostream& out, std::ostream& err) {
  // Unreadable files are I/O failures; misaligned files are a usage error.
  read_text(f.hyp);
  read_text(f.ref);
  RougeReport report;
  try {
    report = evaluate_corpus_files(f.hyp, f.ref);
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitContract;
  }
  out << report.to_json() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct MfccFlags {
  std::string wav;
  std::string out;
  MfccConfig config;
  bool no_deltas = false;
};

int cmd_mfcc(MfccFlags f, std::ostream& out) {
  if (f.no_deltas) f.config.delta = f.config.delta_delta = false;
  f.config.validate();
  const auto signal = read_wav(f.wav, f.config.sample_rate);
  const AcousticFeatures feats = mfcc(signal, f.config);
  write_feature_file(f.out, feats.frames);
  emit(out, {{"command", "mfcc"},
             {"wav", f.wav},
             {"out", f.out},
             {"samples", signal.size()},
             {"frames", feats.frames.rows()},
             {"width", feats.frames.cols()},
             {"frame_times", feats.frame_times}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct FuseFlags {
  std::string asr;
  std::string ocr;
  std::string wb;
  std::string out;
  std::size_t ocr_cap = kDefaultOcrCap;
  bool no_gating = false;
};

int cmd_fuse(const FuseFlags& f, std::ostream& out) {
  const Tensor asr = read_feature_file(f.asr);
  Tensor ocr = f.ocr.empty() ? Tensor::zeros(0, asr.cols()) : read_feature_file(f.ocr);
  const Tensor wb = read_feature_file(f.wb);
  if (ocr.rows() > f.ocr_cap) {
    Tensor capped = Tensor::zeros(f.ocr_cap, ocr.cols());
    for (std::size_t i = 0; i < f.ocr_cap; ++i)
      for (std::size_t j = 0; j < ocr.cols(); ++j) capped(i, j) = ocr(i, j);
    spdlog::warn("OCR stream of {} tokens capped at {}", ocr.rows(), f.ocr_cap);
    ocr = std::move(capped);
  }
  const FusionValues r = fuse_values(asr, ocr, wb, f.no_gating ? GateMode::kOpen : GateMode::kGuided);
  write_feature_file(f.out, r.fused);
  std::vector<double> gates(r.gates.values().begin(), r.gates.values().end());
  emit(out, {{"command", "fuse"},
             {"out", f.out},
             {"asr_rows", asr.rows()},
             {"ocr_rows", ocr.rows()},
             {"dim", asr.cols()},
             {"fused_rows", r.fused.rows()},
             {"gates", gates}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GradcheckFlags {
  ConfigFlags config;
  std::size_t params = 5;
  std::size_t coords = 4;
  std::size_t points = 10;
  double h = 1e-5;
  bool skip_primitives = false;
};

int cmd_gradcheck(const GradcheckFlags& f, std::ostream& out) {
  const RunConfig cfg = f.config.resolve();
  double worst = 0.0;
  json prims = json::array();
  if (!f.skip_primitives) {
    for (const auto& e : check_primitives(cfg.seed, f.points, f.h)) {
      prims.push_back({{"name", e.name}, {"max_rel_error", e.max_rel_error}});
      worst = std::max(worst, e.max_rel_error);
    }
  }
  json model = json::array();
  for (const auto& e : check_model(cfg, cfg.seed, f.params, f.coords, f.h)) {
    model.push_back({{"name", e.name}, {"max_rel_error", e.max_rel_error}});
    worst = std::max(worst, e.max_rel_error);
  }
  const bool passed = worst < kGradTolerance;
  emit(out, {{"command", "gradcheck"},
             {"config", config_json(cfg)},
             {"h", f.h},
             {"tolerance", kGradTolerance},
             {"primitives", prims},
             {"model", model},
             {"max_rel_error", worst},
             {"passed", passed}});
  return passed ? kExitOk : kExitNumeric;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal summarization with guided fusion and a factorized multimodal transformer", "fmtlm"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--samples", synth.samples, "Number of samples")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--profile", synth.profile, "toy|full")->capture_default_str();
  synth_cmd->add_option("--redundancy", synth.redundancy, "Fraction of OCR tokens copied from the ASR");

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a model and keep the best-validation checkpoint");
  train_flags.config.add_to(*train_cmd, true);
  train_cmd->add_flag("--resume", train_flags.resume, "Continue from <out>/resume");
  train_cmd->add_flag("--text-only", train_flags.text_only, "Zero the visual and acoustic streams");
  train_cmd->add_option("--stop-after", train_flags.stop_after, "Halt after this step, keeping resume state");

  SummarizeFlags summ;
  auto* summ_cmd = app.add_subcommand("summarize", "Greedy summary generation from a checkpoint");
  summ_cmd->add_option("--ckpt", summ.ckpt, "Checkpoint directory")->required();
  summ_cmd->add_option("--data", summ.data, "Dataset directory (default: the checkpoint's config.data)");
  summ_cmd->add_option("--sample", summ.sample, "Sample id");
  summ_cmd->add_flag("--all", summ.all, "Summarize every sample in the manifest");
  summ_cmd->add_option("--max-len", summ.max_len, "Maximum summary length (default M_max)");
  summ_cmd->add_option("--hyp", summ.hyp, "With --all: write summaries here, one per line");
  summ_cmd->add_option("--ref", summ.ref, "With --all: write references here, one per line");
  summ_cmd->add_flag("--text-only", summ.text_only, "Zero the visual and acoustic streams");

  RougeFlags rouge;
  auto* rouge_cmd = app.add_subcommand("rouge", "ROUGE-1/2/L of line-aligned hypothesis and reference files");
  rouge_cmd->add_option("--hyp", rouge.hyp, "Hypothesis file")->required();
  rouge_cmd->add_option("--ref", rouge.ref, "Reference file")->required();

  MfccFlags mf;
  auto* mfcc_cmd = app.add_subcommand("mfcc", "MFCC features of a 16-bit PCM mono WAV file");
  mfcc_cmd->add_option("--wav", mf.wav, "Input WAV")->required();
  mfcc_cmd->add_option("--out", mf.out, "Output feature file")->required();
  mfcc_cmd->add_option("--sample-rate", mf.config.sample_rate, "Expected sample rate (Hz)")->capture_default_str();
  mfcc_cmd->add_option("--n-mels", mf.config.n_mels, "Mel filters")->capture_default_str();
  mfcc_cmd->add_option("--n-ceps", mf.config.n_ceps, "Cepstral coefficients kept")->capture_default_str();
  mfcc_cmd->add_option("--out-width", mf.config.out_width, "Zero-padded frame width")->capture_default_str();
  mfcc_cmd->add_flag("--no-deltas", mf.no_deltas, "Omit the delta and delta-delta coefficients");

  FuseFlags fu;
  auto* fuse_cmd = app.add_subcommand("fuse", "Guided-attention fusion of ASR and OCR embedding files");
  fuse_cmd->add_option("--asr", fu.asr, "ASR embeddings (n×d feature file)")->required();
  fuse_cmd->add_option("--ocr", fu.ocr, "OCR embeddings (m×d feature file); omit for m = 0");
  fuse_cmd->add_option("--wb", fu.wb, "Correlation matrix (d×d feature file)")->required();
  fuse_cmd->add_option("--out", fu.out, "Fused stream output")->required();
  fuse_cmd->add_option("--ocr-cap", fu.ocr_cap, "Keep at most this many OCR rows")->capture_default_str();
  fuse_cmd->add_flag("--no-gating", fu.no_gating, "Force every gate to 1");

  GradcheckFlags gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the primitives and the full model");
  gc.config.add_to(*gc_cmd, false);
  gc_cmd->add_option("--params", gc.params, "Model parameters to sample")->capture_default_str();
  gc_cmd->add_option("--coords", gc.coords, "Entries checked per parameter")->capture_default_str();
  gc_cmd->add_option("--points", gc.points, "Random points per primitive")->capture_default_str();
  gc_cmd->add_option("--step", gc.h, "Central-difference step")->capture_default_str();
  gc_cmd->add_flag("--skip-primitives", gc.skip_primitives, "Only check the model");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitContract;
  }

  LogScope logs(err, log_level);
  try {
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*train_cmd) return cmd_train(train_flags, out);
    if (*summ_cmd) return cmd_summarize(summ, out);
    if (*rouge_cmd) return cmd_rouge(rouge, out, err);
    if (*mfcc_cmd) return cmd_mfcc(mf, out);
    if (*fuse_cmd) return cmd_fuse(fu, out);
    if (*gc_cmd) return cmd_gradcheck(gc, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitContract;
  }
  return kExitContract;
}

}  // namespace fmtlm::cli
