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

#include "fmtlm/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <nlohmann/json.hpp>

#include "fmtlm/errors.hpp"
#include "fmtlm/feature_file.hpp"

namespace fmtlm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kStateMagic[4] = {'F', 'L', 'S', 'T'};
constexpr std::uint32_t kStateVersion = 1;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> bytes;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& b, std::string origin) : bytes_(b), origin_(std::move(origin)) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError(origin_ + ": truncated training state");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const fs::path& dir, const FmtModel& model, const Vocab& vocab) {
  ensure_dir(dir / "params");
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const auto& p : model.params().all()) {
    const std::string file = "params/" + p.name + ".flrt";
    write_feature_file(dir / file, p.value);
    params[p.name] = {{"file", file}, {"shape", p.value.shape()}};
  }
  nlohmann::ordered_json index;
  index["format"] = "fmtlm-checkpoint";
  index["version"] = 1;
  index["config"] = config_to_json(model.config());
  index["vocab_size"] = model.vocab_size();
  index["parameter_count"] = model.parameter_count();
  index["params"] = std::move(params);
  write_text(dir / "index.json", index.dump(1) + "\n");
  write_text(dir / "vocab.json", vocab.to_json() + "\n");
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  json index;
  try {
    index = json::parse(read_text(dir / "index.json"));
  } catch (const json::exception& e) {
    throw FormatError((dir / "index.json").string() + ": " + e.what());
  }
  if (index.value("format", "") != "fmtlm-checkpoint") {
    throw FormatError(dir.string() + ": not an fmtlm checkpoint");
  }
  RunConfig config = parse_config(index.at("config"));
  Vocab vocab = Vocab::from_json(read_text(dir / "vocab.json"));
  const auto vocab_size = index.at("vocab_size").get<std::size_t>();
  if (vocab_size != vocab.size()) {
    throw FormatError(dir.string() + ": vocab.json has " + std::to_string(vocab.size()) + " tokens, index says " +
                      std::to_string(vocab_size));
  }
  FmtModel model = FmtModel::from_seed(config, vocab_size, config.seed);
  const json& params = index.at("params");
  if (params.size() != model.params().all().size()) {
    throw FormatError(dir.string() + ": checkpoint lists " + std::to_string(params.size()) +
                      " parameters, model has " + std::to_string(model.params().all().size()));
  }
  for (auto& p : model.params().all()) {
    if (!params.contains(p.name)) throw FormatError(dir.string() + ": missing parameter " + p.name);
    const json& entry = params[p.name];
    const auto shape = entry.at("shape").get<Shape>();
    Tensor value = read_feature_file(dir / entry.at("file").get<std::string>());
    if (shape != p.value.shape() || value.shape() != p.value.shape()) {
      throw FormatError(dir.string() + ": parameter " + p.name + " has shape " + shape_string(value.shape()) +
                        ", model expects " + shape_string(p.value.shape()));
    }
    p.value = std::move(value);
  }
  return LoadedCheckpoint{std::move(config), std::move(vocab), std::move(model)};
}

void save_train_state(const fs::path& dir, const FmtModel& model, const Adam& adam, const TrainState& state) {
  ensure_dir(dir);
  ByteWriter w;
  w.bytes.insert(w.bytes.end(), std::begin(kStateMagic), std::end(kStateMagic));
  w.u32(kStateVersion);
  w.u64(state.step);
  w.f64(state.best_val_loss);
  w.u64(state.best_step);
  w.f64(state.interval_loss_sum);
  w.u64(state.interval_steps);
  w.u64(adam.steps());
  const auto& params = model.params().all();
  w.u64(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Parameter& p = params[k];
    w.str(p.name);
    w.u64(p.value.size());
    for (double v : p.value.values()) w.f64(v);
    for (double v : adam.first_moments()[k].values()) w.f64(v);
    for (double v : adam.second_moments()[k].values()) w.f64(v);
  }
  write_bytes(dir / "state.bin", w.bytes);
}

TrainState load_train_state(const fs::path& dir, FmtModel& model, Adam& adam) {
  const auto bytes = read_bytes(dir / "state.bin");
  const std::string origin = (dir / "state.bin").string();
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kStateMagic, 4) != 0) {
    throw FormatError(origin + ": bad magic (expected FLST)");
  }
  std::vector<std::uint8_t> body(bytes.begin() + 4, bytes.end());
  ByteReader r(body, origin);
  if (r.u32() != kStateVersion) throw FormatError(origin + ": unsupported version");
  TrainState s;
  s.step = r.u64();
  s.best_val_loss = r.f64();
  s.best_step = r.u64();
  s.interval_loss_sum = r.f64();
  s.interval_steps = r.u64();
  adam.set_steps(r.u64());
  auto& params = model.params().all();
  if (r.u64() != params.size()) throw FormatError(origin + ": parameter count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params[k];
    if (r.str() != p.name) throw FormatError(origin + ": parameter order mismatch at " + p.name);
    if (r.u64() != p.value.size()) throw FormatError(origin + ": size mismatch for " + p.name);
    for (double& v : p.value.values()) v = r.f64();
    for (double& v : adam.first_moments()[k].values()) v = r.f64();
    for (double& v : adam.second_moments()[k].values()) v = r.f64();
  }
  if (!r.done()) throw FormatError(origin + ": trailing bytes");
  return s;
}

}  // namespace fmtlm
