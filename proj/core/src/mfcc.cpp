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

#include "fmtlm/mfcc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "fmtlm/errors.hpp"
#include "fmtlm/feature_file.hpp"

namespace fmtlm {

std::size_t MfccConfig::win_length() const {
  return static_cast<std::size_t>(std::llround(sample_rate * win_ms / 1000.0));
}

std::size_t MfccConfig::hop_length() const {
  return static_cast<std::size_t>(std::llround(sample_rate * hop_ms / 1000.0));
}

std::size_t MfccConfig::fft_size() const {
  std::size_t n = 1;
  while (n < win_length()) n <<= 1;
  return n;
}

void MfccConfig::validate() const {
  if (!(sample_rate > 0)) throw ConfigError("mfcc: sample_rate must be positive");
  if (!(win_ms > hop_ms) || !(hop_ms > 0)) throw ConfigError("mfcc: need win_ms > hop_ms > 0");
  if (n_mels == 0 || n_ceps == 0 || n_ceps > n_mels) throw ConfigError("mfcc: need 0 < n_ceps ≤ n_mels");
  if (out_width < feature_count()) throw ConfigError("mfcc: out_width smaller than the feature count");
  if (!(f_max > f_min) || f_max > sample_rate / 2) throw ConfigError("mfcc: bad frequency range");
  if (!(log_floor > 0)) throw ConfigError("mfcc: log_floor must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t frame_count(std::size_t n, const MfccConfig& c) {
  const std::size_t win = c.win_length();
  return n < win ? 0 : (n - win) / c.hop_length() + 1;
}

Tensor frame_and_window(std::span<const double> signal, const MfccConfig& c) {
  c.validate();
  const std::size_t win = c.win_length();
  const std::size_t hop = c.hop_length();
  if (signal.size() < win) {
    throw InputError("mfcc: signal has " + std::to_string(signal.size()) + " samples; at least " +
                     std::to_string(win) + " are needed for one window");
  }
  const std::size_t n = frame_count(signal.size(), c);
  Tensor frames = Tensor::zeros(n, win);
  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i) {
    window[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win - 1));
  }
  for (std::size_t f = 0; f < n; ++f)
    for (std::size_t i = 0; i < win; ++i) frames(f, i) = signal[f * hop + i] * window[i];
  return frames;
}

void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ContractError("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

Tensor magnitude_spectrum(const Tensor& frames, const MfccConfig& c) {
  const std::size_t nfft = c.fft_size();
  const std::size_t bins = nfft / 2 + 1;
  if (frames.cols() > nfft) throw ShapeError("magnitude_spectrum: frame longer than the FFT size");
  Tensor spec = Tensor::zeros(frames.rows(), bins);
  std::vector<std::complex<double>> buf(nfft);
  for (std::size_t f = 0; f < frames.rows(); ++f) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t i = 0; i < frames.cols(); ++i) buf[i] = frames(f, i);
    fft(buf);
    for (std::size_t k = 0; k < bins; ++k) spec(f, k) = std::abs(buf[k]);
  }
  return spec;
}

std::vector<double> mel_center_frequencies(const MfccConfig& c) {
  const double lo = hz_to_mel(c.f_min);
  const double hi = hz_to_mel(c.f_max);
  std::vector<double> hz(c.n_mels + 2);
  for (std::size_t k = 0; k < hz.size(); ++k) {
    hz[k] = mel_to_hz(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(c.n_mels + 1));
  }
  return hz;
}

Tensor mel_filterbank(const MfccConfig& c) {
  const std::size_t nfft = c.fft_size();
  const std::size_t bins = nfft / 2 + 1;
  const auto edges = mel_center_frequencies(c);
  Tensor fb = Tensor::zeros(c.n_mels, bins);
  for (std::size_t m = 0; m < c.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * c.sample_rate / static_cast<double>(nfft);
      double w = 0.0;
      if (f > left && f <= center) w = (f - left) / (center - left);
      else if (f > center && f < right) w = (right - f) / (right - center);
      fb(m, k) = w;
    }
  }
  return fb;
}

Tensor mel_filterbank_energies(const Tensor& frames, const MfccConfig& c) {
  const Tensor spec = magnitude_spectrum(frames, c);
  const Tensor fb = mel_filterbank(c);
  Tensor e = Tensor::zeros(frames.rows(), c.n_mels);
  for (std::size_t f = 0; f < spec.rows(); ++f)
    for (std::size_t m = 0; m < c.n_mels; ++m) {
      double s = 0.0;
      for (std::size_t k = 0; k < spec.cols(); ++k) s += fb(m, k) * spec(f, k);
      e(f, m) = s;
    }
  return e;
}

std::vector<double> dct_ii(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> c(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += x[i] * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) /
                           (2.0 * static_cast<double>(n)));
    }
    c[k] = s * std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
  }
  return c;
}

std::vector<double> idct_ii(std::span<const double> c) {
  const std::size_t n = c.size();
  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      s += c[k] * std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n)) *
           std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) /
                    (2.0 * static_cast<double>(n)));
    }
    x[i] = s;
  }
  return x;
}

Tensor time_delta(const Tensor& f) {
  const std::size_t t = f.rows();
  Tensor d = Tensor::zeros(t, f.cols());
  for (std::size_t i = 0; i < t; ++i) {
    const std::size_t prev = i == 0 ? 0 : i - 1;
    const std::size_t next = i + 1 < t ? i + 1 : t - 1;
    for (std::size_t j = 0; j < f.cols(); ++j) d(i, j) = 0.5 * (f(next, j) - f(prev, j));
  }
  return d;
}

AcousticFeatures mfcc(std::span<const double> signal, const MfccConfig& c) {
  const Tensor frames = frame_and_window(signal, c);
  const Tensor energies = mel_filterbank_energies(frames, c);
  const std::size_t n = frames.rows();
  Tensor ceps = Tensor::zeros(n, c.n_ceps);
  std::vector<double> logs(c.n_mels);
  for (std::size_t f = 0; f < n; ++f) {
    for (std::size_t m = 0; m < c.n_mels; ++m) logs[m] = std::log(energies(f, m) + c.log_floor);
    const auto coeffs = dct_ii(logs);
    for (std::size_t k = 0; k < c.n_ceps; ++k) ceps(f, k) = coeffs[k];
  }
  std::vector<Tensor> parts = {ceps};
  Tensor d1;
  if (c.delta || c.delta_delta) d1 = time_delta(ceps);
  if (c.delta) parts.push_back(d1);
  if (c.delta_delta) parts.push_back(time_delta(d1));

  AcousticFeatures out;
  out.frames = Tensor::zeros(n, c.out_width);
  for (std::size_t f = 0; f < n; ++f) {
    std::size_t col = 0;
    for (const auto& p : parts)
      for (std::size_t k = 0; k < p.cols(); ++k) out.frames(f, col++) = p(f, k);
  }
  for (std::size_t f = 0; f < n; ++f) {
    out.frame_times.push_back(static_cast<double>(f * c.hop_length()) / c.sample_rate);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

std::vector<double> read_wav(const std::filesystem::path& path, double expected_rate) {
  const auto bytes = read_bytes(path);
  const std::string where = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(where + ": not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw FormatError(where + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError(where + ": short fmt chunk");
      format = le16(bytes.data() + body);
      channels = le16(bytes.data() + body + 2);
      rate = le32(bytes.data() + body + 4);
      bits = le16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw FormatError(where + ": data chunk before fmt chunk");
      if (format != 1 || channels != 1 || bits != 16) {
        throw FormatError(where + ": expected 16-bit PCM mono (format " + std::to_string(format) + ", " +
                          std::to_string(channels) + " channels, " + std::to_string(bits) + " bits)");
      }
      if (static_cast<double>(rate) != expected_rate) {
        throw FormatError(where + ": sample rate " + std::to_string(rate) + " Hz, expected " +
                          std::to_string(static_cast<long long>(expected_rate)) + " Hz");
      }
      std::vector<double> samples(size / 2);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i] = static_cast<double>(static_cast<std::int16_t>(le16(bytes.data() + body + 2 * i))) / 32768.0;
      }
      return samples;
    }
    pos = body + size + (size & 1);
  }
  throw FormatError(where + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples, std::uint32_t sample_rate) {
  std::vector<std::uint8_t> out;
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto put16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
  const auto data_bytes = static_cast<std::uint32_t>(2 * samples.size());
  tag("RIFF");
  put32(36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  put32(16);
  put16(1);
  put16(1);
  put32(sample_rate);
  put32(sample_rate * 2);
  put16(2);
  put16(16);
  tag("data");
  put32(data_bytes);
  for (double s : samples) {
    const double clamped = std::clamp(s, -1.0, 32767.0 / 32768.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clamped * 32768.0))));
  }
  write_bytes(path, out);
}

}  // namespace fmtlm
