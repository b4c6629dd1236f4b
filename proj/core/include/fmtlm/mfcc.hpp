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

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fmtlm/tensor.hpp"

namespace fmtlm {

struct MfccConfig {
  double sample_rate = 16000.0;
  double win_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t n_mels = 40;
  std::size_t n_ceps = 13;
  bool delta = true;
  bool delta_delta = true;
  std::size_t out_width = 512;
  double log_floor = 1e-10;
  double f_min = 0.0;
  double f_max = 8000.0;

  std::size_t win_length() const;  // samples
  std::size_t hop_length() const;  // samples
  std::size_t fft_size() const;    // next power of two ≥ win_length
  std::size_t feature_count() const { return n_ceps * (1 + (delta ? 1 : 0) + (delta_delta ? 1 : 0)); }
  void validate() const;
};

struct AcousticFeatures {
  Tensor frames;                    // d_w × out_width
  std::vector<double> frame_times;  // start of each frame, seconds
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Number of frames for a signal of n samples (0 when n < win_length).
std::size_t frame_count(std::size_t n_samples, const MfccConfig& config);

// Hamming-windowed frames, d_w × win_length. Throws InputError when the
// signal is shorter than one window.
Tensor frame_and_window(std::span<const double> signal, const MfccConfig& config);

// In-place radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& data);

// |DFT| of each zero-padded frame: d_w × (fft_size/2 + 1).
Tensor magnitude_spectrum(const Tensor& frames, const MfccConfig& config);

// n_mels × (fft_size/2 + 1) triangular filters, centres equally spaced on
// the mel scale between f_min and f_max.
Tensor mel_filterbank(const MfccConfig& config);
std::vector<double> mel_center_frequencies(const MfccConfig& config);

// d_w × n_mels, all entries ≥ 0.
Tensor mel_filterbank_energies(const Tensor& frames, const MfccConfig& config);

// Orthonormal DCT-II and its inverse.
std::vector<double> dct_ii(std::span<const double> x);
std::vector<double> idct_ii(std::span<const double> c);

// Two-frame symmetric difference along time with edge replication.
Tensor time_delta(const Tensor& features);

// log(energy + floor) → DCT-II → first n_ceps, then Δ and ΔΔ, each frame
// zero-padded to out_width: [c | Δ | ΔΔ | 0…].
AcousticFeatures mfcc(std::span<const double> signal, const MfccConfig& config);

// 16-bit signed PCM mono WAV. Other encodings, or a sample rate different
// from `expected_rate`, throw FormatError.
std::vector<double> read_wav(const std::filesystem::path& path, double expected_rate);
void write_wav(const std::filesystem::path& path, std::span<const double> samples, std::uint32_t sample_rate);

}  // namespace fmtlm
