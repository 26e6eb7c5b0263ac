// Copyright 2026 The pholid Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PHOLID_AUDIO_HPP_
#define PHOLID_AUDIO_HPP_

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "pholid/tensor.hpp"

namespace pholid {

struct Waveform {
  std::vector<double> samples;  // mono, in [-1, 1)
  int sample_rate = 16000;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

// RIFF/WAVE, PCM 16-bit. Multi-channel input is averaged to mono.
Waveform ReadWav(const std::filesystem::path& path);
void WriteWav(const std::filesystem::path& path, const Waveform& wave);

struct StftParams {
  double window_ms = 25.0;
  double hop_ms = 20.0;
  std::size_t n_fft = 0;  // 0: next power of two >= window length

  std::size_t window_samples(int sample_rate) const;
  std::size_t hop_samples(int sample_rate) const;
  std::size_t fft_size(int sample_rate) const;
};

struct Spectrogram {
  Matrix log_magnitude;  // frames x (n_fft / 2 + 1), natural log of |X| + 1e-10
  StftParams params;
  int sample_rate = 16000;

  std::size_t n_frames() const { return static_cast<std::size_t>(log_magnitude.rows()); }
  std::string Describe() const;
};

// Hann window, frames start at multiples of the hop, only full windows.
Spectrogram ComputeSpectrogram(const Waveform& wave, const StftParams& params = {});

// Errors when the two frame counts differ by more than the frames a window
// can overhang a hop.
void CheckFrameAlignment(const Spectrogram& spec, std::size_t feature_frames);

}  // namespace pholid

#endif  // PHOLID_AUDIO_HPP_
