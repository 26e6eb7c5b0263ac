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

#include "pholid/audio.hpp"

#include <fftw3.h>
#include <fmt/format.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "pholid/error.hpp"

namespace pholid {

namespace {

std::uint32_t U32(const char* p) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(p[0])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(p[1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(p[2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(p[3])) << 24;
}

std::uint16_t U16(const char* p) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(p[0]) |
                                    static_cast<unsigned char>(p[1]) << 8);
}

void PutU32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void PutU16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Waveform ReadWav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCategory::kIo, fmt::format("cannot open {}", path.string()));
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto bad = [&](const std::string& why) -> void {
    Fail(ErrorCategory::kFormat, fmt::format("{}: {}", path.string(), why));
  };
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0) {
    bad("not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  int channels = 0, rate = 0, bits = 0;
  bool have_fmt = false;
  const char* data = nullptr;
  std::size_t data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::size_t len = U32(&bytes[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) bad(fmt::format("chunk '{}' truncated", id));
    if (id == "fmt ") {
      if (len < 16) bad("fmt chunk too short");
      const auto format = U16(&bytes[body]);
      channels = U16(&bytes[body + 2]);
      rate = static_cast<int>(U32(&bytes[body + 4]));
      bits = U16(&bytes[body + 14]);
      if (format != 1) bad(fmt::format("unsupported audio format {}, need PCM", format));
      have_fmt = true;
    } else if (id == "data") {
      data = &bytes[body];
      data_len = len;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt) bad("missing fmt chunk");
  if (data == nullptr) bad("missing data chunk");
  if (bits != 16) bad(fmt::format("unsupported sample width {} bits, need 16", bits));
  if (channels < 1 || rate <= 0) bad("invalid channel count or sample rate");
  const std::size_t frame_bytes = 2 * static_cast<std::size_t>(channels);
  if (data_len % frame_bytes != 0) bad("data chunk length not a whole number of frames");

  Waveform w;
  w.sample_rate = rate;
  const std::size_t n = data_len / frame_bytes;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const auto raw = static_cast<std::int16_t>(U16(data + i * frame_bytes + 2 * c));
      acc += raw / 32768.0;
    }
    w.samples[i] = acc / channels;
  }
  return w;
}

void WriteWav(const std::filesystem::path& path, const Waveform& wave) {
  std::string pcm;
  pcm.reserve(2 * wave.samples.size());
  for (double x : wave.samples) {
    const double c = std::clamp(x, -1.0, 32767.0 / 32768.0);
    PutU16(pcm, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32768.0))));
  }
  std::string out = "RIFF";
  PutU32(out, static_cast<std::uint32_t>(36 + pcm.size()));
  out += "WAVEfmt ";
  PutU32(out, 16);
  PutU16(out, 1);
  PutU16(out, 1);
  PutU32(out, static_cast<std::uint32_t>(wave.sample_rate));
  PutU32(out, static_cast<std::uint32_t>(wave.sample_rate * 2));
  PutU16(out, 2);
  PutU16(out, 16);
  out += "data";
  PutU32(out, static_cast<std::uint32_t>(pcm.size()));
  out += pcm;
  std::ofstream f(path, std::ios::binary);
  if (!f) Fail(ErrorCategory::kIo, fmt::format("cannot write {}", path.string()));
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) Fail(ErrorCategory::kIo, fmt::format("short write to {}", path.string()));
}

std::size_t StftParams::window_samples(int sample_rate) const {
  return static_cast<std::size_t>(std::lround(window_ms * sample_rate / 1000.0));
}

std::size_t StftParams::hop_samples(int sample_rate) const {
  return static_cast<std::size_t>(std::lround(hop_ms * sample_rate / 1000.0));
}

std::size_t StftParams::fft_size(int sample_rate) const {
  if (n_fft != 0) return n_fft;
  std::size_t n = 1;
  while (n < window_samples(sample_rate)) n <<= 1;
  return n;
}

std::string Spectrogram::Describe() const {
  return fmt::format("STFT window={}ms hop={}ms n_fft={} window_fn=hann sample_rate={} scale=log-magnitude",
                     params.window_ms, params.hop_ms, params.fft_size(sample_rate), sample_rate);
}

Spectrogram ComputeSpectrogram(const Waveform& wave, const StftParams& params) {
  const std::size_t win = params.window_samples(wave.sample_rate);
  const std::size_t hop = params.hop_samples(wave.sample_rate);
  if (win < 2 || hop < 1) Fail(ErrorCategory::kConfig, "STFT window or hop too small");
  const std::size_t nfft = params.fft_size(wave.sample_rate);
  if (nfft < win) Fail(ErrorCategory::kConfig, "n_fft shorter than the window");
  const std::size_t n_frames = wave.samples.size() < win ? 0 : 1 + (wave.samples.size() - win) / hop;
  const std::size_t n_bins = nfft / 2 + 1;

  Spectrogram s;
  s.params = params;
  s.sample_rate = wave.sample_rate;
  s.log_magnitude.resize(static_cast<Eigen::Index>(n_frames), static_cast<Eigen::Index>(n_bins));
  if (n_frames == 0) return s;

  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(win - 1));
  }
  double* in = fftw_alloc_real(nfft);
  fftw_complex* out = fftw_alloc_complex(n_bins);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(nfft), in, out, FFTW_ESTIMATE);
  for (std::size_t f = 0; f < n_frames; ++f) {
    std::fill(in, in + nfft, 0.0);
    for (std::size_t i = 0; i < win; ++i) in[i] = wave.samples[f * hop + i] * window[i];
    fftw_execute(plan);
    for (std::size_t k = 0; k < n_bins; ++k) {
      s.log_magnitude(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(k)) =
          std::log(std::hypot(out[k][0], out[k][1]) + 1e-10);
    }
  }
  fftw_destroy_plan(plan);
  fftw_free(out);
  fftw_free(in);
  return s;
}

void CheckFrameAlignment(const Spectrogram& spec, std::size_t feature_frames) {
  const std::size_t win = spec.params.window_samples(spec.sample_rate);
  const std::size_t hop = spec.params.hop_samples(spec.sample_rate);
  const std::size_t slack = (win + hop - 1) / hop;
  const std::size_t a = spec.n_frames();
  const std::size_t diff = a > feature_frames ? a - feature_frames : feature_frames - a;
  if (diff > slack) {
    Fail(ErrorCategory::kData,
         fmt::format("audio gives {} STFT frames but the features have {} (tolerance {})", a,
                     feature_frames, slack));
  }
}

}  // namespace pholid
