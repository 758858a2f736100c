/*
 * Copyright 2026 The audioret Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "audioret/byte_io.hpp"
#include "audioret/corpus.hpp"
#include "audioret/error.hpp"

namespace audioret::dsp {

struct WaveForm {
  std::vector<double> samples;  // mono, [-1, 1]
  int sample_rate = 0;
};

// 16-bit PCM RIFF/WAVE, mono or stereo. Stereo is averaged to mono and each
// sample s is mapped to s / 32768.
inline WaveForm decode_wav(std::string_view bytes, const std::string& what) {
  byte_io::Reader r(bytes, what);
  if (r.bytes(4) != "RIFF") fail(what, ": not a RIFF file");
  r.u32();
  if (r.bytes(4) != "WAVE") fail(what, ": not a WAVE file");

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  while (r.remaining() >= 8) {
    const auto id = r.bytes(4);
    const auto size = r.u32();
    if (id == "fmt ") {
      auto body = byte_io::Reader(r.bytes(size), what);
      const auto format = body.u16();
      channels = body.u16();
      rate = body.u32();
      body.u32();  // byte rate
      body.u16();  // block align
      bits = body.u16();
      if (format != 1) {
        fail(what, ": unsupported encoding (format tag ", format,
             ", only PCM is supported)");
      }
      if (bits != 16) fail(what, ": unsupported bit depth ", bits);
      if (channels != 1 && channels != 2) {
        fail(what, ": unsupported channel count ", channels);
      }
      if (rate == 0) fail(what, ": zero sample rate");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) fail(what, ": data chunk before fmt chunk");
      auto payload = r.bytes(size);
      const std::size_t frame_bytes = 2u * channels;
      if (size % frame_bytes != 0) fail(what, ": truncated data chunk");
      byte_io::Reader pcm(payload, what);
      WaveForm wave;
      wave.sample_rate = static_cast<int>(rate);
      wave.samples.resize(size / frame_bytes);
      for (auto& s : wave.samples) {
        double acc = 0;
        for (int c = 0; c < channels; ++c) {
          acc += static_cast<std::int16_t>(pcm.u16()) / 32768.0;
        }
        s = acc / channels;
      }
      return wave;
    } else {
      r.bytes(size);
    }
    if (size % 2 == 1 && r.remaining() > 0) r.bytes(1);  // pad byte
  }
  fail(what, have_fmt ? ": missing data chunk" : ": missing fmt chunk");
}

inline WaveForm read_wav(const std::filesystem::path& path) {
  return decode_wav(byte_io::read_file(path), path.string());
}

// Writes mono (or interleaved multi-channel) 16-bit PCM. Samples are clamped
// to [-1, 1] and scaled by 32767.
inline std::string encode_wav(const std::vector<std::int16_t>& interleaved,
                              int sample_rate, int channels = 1) {
  byte_io::Writer w;
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
  w.bytes("RIFF");
  w.u32(36 + data_bytes);
  w.bytes("WAVE");
  w.bytes("fmt ");
  w.u32(16);
  w.u16(1);
  w.u16(static_cast<std::uint16_t>(channels));
  w.u32(static_cast<std::uint32_t>(sample_rate));
  w.u32(static_cast<std::uint32_t>(sample_rate * channels * 2));
  w.u16(static_cast<std::uint16_t>(channels * 2));
  w.u16(16);
  w.bytes("data");
  w.u32(data_bytes);
  for (auto s : interleaved) w.u16(static_cast<std::uint16_t>(s));
  return w.take();
}

inline std::vector<std::int16_t> to_pcm16(const std::vector<double>& samples) {
  std::vector<std::int16_t> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double s = std::clamp(samples[i], -1.0, 1.0);
    out[i] = static_cast<std::int16_t>(std::lround(s * 32767.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mel filterbank (HTK mel scale)

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t n_bins = 0;  // n_fft / 2 + 1
  double f_min = 0;
  double f_max = 0;
  std::vector<double> center_hz;  // n_mels
  std::vector<double> weights;    // row-major n_mels x n_bins

  double weight(std::size_t m, std::size_t k) const {
    return weights[m * n_bins + k];
  }
};

// Triangular filters with centers equally spaced on the mel axis between
// f_min and f_max. A filter narrower than the FFT bin spacing would have no
// support; such rows get a single unit weight at the bin nearest their
// center so every row stays non-empty.
inline MelFilterbank mel_filterbank(int sample_rate, std::size_t n_fft,
                                    std::size_t n_mels, double f_min,
                                    double f_max) {
  if (sample_rate <= 0) fail("mel_filterbank: sample rate must be positive");
  if (n_mels < 1) fail("mel_filterbank: n_mels must be >= 1");
  if (n_fft < 2) fail("mel_filterbank: n_fft must be >= 2");
  const double nyquist = sample_rate / 2.0;
  if (!(f_min >= 0 && f_min < f_max && f_max <= nyquist)) {
    fail("mel_filterbank: invalid frequency range [", f_min, ", ", f_max,
         "] for sample rate ", sample_rate);
  }
  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.n_bins = n_fft / 2 + 1;
  fb.f_min = f_min;
  fb.f_max = f_max;
  fb.weights.assign(n_mels * fb.n_bins, 0.0);

  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(n_mels + 1));
  }
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(n_fft);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    fb.center_hz.push_back(mid);
    bool any = false;
    for (std::size_t k = 0; k < fb.n_bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      const double up = (f - lo) / (mid - lo);
      const double down = (hi - f) / (hi - mid);
      const double w = std::max(0.0, std::min(up, down));
      fb.weights[m * fb.n_bins + k] = w;
      any = any || w > 0;
    }
    if (!any) {
      auto k = static_cast<std::size_t>(std::lround(mid / bin_hz));
      fb.weights[m * fb.n_bins + std::min(k, fb.n_bins - 1)] = 1.0;
    }
  }
  return fb;
}

// ---------------------------------------------------------------------------
// STFT

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) fail("fft: size must be a power of two");
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
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t i = 0; i < length; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(length));
  }
  return w;
}

struct LogMelParams {
  std::size_t n_mels = 64;
  double win_ms = 40.0;
  double hop_ms = 20.0;
  double f_min = 0.0;
  double f_max = 0.0;  // 0 selects the Nyquist frequency
  double log_floor = 1e-10;
};

struct FrameLayout {
  std::size_t win = 0;
  std::size_t hop = 0;
  std::size_t n_fft = 0;
  std::size_t frames = 0;
};

inline FrameLayout frame_layout(std::size_t n_samples, int sample_rate,
                                const LogMelParams& p) {
  FrameLayout l;
  l.win = static_cast<std::size_t>(std::lround(sample_rate * p.win_ms / 1000.0));
  l.hop = static_cast<std::size_t>(std::lround(sample_rate * p.hop_ms / 1000.0));
  if (l.win == 0 || l.hop == 0) fail("window and hop must cover at least one sample");
  l.n_fft = next_pow2(l.win);
  if (n_samples < l.win) {
    fail("clip shorter than one window (", n_samples, " < ", l.win,
         " samples)");
  }
  l.frames = (n_samples - l.win) / l.hop + 1;
  return l;
}

// Hann-windowed power spectrogram -> mel projection -> log(x + floor).
// No pre-emphasis, no normalization.
inline FeatureSequence log_mel_features(const WaveForm& wave,
                                        const LogMelParams& p = {}) {
  if (wave.sample_rate <= 0) fail("log_mel_features: invalid sample rate");
  const auto layout = frame_layout(wave.samples.size(), wave.sample_rate, p);
  const double f_max = p.f_max > 0 ? p.f_max : wave.sample_rate / 2.0;
  const auto fb = mel_filterbank(wave.sample_rate, layout.n_fft, p.n_mels,
                                 p.f_min, f_max);
  const auto window = hann_window(layout.win);

  FeatureSequence out;
  out.rows = layout.frames;
  out.cols = p.n_mels;
  out.frames.resize(out.rows * out.cols);
  out.feature_kind = p.n_mels == 64 ? FeatureKind::log_mel_64 : FeatureKind::external;

  std::vector<std::complex<double>> buf(layout.n_fft);
  std::vector<double> power(fb.n_bins);
  for (std::size_t t = 0; t < layout.frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    const std::size_t start = t * layout.hop;
    for (std::size_t i = 0; i < layout.win; ++i) {
      buf[i] = wave.samples[start + i] * window[i];
    }
    fft(buf);
    for (std::size_t k = 0; k < fb.n_bins; ++k) power[k] = std::norm(buf[k]);
    for (std::size_t m = 0; m < fb.n_mels; ++m) {
      double e = 0;
      for (std::size_t k = 0; k < fb.n_bins; ++k) e += fb.weight(m, k) * power[k];
      out.at(t, m) = static_cast<float>(std::log(e + p.log_floor));
    }
  }
  return out;
}

}  // namespace audioret::dsp
