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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "audioret/dsp.hpp"
#include "audioret/rng.hpp"
#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

using namespace audioret;
using namespace audioret::dsp;

namespace {

WaveForm sine(double hz, int sr, std::size_t n, double amp = 0.5, std::size_t offset = 0) {
  WaveForm w;
  w.sample_rate = sr;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.samples[i] = amp * std::sin(2 * std::numbers::pi * hz * static_cast<double>(i + offset) / sr);
  }
  return w;
}

}  // namespace

TEST(Wav, DecodesPcm16) {
  const auto mono = decode_wav(encode_wav({16384, -32768, 0}, 8000), "t");
  EXPECT_EQ(mono.sample_rate, 8000);
  ASSERT_EQ(mono.samples.size(), 3u);
  EXPECT_DOUBLE_EQ(mono.samples[0], 0.5);
  EXPECT_DOUBLE_EQ(mono.samples[1], -1.0);
  const auto stereo = decode_wav(encode_wav({16384, -16384, 100, 300}, 8000, 2), "t");
  ASSERT_EQ(stereo.samples.size(), 2u);
  EXPECT_DOUBLE_EQ(stereo.samples[0], 0.0);
  EXPECT_DOUBLE_EQ(stereo.samples[1], 200.0 / 32768.0);
}

TEST(Wav, RejectsUnsupported) {
  auto bytes = encode_wav({1, 2, 3}, 8000);
  auto floaty = bytes;
  floaty[20] = 3;  // IEEE float format tag
  try {
    decode_wav(floaty, "f.wav");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported encoding"), std::string::npos);
  }
  auto deep = bytes;
  deep[34] = 24;
  EXPECT_THROW(decode_wav(deep, "t"), Error);
  EXPECT_THROW(decode_wav(bytes.substr(0, bytes.size() - 3), "t"), Error);
  EXPECT_THROW(decode_wav("RIFX", "t"), Error);
}

TEST(Mel, Scale) {
  EXPECT_NEAR(hz_to_mel(700), 781.17, 0.005);
  EXPECT_NEAR(hz_to_mel(700), 2595 * std::log10(2.0), 1e-12);
  EXPECT_EQ(hz_to_mel(0), 0.0);
  for (double f : {10.0, 440.0, 7999.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(f)), f, 1e-9);
}

TEST(Mel, SingleFilterPeaksMidMelAxis) {
  const auto fb = mel_filterbank(16000, 1024, 1, 0, 8000);
  ASSERT_EQ(fb.center_hz.size(), 1u);
  EXPECT_NEAR(hz_to_mel(fb.center_hz[0]), hz_to_mel(8000) / 2, 1e-9);
  std::size_t peak = 0;
  for (std::size_t k = 0; k < fb.n_bins; ++k) {
    if (fb.weight(0, k) > fb.weight(0, peak)) peak = k;
  }
  EXPECT_NEAR(static_cast<double>(peak) * 16000.0 / 1024.0, fb.center_hz[0], 16000.0 / 1024.0);
}

TEST(Mel, RowsAreNonEmptyContiguousUnimodal) {
  SplitMix64 rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    const int sr = 4000 + static_cast<int>(rng.uniform(44000));
    const std::size_t n_fft = std::size_t{1} << (6 + rng.uniform(6));
    const std::size_t n_mels = 1 + rng.uniform(128);
    const double f_max = sr / 2.0 * (0.5 + 0.5 * rng.uniform01());
    const double f_min = f_max * 0.3 * rng.uniform01();
    const auto fb = mel_filterbank(sr, n_fft, n_mels, f_min, f_max);
    for (std::size_t m = 0; m < n_mels; ++m) {
      std::vector<std::size_t> support;
      for (std::size_t k = 0; k < fb.n_bins; ++k) {
        EXPECT_GE(fb.weight(m, k), 0.0);
        if (fb.weight(m, k) > 0) support.push_back(k);
      }
      ASSERT_FALSE(support.empty());
      EXPECT_EQ(support.back() - support.front() + 1, support.size());
      bool falling = false;
      for (std::size_t i = support.front() + 1; i <= support.back(); ++i) {
        const double a = fb.weight(m, i - 1), b = fb.weight(m, i);
        if (b < a) falling = true;
        if (falling) {
          EXPECT_LE(b, a);
        }
      }
    }
  }
}

TEST(Mel, InvalidRange) {
  EXPECT_THROW(mel_filterbank(16000, 512, 10, 5000, 4000), Error);
  EXPECT_THROW(mel_filterbank(16000, 512, 10, 0, 9000), Error);
  EXPECT_THROW(mel_filterbank(16000, 512, 0, 0, 8000), Error);
}

TEST(Fft, MatchesDirectDft) {
  SplitMix64 rng(4);
  for (std::size_t n : {1u, 2u, 8u, 64u, 256u}) {
    auto x = fixtures::random_vector(n, rng);
    std::vector<std::complex<double>> buf(x.begin(), x.end());
    fft(buf);
    const auto ref = oracle::power_dft(x, n);
    for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(std::norm(buf[k]), ref[k], 1e-9);
  }
  std::vector<std::complex<double>> bad(6);
  EXPECT_THROW(fft(bad), Error);
}

TEST(LogMel, FrameCountExample) {
  WaveForm w;
  w.sample_rate = 16000;
  w.samples.assign(16000, 0.0);
  const auto l = frame_layout(w.samples.size(), w.sample_rate, {});
  EXPECT_EQ(l.win, 640u);
  EXPECT_EQ(l.hop, 320u);
  EXPECT_EQ(l.n_fft, 1024u);
  EXPECT_EQ(l.frames, 49u);
  const auto f = log_mel_features(w);
  EXPECT_EQ(f.rows, 49u);
  EXPECT_EQ(f.cols, 64u);
  EXPECT_EQ(f.feature_kind, FeatureKind::log_mel_64);
}

TEST(LogMel, FrameCountClosedForm) {
  SplitMix64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int sr = 8000 + static_cast<int>(rng.uniform(40000));
    const std::size_t win = static_cast<std::size_t>(std::lround(sr * 0.04));
    const std::size_t hop = static_cast<std::size_t>(std::lround(sr * 0.02));
    const std::size_t n = win + rng.uniform(3 * static_cast<std::size_t>(sr));
    EXPECT_EQ(frame_layout(n, sr, {}).frames, (n - win) / hop + 1);
  }
  EXPECT_THROW(frame_layout(100, 16000, {}), Error);
}

TEST(LogMel, SilenceIsLogFloor) {
  WaveForm w;
  w.sample_rate = 16000;
  w.samples.assign(4000, 0.0);
  const auto f = log_mel_features(w);
  for (float v : f.frames) EXPECT_EQ(v, static_cast<float>(std::log(1e-10)));
}

TEST(LogMel, SinePeakMatchesDirectDft) {
  const auto w = sine(1000, 16000, 16000);
  const auto f = log_mel_features(w);
  const auto fb = mel_filterbank(16000, 1024, 64, 0, 8000);
  std::size_t nearest = 0;
  for (std::size_t m = 0; m < 64; ++m) {
    if (std::fabs(fb.center_hz[m] - 1000) < std::fabs(fb.center_hz[nearest] - 1000)) nearest = m;
  }
  const auto window = hann_window(640);
  for (std::size_t t = 0; t < f.rows; ++t) {
    std::size_t arg = 0;
    for (std::size_t m = 0; m < 64; ++m) {
      if (f.at(t, m) > f.at(t, arg)) arg = m;
    }
    EXPECT_EQ(arg, nearest) << "frame " << t;
    if (t % 12 == 0) {
      std::vector<double> frame(640);
      for (std::size_t i = 0; i < 640; ++i) frame[i] = w.samples[t * 320 + i] * window[i];
      const auto power = oracle::power_dft(frame, 1024);
      for (std::size_t m = 0; m < 64; ++m) {
        double e = 0;
        for (std::size_t k = 0; k < power.size(); ++k) e += fb.weight(m, k) * power[k];
        EXPECT_NEAR(f.at(t, m), std::log(e + 1e-10), 1e-4);
      }
    }
  }
}

TEST(LogMel, LouderNeverDecreases) {
  SplitMix64 rng(13);
  WaveForm w;
  w.sample_rate = 8000;
  w.samples = fixtures::random_vector(4000, rng, 0.3);
  auto louder = w;
  for (auto& s : louder.samples) s *= 1.7;
  const auto a = log_mel_features(w), b = log_mel_features(louder);
  for (std::size_t i = 0; i < a.frames.size(); ++i) EXPECT_GE(b.frames[i], a.frames[i]);
}

TEST(LogMel, OneHopShiftShiftsRows) {
  const auto a = log_mel_features(sine(440, 16000, 8000));
  const auto b = log_mel_features(sine(440, 16000, 8000 - 320, 0.5, 320));
  ASSERT_EQ(b.rows + 1, a.rows);
  for (std::size_t t = 0; t < b.rows; ++t) {
    for (std::size_t m = 0; m < 64; ++m) EXPECT_NEAR(b.at(t, m), a.at(t + 1, m), 1e-4);
  }
}
