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

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "audioret/corpus.hpp"
#include "audioret/model.hpp"
#include "audioret/rng.hpp"

namespace fixtures {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    audioret::SplitMix64 rng(reinterpret_cast<std::uintptr_t>(this) ^ ++counter);
    path_ = fs::temp_directory_path() /
            ("audioret_" + tag + "_" + std::to_string(rng.next() % 1000000007ULL));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline audioret::FeatureSequence random_features(std::size_t rows, std::size_t cols,
                                                 audioret::SplitMix64& rng,
                                                 double scale = 1.0) {
  audioret::FeatureSequence f;
  f.rows = rows;
  f.cols = cols;
  f.frames.resize(rows * cols);
  for (auto& v : f.frames) v = static_cast<float>(scale * (2.0 * rng.uniform01() - 1.0));
  return f;
}

inline std::vector<double> random_vector(std::size_t n, audioret::SplitMix64& rng,
                                         double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * (2.0 * rng.uniform01() - 1.0);
  return v;
}

// Row i of the Sylvester-Hadamard matrix of order n (power of two), scaled
// by `scale`; rows are mutually orthogonal.
inline std::vector<float> hadamard_row(std::size_t i, std::size_t n, float scale = 1.0f) {
  std::vector<float> row(n);
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = (std::popcount(i & j) % 2 == 0 ? scale : -scale);
  }
  return row;
}

inline std::string clip_name(std::size_t i) {
  return "clip_" + std::to_string(100 + i) + ".wav";
}

// Five captions per clip drawn from a small vocabulary; every caption of clip
// i contains the clip's own marker word "w<i>".
inline std::vector<audioret::CaptionRecord> synthetic_captions(std::size_t clips,
                                                               audioret::SplitMix64& rng) {
  static const char* kWords[] = {"a", "dog", "barks", "rain", "falls", "car", "engine",
                                 "bird", "sings", "loud", "quiet", "water"};
  std::vector<audioret::CaptionRecord> out;
  for (std::size_t i = 0; i < clips; ++i) {
    for (int c = 1; c <= 5; ++c) {
      std::string text = "w" + std::to_string(i);
      const auto len = 3 + rng.uniform(5);
      for (std::size_t k = 0; k < len; ++k) {
        text += " ";
        text += kWords[rng.uniform(std::size(kWords))];
      }
      audioret::CaptionRecord r;
      r.file_name = clip_name(i);
      r.caption_index = c;
      r.raw_text = text;
      r.tokens = audioret::normalize_caption(text);
      out.push_back(std::move(r));
    }
  }
  return out;
}

// Word table covering the synthetic vocabulary plus one marker per clip.
inline audioret::EmbeddingTable synthetic_words(std::size_t clips, std::size_t dim,
                                                audioret::SplitMix64& rng) {
  static const char* kWords[] = {"a", "dog", "barks", "rain", "falls", "car", "engine",
                                 "bird", "sings", "loud", "quiet", "water"};
  audioret::EmbeddingTable t;
  t.dim = dim;
  auto add = [&](const std::string& w) {
    std::vector<float> v(dim);
    for (auto& x : v) x = static_cast<float>(2.0 * rng.uniform01() - 1.0);
    t.entries.emplace(w, std::move(v));
  };
  for (const char* w : kWords) add(w);
  for (std::size_t i = 0; i < clips; ++i) add("w" + std::to_string(i));
  return t;
}

// Sentence vectors for every caption key: the clip's Hadamard row plus a
// little caption-specific noise.
inline audioret::CaptionEmbeddingTable synthetic_sentences(
    const std::vector<audioret::CaptionRecord>& captions, std::size_t clips, std::size_t dim,
    audioret::SplitMix64& rng) {
  audioret::CaptionEmbeddingTable t;
  t.dim = dim;
  for (const auto& c : captions) {
    std::size_t clip = 0;
    while (clip < clips && clip_name(clip) != c.file_name) ++clip;
    auto v = hadamard_row(clip + 1, dim, 0.25f);
    for (auto& x : v) x += static_cast<float>(0.02 * (2.0 * rng.uniform01() - 1.0));
    t.entries.emplace(c.key(), std::move(v));
  }
  return t;
}

// A small but complete config: conv -> relu -> maxpool -> recurrent -> mean.
inline audioret::ModelConfig small_config(std::size_t input_dim, std::size_t embed_dim,
                                          audioret::RecurrentCell cell =
                                              audioret::RecurrentCell::gru,
                                          std::size_t channels = 8) {
  using audioret::LayerKind;
  using audioret::LayerSpec;
  audioret::ModelConfig c;
  c.input_dim = input_dim;
  c.embed_dim = embed_dim;
  c.recurrent_cell = cell;
  c.audio_tower = {LayerSpec::conv1d(input_dim, channels, 3), LayerSpec::act(LayerKind::relu),
                   LayerSpec::max_pool(2), LayerSpec::recurrent(cell, channels, embed_dim),
                   LayerSpec::mean_pool(0)};
  return c;
}

// Word2vec-style text file: "count dim" header, then one word per line.
inline void write_word_embeddings(const fs::path& path, const audioret::EmbeddingTable& t) {
  std::string out = std::to_string(t.entries.size()) + " " + std::to_string(t.dim) + "\n";
  char buf[32];
  for (const auto& [word, vec] : t.entries) {
    out += word;
    for (float v : vec) {
      std::snprintf(buf, sizeof buf, " %.9g", static_cast<double>(v));
      out += buf;
    }
    out += "\n";
  }
  audioret::byte_io::write_file(path, out);
}

struct DiskDataset {
  fs::path captions;
  fs::path features;
  fs::path words;
  fs::path sentences;
};

// Captions CSV, one FMAT per clip, a word table and a sentence table under
// `dir`, all drawn from `seed`.
inline DiskDataset write_dataset(const fs::path& dir, std::size_t clips, std::size_t rows,
                                 std::size_t cols, std::size_t word_dim,
                                 std::size_t sentence_dim, std::uint64_t seed) {
  audioret::SplitMix64 rng(seed);
  DiskDataset d{dir / "captions.csv", dir / "features", dir / "words.txt",
                dir / "sentences.evec"};
  fs::create_directories(d.features);
  const auto captions = synthetic_captions(clips, rng);
  audioret::write_captions(d.captions, captions);
  for (std::size_t i = 0; i < clips; ++i) {
    auto f = random_features(rows, cols, rng);
    f.source_file = clip_name(i);
    audioret::write_fmat(d.features / (clip_name(i) + ".fmat"), f);
  }
  write_word_embeddings(d.words, synthetic_words(clips, word_dim, rng));
  audioret::write_caption_embeddings(d.sentences,
                                     synthetic_sentences(captions, clips, sentence_dim, rng));
  return d;
}

}  // namespace fixtures
