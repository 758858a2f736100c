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
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "audioret/byte_io.hpp"
#include "audioret/error.hpp"

namespace audioret {

namespace fs = std::filesystem;

inline constexpr int kCaptionsPerClip = 5;

// ---------------------------------------------------------------------------
// Captions

struct CaptionRecord {
  std::string file_name;
  int caption_index = 1;  // 1..5
  std::string raw_text;
  std::vector<std::string> tokens;

  std::string key() const {
    return file_name + "#" + std::to_string(caption_index);
  }
};

// Lowercases ASCII, maps every byte outside [a-z0-9'] to a separator and
// splits. Non-ASCII bytes are separators too.
inline std::vector<std::string> normalize_caption(std::string_view raw) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : raw) {
    char c = ch;
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    const bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                      c == '\'';
    if (keep) {
      current.push_back(c);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

namespace csv {

struct Row {
  std::size_t line = 0;  // physical line where the record starts (1-based)
  std::vector<std::string> fields;
};

// RFC-4180 reader: comma separated, optional double quotes with "" escapes,
// LF or CRLF record terminators. A leading UTF-8 BOM is skipped and blank
// lines are ignored.
inline std::vector<Row> parse(std::string_view text, std::string_view what) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<Row> rows;
  std::size_t i = 0;
  std::size_t line = 1;
  while (i < text.size()) {
    Row row;
    row.line = line;
    std::string field;
    bool end_of_record = false;
    while (!end_of_record) {
      field.clear();
      if (i < text.size() && text[i] == '"') {
        ++i;
        for (;;) {
          if (i >= text.size()) {
            fail(what, ": unterminated quoted field starting on line ",
                 row.line);
          }
          char c = text[i++];
          if (c == '"') {
            if (i < text.size() && text[i] == '"') {
              field.push_back('"');
              ++i;
            } else {
              break;
            }
          } else {
            if (c == '\n') ++line;
            field.push_back(c);
          }
        }
        if (i < text.size() && text[i] != ',' && text[i] != '\n' &&
            text[i] != '\r') {
          fail(what, ": unexpected character after closing quote on line ",
               line);
        }
      } else {
        while (i < text.size() && text[i] != ',' && text[i] != '\n' &&
               text[i] != '\r') {
          if (text[i] == '"') {
            fail(what, ": stray quote in unquoted field on line ", line);
          }
          field.push_back(text[i++]);
        }
      }
      row.fields.push_back(field);
      if (i >= text.size()) {
        end_of_record = true;
      } else if (text[i] == ',') {
        ++i;
      } else {
        if (text[i] == '\r') ++i;
        if (i < text.size() && text[i] == '\n') ++i;
        ++line;
        end_of_record = true;
      }
    }
    const bool blank = row.fields.size() == 1 && row.fields[0].empty();
    if (!blank) rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string quote(std::string_view field) {
  const bool needs = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace csv

inline const std::vector<std::string>& caption_csv_header() {
  static const std::vector<std::string> header = {
      "file_name", "caption_1", "caption_2",
      "caption_3", "caption_4", "caption_5"};
  return header;
}

inline std::vector<CaptionRecord> parse_captions(std::string_view text,
                                                 std::string_view what) {
  auto rows = csv::parse(text, what);
  if (rows.empty()) fail(what, ": missing header row");
  if (rows[0].fields != caption_csv_header()) {
    fail(what, ": header must be exactly "
               "'file_name,caption_1,caption_2,caption_3,caption_4,caption_5'");
  }
  std::vector<CaptionRecord> records;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != caption_csv_header().size()) {
      fail(what, ": row ", row.line, ": column count ", row.fields.size(),
           ", expected ", caption_csv_header().size());
    }
    const std::string& file_name = row.fields[0];
    if (file_name.empty()) fail(what, ": row ", row.line, ": empty file_name");
    if (!seen.insert(file_name).second) {
      fail(what, ": row ", row.line, ": duplicate file_name '", file_name,
           "'");
    }
    for (int c = 1; c <= kCaptionsPerClip; ++c) {
      CaptionRecord rec;
      rec.file_name = file_name;
      rec.caption_index = c;
      rec.raw_text = row.fields[static_cast<std::size_t>(c)];
      if (rec.raw_text.empty()) {
        fail(what, ": row ", row.line, ": empty caption_", c);
      }
      rec.tokens = normalize_caption(rec.raw_text);
      if (rec.tokens.empty()) {
        fail(what, ": row ", row.line, ": caption_", c,
             " has no tokens after normalization");
      }
      records.push_back(std::move(rec));
    }
  }
  return records;
}

inline std::vector<CaptionRecord> load_captions(const fs::path& csv_path) {
  return parse_captions(byte_io::read_file(csv_path), csv_path.string());
}

// Inverse of parse_captions. Records are grouped by file_name in order of
// first appearance; every clip must carry captions 1..5 exactly once.
inline std::string format_captions(const std::vector<CaptionRecord>& records) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const CaptionRecord*>> by_file;
  for (const auto& rec : records) {
    if (rec.caption_index < 1 || rec.caption_index > kCaptionsPerClip) {
      fail("caption index ", rec.caption_index, " out of range for '",
           rec.file_name, "'");
    }
    auto& slots = by_file[rec.file_name];
    if (slots.empty()) {
      order.push_back(rec.file_name);
      slots.assign(kCaptionsPerClip, nullptr);
    }
    auto& slot = slots[static_cast<std::size_t>(rec.caption_index - 1)];
    if (slot) fail("duplicate caption key ", rec.key());
    slot = &rec;
  }
  std::string out;
  for (std::size_t i = 0; i < caption_csv_header().size(); ++i) {
    if (i) out.push_back(',');
    out += caption_csv_header()[i];
  }
  out += "\r\n";
  for (const auto& name : order) {
    out += csv::quote(name);
    for (const auto* rec : by_file[name]) {
      if (!rec) fail("clip '", name, "' does not have 5 captions");
      out.push_back(',');
      out += csv::quote(rec->raw_text);
    }
    out += "\r\n";
  }
  return out;
}

inline void write_captions(const fs::path& path,
                           const std::vector<CaptionRecord>& records) {
  byte_io::write_file(path, format_captions(records));
}

// ---------------------------------------------------------------------------
// Feature matrices (FMAT)

enum class FeatureKind { log_mel_64, external };

struct FeatureSequence {
  std::size_t rows = 0;  // T, frames
  std::size_t cols = 0;  // F, features per frame
  std::vector<float> frames;  // row-major T x F
  FeatureKind feature_kind = FeatureKind::external;
  std::string source_file;

  float at(std::size_t t, std::size_t f) const { return frames[t * cols + f]; }
  float& at(std::size_t t, std::size_t f) { return frames[t * cols + f]; }
};

inline constexpr std::string_view kFmatMagic = "FMAT";
inline constexpr std::uint32_t kFmatVersion = 1;

inline std::string encode_fmat(const FeatureSequence& m) {
  if (m.rows == 0 || m.cols == 0) fail("FMAT: zero dimension");
  if (m.frames.size() != m.rows * m.cols) fail("FMAT: payload/shape mismatch");
  for (float v : m.frames) {
    if (!std::isfinite(v)) fail("FMAT: non-finite value");
  }
  byte_io::Writer w;
  w.bytes(kFmatMagic);
  w.u32(kFmatVersion);
  w.u32(static_cast<std::uint32_t>(m.rows));
  w.u32(static_cast<std::uint32_t>(m.cols));
  for (float v : m.frames) w.f32(v);
  return w.take();
}

inline FeatureSequence decode_fmat(std::string_view bytes,
                                   const std::string& what) {
  byte_io::Reader r(bytes, what);
  if (r.bytes(4) != kFmatMagic) fail(what, ": bad magic");
  const auto version = r.u32();
  if (version != kFmatVersion) fail(what, ": unsupported version ", version);
  FeatureSequence m;
  m.rows = r.u32();
  m.cols = r.u32();
  if (m.rows == 0 || m.cols == 0) fail(what, ": zero dimension");
  const std::size_t count = m.rows * m.cols;
  if (r.remaining() < count * 4) {
    fail(what, ": truncated payload (", m.rows, "x", m.cols, " declared, ",
         r.remaining() / 4, " values present)");
  }
  m.frames.resize(count);
  for (auto& v : m.frames) v = r.f32();
  if (r.remaining() != 0) fail(what, ": trailing bytes after payload");
  m.source_file = what;
  return m;
}

inline FeatureSequence read_fmat(const fs::path& path) {
  return decode_fmat(byte_io::read_file(path), path.string());
}

inline void write_fmat(const fs::path& path, const FeatureSequence& m) {
  byte_io::write_file(path, encode_fmat(m));
}

// ---------------------------------------------------------------------------
// Word embeddings (word2vec text format)

struct EmbeddingTable {
  std::size_t dim = 0;
  std::map<std::string, std::vector<float>, std::less<>> entries;

  const std::vector<float>* find(std::string_view word) const {
    auto it = entries.find(word);
    return it == entries.end() ? nullptr : &it->second;
  }
};

namespace detail {

inline std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
std::optional<T> parse_real(std::string_view s) {
  T v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

inline std::optional<float> parse_float(std::string_view s) { return parse_real<float>(s); }

inline std::optional<std::size_t> parse_size(std::string_view s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

inline EmbeddingTable parse_word_embeddings(std::string_view text,
                                            const std::string& what) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  while (!lines.empty() && detail::split_spaces(lines.back()).empty()) {
    lines.pop_back();
  }
  if (lines.empty()) fail(what, ": missing 'count dim' header");
  auto header = detail::split_spaces(lines[0]);
  std::optional<std::size_t> count, dim;
  if (header.size() == 2) {
    count = detail::parse_size(header[0]);
    dim = detail::parse_size(header[1]);
  }
  if (!count || !dim || *dim == 0) {
    fail(what, ": line 1: expected 'count dim' header");
  }
  if (lines.size() - 1 != *count) {
    fail(what, ": header declares ", *count, " words but ", lines.size() - 1,
         " lines follow");
  }
  EmbeddingTable table;
  table.dim = *dim;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    auto parts = detail::split_spaces(lines[l]);
    if (parts.size() != *dim + 1) {
      fail(what, ": line ", l + 1, ": expected word plus ", *dim,
           " values, found ", parts.empty() ? 0 : parts.size() - 1);
    }
    std::vector<float> vec(*dim);
    for (std::size_t d = 0; d < *dim; ++d) {
      auto v = detail::parse_float(parts[d + 1]);
      if (!v) {
        fail(what, ": line ", l + 1, ": non-numeric value '", parts[d + 1],
             "'");
      }
      vec[d] = *v;
    }
    std::string word(parts[0]);
    if (!table.entries.emplace(word, std::move(vec)).second) {
      fail(what, ": line ", l + 1, ": duplicate word '", word, "'");
    }
  }
  return table;
}

inline EmbeddingTable load_word_embeddings(const fs::path& path) {
  return parse_word_embeddings(byte_io::read_file(path), path.string());
}

inline std::string format_word_embeddings(const EmbeddingTable& table) {
  std::ostringstream out;
  out.precision(9);
  out << table.entries.size() << ' ' << table.dim << '\n';
  for (const auto& [word, vec] : table.entries) {
    out << word;
    for (float v : vec) out << ' ' << v;
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Caption embeddings (EVEC)

struct CaptionKey {
  std::string file_name;
  int caption_index = 1;
};

inline std::optional<CaptionKey> parse_caption_key(std::string_view key) {
  auto hash = key.rfind('#');
  if (hash == std::string_view::npos || hash == 0) return std::nullopt;
  auto index = key.substr(hash + 1);
  if (index.size() != 1 || index[0] < '1' ||
      index[0] > static_cast<char>('0' + kCaptionsPerClip)) {
    return std::nullopt;
  }
  return CaptionKey{std::string(key.substr(0, hash)), index[0] - '0'};
}

struct CaptionEmbeddingTable {
  std::size_t dim = 0;
  std::map<std::string, std::vector<float>, std::less<>> entries;

  const std::vector<float>* find(std::string_view key) const {
    auto it = entries.find(key);
    return it == entries.end() ? nullptr : &it->second;
  }
};

inline constexpr std::string_view kEvecMagic = "EVEC";

inline CaptionEmbeddingTable decode_evec(std::string_view bytes,
                                         const std::string& what) {
  byte_io::Reader r(bytes, what);
  if (r.bytes(4) != kEvecMagic) fail(what, ": bad magic");
  const auto count = r.u32();
  const auto dim = r.u32();
  if (dim == 0) fail(what, ": zero dimension");
  CaptionEmbeddingTable table;
  table.dim = dim;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto key_len = r.u16();
    std::string key(r.bytes(key_len));
    if (!parse_caption_key(key)) {
      fail(what, ": record ", i, ": malformed caption key '", key, "'");
    }
    std::vector<float> vec(dim);
    for (auto& v : vec) v = r.f32();
    if (!table.entries.emplace(key, std::move(vec)).second) {
      fail(what, ": record ", i, ": duplicate caption key '", key, "'");
    }
  }
  if (r.remaining() != 0) fail(what, ": trailing bytes after records");
  return table;
}

inline CaptionEmbeddingTable load_caption_embeddings(const fs::path& path) {
  return decode_evec(byte_io::read_file(path), path.string());
}

inline std::string encode_evec(const CaptionEmbeddingTable& table) {
  byte_io::Writer w;
  w.bytes(kEvecMagic);
  w.u32(static_cast<std::uint32_t>(table.entries.size()));
  w.u32(static_cast<std::uint32_t>(table.dim));
  for (const auto& [key, vec] : table.entries) {
    if (key.size() > 0xFFFF) fail("EVEC: key too long");
    if (vec.size() != table.dim) fail("EVEC: vector length mismatch for ", key);
    w.u16(static_cast<std::uint16_t>(key.size()));
    w.bytes(key);
    for (float v : vec) w.f32(v);
  }
  return w.take();
}

inline void write_caption_embeddings(const fs::path& path,
                                     const CaptionEmbeddingTable& table) {
  byte_io::write_file(path, encode_evec(table));
}

// ---------------------------------------------------------------------------
// Split manifests

enum class Split { development, validation, evaluation };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::development: return "development";
    case Split::validation: return "validation";
    case Split::evaluation: return "evaluation";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "development") return Split::development;
  if (s == "validation") return Split::validation;
  if (s == "evaluation") return Split::evaluation;
  fail("unknown split '", s, "'");
}

struct ManifestItem {
  std::string file_name;
  fs::path feature_path;
  std::vector<std::string> caption_keys;
};

struct DatasetManifest {
  Split split = Split::development;
  std::vector<ManifestItem> items;  // ascending file_name, byte order
};

inline DatasetManifest build_manifest(const std::vector<CaptionRecord>& captions,
                                      const fs::path& feature_dir,
                                      Split split) {
  std::map<std::string, std::vector<std::string>> keys;
  for (const auto& c : captions) keys[c.file_name].push_back(c.key());
  DatasetManifest manifest;
  manifest.split = split;
  std::vector<std::string> missing;
  for (auto& [name, caption_keys] : keys) {
    std::sort(caption_keys.begin(), caption_keys.end());
    if (std::adjacent_find(caption_keys.begin(), caption_keys.end()) !=
        caption_keys.end()) {
      fail("duplicate caption key for '", name, "'");
    }
    auto path = feature_dir / (name + ".fmat");
    if (!fs::is_regular_file(path)) {
      missing.push_back(name);
      continue;
    }
    manifest.items.push_back({name, path, caption_keys});
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    fail("missing feature file(s) under '", feature_dir.string(),
         "': ", list);
  }
  return manifest;
}

inline std::string serialize_manifest(const DatasetManifest& manifest) {
  std::string out = "split\t" + std::string(to_string(manifest.split)) + "\n";
  for (const auto& item : manifest.items) {
    out += item.file_name + "\t" + item.feature_path.generic_string();
    for (const auto& k : item.caption_keys) out += "\t" + k;
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// A loaded split: manifest, one feature matrix per item, and the captions
// (queries) in manifest order.

struct SplitData {
  DatasetManifest manifest;
  std::vector<FeatureSequence> features;  // parallel to manifest.items
  std::vector<CaptionRecord> captions;    // grouped by item, caption order
  std::vector<std::size_t> caption_audio;  // caption -> item index
};

// Builds a SplitData from in-memory pieces. Captions whose file_name is not
// in `file_names` are rejected.
inline SplitData assemble_split(std::vector<std::string> file_names,
                                std::vector<FeatureSequence> features,
                                std::vector<CaptionRecord> captions,
                                Split split = Split::development) {
  if (file_names.size() != features.size()) {
    fail("assemble_split: ", file_names.size(), " names vs ", features.size(),
         " feature matrices");
  }
  SplitData data;
  data.manifest.split = split;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < file_names.size(); ++i) {
    if (!index.emplace(file_names[i], i).second) {
      fail("duplicate file_name '", file_names[i], "'");
    }
    data.manifest.items.push_back({file_names[i], {}, {}});
  }
  data.features = std::move(features);
  for (const auto& c : captions) {
    if (!index.count(c.file_name)) fail("caption for unknown clip '", c.file_name, "'");
  }
  std::stable_sort(captions.begin(), captions.end(),
                   [&](const CaptionRecord& a, const CaptionRecord& b) {
                     const auto ia = index.at(a.file_name);
                     const auto ib = index.at(b.file_name);
                     if (ia != ib) return ia < ib;
                     return a.caption_index < b.caption_index;
                   });
  for (auto& c : captions) {
    auto it = index.find(c.file_name);
    if (it == index.end()) fail("caption for unknown clip '", c.file_name, "'");
    data.manifest.items[it->second].caption_keys.push_back(c.key());
    data.caption_audio.push_back(it->second);
  }
  data.captions = std::move(captions);
  return data;
}

inline SplitData load_split(const fs::path& captions_csv,
                            const fs::path& feature_dir,
                            Split split = Split::development) {
  auto captions = load_captions(captions_csv);
  auto manifest = build_manifest(captions, feature_dir, split);
  std::vector<std::string> names;
  std::vector<FeatureSequence> features;
  for (const auto& item : manifest.items) {
    names.push_back(item.file_name);
    features.push_back(read_fmat(item.feature_path));
  }
  auto data = assemble_split(std::move(names), std::move(features),
                             std::move(captions), split);
  for (std::size_t i = 0; i < manifest.items.size(); ++i) {
    data.manifest.items[i].feature_path = manifest.items[i].feature_path;
  }
  return data;
}

}  // namespace audioret
