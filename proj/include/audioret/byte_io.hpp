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
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

#include "audioret/error.hpp"

namespace audioret {

// Little-endian binary helpers shared by the FMAT, EVEC, WAV and CKPT
// readers/writers.
namespace byte_io {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open '", path.string(), "'");
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path,
                       std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open '", path.string(), "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail("write to '", path.string(), "' failed");
}

template <typename UInt>
UInt to_little(UInt v) {
  if constexpr (std::endian::native == std::endian::big) {
    UInt r = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
      r = static_cast<UInt>((r << 8) | ((v >> (8 * i)) & 0xFF));
    }
    return r;
  }
  return v;
}

class Writer {
 public:
  void bytes(std::string_view b) { buf_.append(b); }

  template <typename UInt>
  void uint(UInt v) {
    v = to_little(v);
    char raw[sizeof(UInt)];
    std::memcpy(raw, &v, sizeof(UInt));
    buf_.append(raw, sizeof(UInt));
  }

  void u16(std::uint16_t v) { uint(v); }
  void u32(std::uint32_t v) { uint(v); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }

  const std::string& str() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

// Bounds-checked cursor. Every read past the end raises "truncated".
class Reader {
 public:
  Reader(std::string_view data, std::string what)
      : data_(data), what_(std::move(what)) {}

  std::string_view bytes(std::size_t n) {
    require(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  template <typename UInt>
  UInt uint() {
    require(sizeof(UInt));
    UInt v;
    std::memcpy(&v, data_.data() + pos_, sizeof(UInt));
    pos_ += sizeof(UInt);
    return to_little(v);
  }

  std::uint16_t u16() { return uint<std::uint16_t>(); }
  std::uint32_t u32() { return uint<std::uint32_t>(); }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void require(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      fail(what_, ": truncated (need ", n, " bytes at offset ", pos_, ", have ",
           data_.size() - pos_, ")");
    }
  }

  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace byte_io
}  // namespace audioret
