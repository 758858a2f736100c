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

#include <set>
#include <string>
#include <utility>

#include "audioret/error.hpp"
#include "json.hpp"

namespace audioret {

using Json = nlohmann::json;

// Reads fields of one JSON object and rejects keys nobody asked for.
// Errors carry the dotted key path.
class JsonFields {
 public:
  JsonFields(const Json& obj, std::string path)
      : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(where(), ": expected an object");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  template <typename T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!obj_.contains(key) || obj_.at(key).is_null()) return fallback;
    return convert<T>(key);
  }

  template <typename T>
  T require(const std::string& key) {
    used_.insert(key);
    if (!obj_.contains(key)) fail(path_of(key), ": missing required key");
    return convert<T>(key);
  }

  const Json* child(const std::string& key) {
    used_.insert(key);
    if (!obj_.contains(key) || obj_.at(key).is_null()) return nullptr;
    return &obj_.at(key);
  }

  std::string path_of(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  // Call once every field has been read.
  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!used_.count(key)) fail(path_of(key), ": unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  template <typename T>
  T convert(const std::string& key) {
    const Json& v = obj_.at(key);
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (v.is_number_integer() && v.template get<long long>() < 0) {
          fail(path_of(key), ": must be non-negative");
        }
        if (!v.is_number_integer()) fail(path_of(key), ": expected an integer");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) fail(path_of(key), ": expected an integer");
      }
      return v.template get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(path_of(key), ": ", e.what());
    }
  }

  const Json& obj_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace audioret
