/* Copyright 2026 The paramaug Authors. All Rights Reserved.
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
    http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Strict JSON readers shared by the descriptor and config parsers.

#pragma once

#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

#include "paramaug/error.hpp"

namespace paramaug::detail {

using json = nlohmann::json;

inline std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

inline std::string index_path(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

inline void read(const json& j, const std::string& path, std::size_t& out) {
  if (!j.is_number_integer() || (j.is_number_integer() && j.get<long long>() < 0))
    throw ValidationError(path, "expected a non-negative integer");
  out = j.get<std::size_t>();
}

inline void read(const json& j, const std::string& path, double& out) {
  if (!j.is_number()) throw ValidationError(path, "expected a number");
  out = j.get<double>();
}

inline void read(const json& j, const std::string& path, bool& out) {
  if (!j.is_boolean()) throw ValidationError(path, "expected true or false");
  out = j.get<bool>();
}

inline void read(const json& j, const std::string& path, std::string& out) {
  if (!j.is_string()) throw ValidationError(path, "expected a string");
  out = j.get<std::string>();
}

// Strict object reader: every key must be consumed, unknown keys are errors.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(path_, "expected an object");
  }

  template <typename T>
  void optional(std::string_view key, T& out) {
    seen_.insert(std::string(key));
    auto it = j_.find(std::string(key));
    if (it != j_.end()) read(*it, join(path_, key), out);
  }

  template <typename T>
  void require(std::string_view key, T& out) {
    if (!j_.contains(std::string(key)))
      throw ValidationError(join(path_, key), "missing required field");
    optional(key, out);
  }

  const json* child(std::string_view key) {
    seen_.insert(std::string(key));
    auto it = j_.find(std::string(key));
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string path(std::string_view key) const { return join(path_, key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key()))
        throw ValidationError(join(path_, it.key()), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace paramaug::detail
