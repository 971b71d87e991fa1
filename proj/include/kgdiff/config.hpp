// Copyright 2026 The kgdiff Authors.
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

#ifndef KGDIFF_CONFIG_HPP_
#define KGDIFF_CONFIG_HPP_

#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "kgdiff/common.hpp"

namespace kgdiff {

namespace detail {

template <typename F>
auto config_checked(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const DataError& e) {
    throw UsageError("config '" + key + "': " + e.what());
  }
}

}  // namespace detail

// Flat "section.key=value" settings. Blank lines and lines starting with
// '#' are ignored; later assignments override earlier ones.
class ConfigMap {
 public:
  static ConfigMap parse(std::istream& in) {
    ConfigMap c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto body = text::trim_ws(line);
      if (body.empty() || body.front() == '#') continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) {
        throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
      }
      const auto key = std::string(text::trim_ws(body.substr(0, eq)));
      if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
      c.set(key, std::string(text::trim_ws(body.substr(eq + 1))));
    }
    return c;
  }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
  }

  std::string str() const;

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  void set(const std::string& key, double value) { values_[key] = text::format_double(value); }
  void set(const std::string& key, long long value) { values_[key] = std::to_string(value); }
  void set(const std::string& key, int value) { values_[key] = std::to_string(value); }
  void set(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  // Merges `o` over this map.
  void update(const ConfigMap& o) {
    for (const auto& [k, v] : o.values_) values_[k] = v;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  std::string get(const std::string& key, const char* fallback) const { return get(key, std::string(fallback)); }
  double get(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : detail::config_checked(key, [&] { return text::parse_double(it->second); });
  }
  int get(const std::string& key, int fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback
                               : detail::config_checked(key, [&] { return static_cast<int>(text::parse_int(it->second)); });
  }
  long long get(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : detail::config_checked(key, [&] { return text::parse_int(it->second); });
  }
  bool get(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto v = text::to_lower(it->second);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("config '" + key + "': expected a boolean");
  }
  std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    std::string item;
    for (char c : it->second + ",") {
      if (c == ',') {
        if (!text::trim_ws(item).empty()) out.push_back(detail::config_checked(key, [&] { return text::parse_double(item); }));
        item.clear();
      } else {
        item += c;
      }
    }
    return out;
  }

  // Keys present here but absent from `known`.
  std::vector<std::string> unknown_keys(const std::set<std::string>& known) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
      if (!known.count(k)) out.push_back(k);
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

inline std::string ConfigMap::str() const {
  std::string s;
  for (const auto& [k, v] : values_) s += k + '=' + v + '\n';
  return s;
}

}  // namespace kgdiff

#endif  // KGDIFF_CONFIG_HPP_
