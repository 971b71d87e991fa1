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

#ifndef KGDIFF_COMMON_HPP_
#define KGDIFF_COMMON_HPP_

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace kgdiff {

// Error taxonomy. The CLI maps these onto exit codes 1, 2 and 3.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Seedable generator with a fully specified output stream. The engine is
// std::mt19937_64 (whose sequence the standard pins down); the uniform,
// integer and normal transforms are implemented here because the standard
// distributions differ between library vendors.
class Rng {
 public:
  explicit Rng(uint64_t seed = 5489u) { reseed(seed); }

  void reseed(uint64_t seed) {
    state_ = seed;
    has_spare_ = false;
    engine_.seed(seed);
  }

  uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi], unbiased by rejection.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(next_u64());
    const uint64_t limit = UINT64_MAX - (UINT64_MAX % span);
    uint64_t draw;
    do {
      draw = next_u64();
    } while (draw >= limit);
    return lo + static_cast<int64_t>(draw % span);
  }

  // Standard normal via the Box-Muller transform.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  uint64_t seed() const { return state_; }

 private:
  std::mt19937_64 engine_;
  uint64_t state_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

namespace text {

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// ASCII punctuation. Multi-byte UTF-8 sequences are never treated as
// punctuation so non-ASCII labels survive normalization intact.
inline bool is_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u) != 0;
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::string_view trim_ws(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

inline std::string strip_punct(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && is_punct(s[b])) ++b;
  while (e > b && is_punct(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string remove_punct(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (!is_punct(c)) out.push_back(c);
  }
  return out;
}

// Word-level key used for surface matching: lowercase, surrounding
// punctuation removed. "Washington," and "washington" share a key.
inline std::string word_key(std::string_view word) { return strip_punct(to_lower(word)); }

// Normalized form of a label or phrase: lowercase, underscores to spaces,
// surrounding punctuation stripped per word, whitespace collapsed. Words
// that are pure punctuation disappear.
inline std::string normalize_phrase(std::string_view s) {
  std::string lowered = to_lower(s);
  for (char& c : lowered) {
    if (c == '_') c = ' ';
  }
  std::vector<std::string> words;
  for (const auto& w : split_ws(lowered)) {
    std::string k = strip_punct(w);
    if (!k.empty()) words.push_back(std::move(k));
  }
  return join(words, " ");
}

inline std::vector<std::string> phrase_keys(std::string_view s) { return split_ws(normalize_phrase(s)); }

// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf.data(), ptr);
}

inline double parse_double(std::string_view s) {
  s = trim_ws(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline long long parse_int(std::string_view s) {
  s = trim_ws(s);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("not an integer: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace text

// 64-bit FNV-1a, used for vocabulary fingerprints.
inline uint64_t fnv1a(std::string_view data, uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace kgdiff

#endif  // KGDIFF_COMMON_HPP_
