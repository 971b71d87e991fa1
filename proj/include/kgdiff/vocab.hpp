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

#ifndef KGDIFF_VOCAB_HPP_
#define KGDIFF_VOCAB_HPP_

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgdiff/common.hpp"
#include "kgdiff/graph.hpp"

namespace kgdiff {

// Reserved ids are fixed; [PAD] must stay 0.
inline constexpr int kPadId = 0;
inline constexpr int kHeadId = 1;
inline constexpr int kRelId = 2;
inline constexpr int kTailId = 3;
inline constexpr int kSepId = 4;
inline constexpr int kUnkId = 5;
inline constexpr int kNumReserved = 5;  // the five markers; [UNK] is not a marker

class Vocab {
 public:
  Vocab() {
    for (auto tok : {kPad, kHead, kRel, kTail, kSep, kUnk}) add(std::string(tok));
  }

  int size() const { return static_cast<int>(tokens_.size()); }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  // Id for an already-normalized token; unknown tokens map to [UNK].
  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw DataError("token id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<size_t>(id)];
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  // Adds a token if absent and returns its id.
  int add(const std::string& token) {
    auto [it, inserted] = index_.emplace(token, size());
    if (inserted) tokens_.push_back(token);
    return it->second;
  }

  uint64_t fingerprint() const {
    std::ostringstream os;
    save(os);
    return fnv1a(os.str());
  }

  // "token<TAB>id" lines sorted by id.
  void save(std::ostream& out) const {
    for (int i = 0; i < size(); ++i) out << tokens_[static_cast<size_t>(i)] << '\t' << i << '\n';
  }

  static Vocab load(std::istream& in) {
    Vocab v;
    v.tokens_.clear();
    v.index_.clear();
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto tab = line.rfind('\t');
      if (tab == std::string::npos) throw DataError("vocab line " + std::to_string(lineno) + ": missing tab");
      std::string tok = line.substr(0, tab);
      auto id = text::parse_int(std::string_view(line).substr(tab + 1));
      if (id != v.size()) throw DataError("vocab line " + std::to_string(lineno) + ": ids must be dense and sorted");
      if (v.index_.count(tok)) throw DataError("vocab line " + std::to_string(lineno) + ": duplicate token");
      v.add(tok);
    }
    const std::string reserved[] = {std::string(kPad), std::string(kHead), std::string(kRel),
                                    std::string(kTail), std::string(kSep), std::string(kUnk)};
    for (int i = 0; i < 6; ++i) {
      if (v.size() <= i || v.tokens_[static_cast<size_t>(i)] != reserved[i]) {
        throw DataError("vocab: reserved token " + reserved[i] + " must have id " + std::to_string(i));
      }
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Lowercases and splits on whitespace; marker tokens stay atomic and are
// returned in their canonical upper-case spelling.
inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  for (auto& w : text::split_ws(s)) {
    std::string lw = text::to_lower(w);
    bool marker = false;
    for (auto m : {kPad, kHead, kRel, kTail, kSep, kUnk}) {
      if (lw == text::to_lower(m)) {
        out.emplace_back(m);
        marker = true;
        break;
      }
    }
    if (!marker) out.push_back(std::move(lw));
  }
  return out;
}

inline bool is_reserved_token(const std::string& tok) {
  for (auto m : {kPad, kHead, kRel, kTail, kSep, kUnk}) {
    if (tok == m) return true;
  }
  return false;
}

// Word types with frequency >= min_count, most frequent first (ties in
// lexicographic order), after the reserved block.
inline Vocab build_vocab(const std::vector<std::string>& corpus, int min_count) {
  if (corpus.empty()) throw UsageError("build_vocab: empty corpus");
  if (min_count < 1) throw UsageError("build_vocab: min_count must be >= 1");
  std::map<std::string, long> counts;
  for (const auto& doc : corpus) {
    for (auto& tok : tokenize(doc)) {
      if (!is_reserved_token(tok)) ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, long>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (auto& [tok, n] : kept) v.add(tok);
  return v;
}

struct TokenSequence {
  std::vector<int> ids;
  std::vector<bool> is_pad;

  size_t size() const { return ids.size(); }

  // Number of non-[PAD] positions; padding is always a suffix.
  size_t length() const {
    size_t n = 0;
    while (n < ids.size() && !is_pad[n]) ++n;
    return n;
  }

  static TokenSequence from_ids(std::vector<int> ids, size_t n_max) {
    ids.resize(std::min(ids.size(), n_max));
    TokenSequence s;
    s.ids = std::move(ids);
    s.ids.resize(n_max, kPadId);
    s.is_pad.resize(n_max);
    bool padding = false;
    for (size_t i = 0; i < n_max; ++i) {
      if (s.ids[i] == kPadId) padding = true;
      if (padding) s.ids[i] = kPadId;
      s.is_pad[i] = padding;
    }
    return s;
  }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

inline TokenSequence encode(std::string_view s, const Vocab& v, size_t n_max) {
  if (n_max < 1) throw UsageError("encode: N_max must be >= 1");
  std::vector<int> ids;
  for (auto& tok : tokenize(s)) {
    if (ids.size() == n_max) break;
    if (tok == kPad) break;
    ids.push_back(v.id(tok));
  }
  return TokenSequence::from_ids(std::move(ids), n_max);
}

// Unpadded ids, for variable-length inputs such as serialized graphs.
inline std::vector<int> encode_ids(std::string_view s, const Vocab& v) {
  std::vector<int> ids;
  for (auto& tok : tokenize(s)) {
    if (tok != kPad) ids.push_back(v.id(tok));
  }
  return ids;
}

inline std::vector<std::string> decode_tokens(const TokenSequence& seq, const Vocab& v) {
  std::vector<std::string> out;
  for (size_t i = 0; i < seq.size(); ++i) {
    if (!seq.is_pad[i]) out.push_back(v.token(seq.ids[i]));
  }
  return out;
}

inline std::string decode(const TokenSequence& seq, const Vocab& v) { return text::join(decode_tokens(seq, v), " "); }

}  // namespace kgdiff

#endif  // KGDIFF_VOCAB_HPP_
