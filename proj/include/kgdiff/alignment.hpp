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

#ifndef KGDIFF_ALIGNMENT_HPP_
#define KGDIFF_ALIGNMENT_HPP_

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "kgdiff/common.hpp"
#include "kgdiff/graph.hpp"
#include "kgdiff/vocab.hpp"

namespace kgdiff {

// Surface forms per graph element. aliases[e] belongs to elements[e]; the
// first alias is the canonical form (lowercase, underscores as spaces).
struct AliasTable {
  std::vector<Element> elements;
  std::vector<std::vector<std::string>> aliases;
  int k = 0;

  bool empty() const {
    return std::all_of(aliases.begin(), aliases.end(), [](const auto& a) { return a.empty(); });
  }
};

// User aliases keyed by element label as written in the graph.
using UserAliases = std::vector<std::pair<std::string, std::string>>;

// "element<TAB>alias" lines.
inline UserAliases load_alias_file(std::istream& in) {
  UserAliases out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim_ws(line).empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("alias file line " + std::to_string(lineno) + ": missing tab");
    out.emplace_back(std::string(text::trim_ws(line.substr(0, tab))), std::string(text::trim_ws(line.substr(tab + 1))));
  }
  return out;
}

inline std::string alias_form(std::string_view s) {
  std::string lowered = text::to_lower(s);
  std::replace(lowered.begin(), lowered.end(), '_', ' ');
  return text::join(text::split_ws(lowered), " ");
}

// Canonical form, its punctuation-free variant, then user aliases; at most
// k distinct forms per element.
inline AliasTable alias_table(std::vector<Element> elements, int k, const UserAliases& extra = {},
                              std::vector<std::string>* warnings = nullptr) {
  if (k < 1) throw UsageError("expand_aliases: k must be >= 1");
  AliasTable table;
  table.k = k;
  table.elements = std::move(elements);
  table.aliases.resize(table.elements.size());
  std::vector<std::set<std::vector<std::string>>> seen(table.elements.size());

  auto push = [&](size_t e, const std::string& raw) {
    std::string form = alias_form(raw);
    auto keys = text::phrase_keys(form);
    if (keys.empty()) return;
    if (static_cast<int>(table.aliases[e].size()) >= k) return;
    if (seen[e].insert(keys).second) table.aliases[e].push_back(form);
  };

  std::map<std::string, size_t> by_label;
  for (size_t e = 0; e < table.elements.size(); ++e) {
    by_label.emplace(text::normalize_phrase(table.elements[e].label), e);
  }
  std::vector<std::vector<std::string>> user(table.elements.size());
  for (const auto& [label, alias] : extra) {
    auto it = by_label.find(text::normalize_phrase(label));
    if (it == by_label.end()) {
      if (warnings) warnings->push_back("alias for unknown element '" + label + "' ignored");
      continue;
    }
    user[it->second].push_back(alias);
  }

  for (size_t e = 0; e < table.elements.size(); ++e) {
    const std::string canonical = alias_form(table.elements[e].label);
    push(e, canonical);
    push(e, text::remove_punct(canonical));
    for (const auto& a : user[e]) push(e, a);
  }
  return table;
}

inline AliasTable expand_aliases(const KnowledgeGraph& g, int k, const UserAliases& extra = {},
                                 std::vector<std::string>* warnings = nullptr) {
  return alias_table(g.elements(), k, extra, warnings);
}

struct Link {
  size_t start = 0;  // [start, end) token positions
  size_t end = 0;
  int element = -1;
  friend bool operator==(const Link&, const Link&) = default;
  friend auto operator<=>(const Link&, const Link&) = default;
};

struct AlignmentSet {
  std::vector<Link> links;  // sorted by start, non-overlapping

  size_t size() const { return links.size(); }
  bool empty() const { return links.empty(); }

  std::vector<bool> aligned_positions(size_t n) const {
    std::vector<bool> out(n, false);
    for (const auto& l : links) {
      for (size_t i = l.start; i < l.end && i < n; ++i) out[i] = true;
    }
    return out;
  }
};

// Greedy left-to-right longest match of alias key sequences over word keys.
// Empty keys (pure punctuation, markers) never match. A surface form shared
// by several elements links to the element that comes first in triple order.
inline AlignmentSet detect_and_link_keys(const std::vector<std::string>& keys, const AliasTable& table) {
  std::map<std::vector<std::string>, int> lexicon;
  size_t longest = 0;
  for (size_t e = 0; e < table.aliases.size(); ++e) {
    for (const auto& a : table.aliases[e]) {
      auto ks = text::phrase_keys(a);
      if (ks.empty()) continue;
      lexicon.emplace(ks, static_cast<int>(e));  // first (earliest element) wins
      longest = std::max(longest, ks.size());
    }
  }
  AlignmentSet out;
  size_t p = 0;
  while (p < keys.size()) {
    bool matched = false;
    const size_t max_len = std::min(longest, keys.size() - p);
    for (size_t len = max_len; len >= 1 && !matched; --len) {
      std::vector<std::string> window(keys.begin() + static_cast<long>(p), keys.begin() + static_cast<long>(p + len));
      if (std::any_of(window.begin(), window.end(), [](const auto& w) { return w.empty(); })) continue;
      auto it = lexicon.find(window);
      if (it != lexicon.end()) {
        out.links.push_back({p, p + len, it->second});
        p += len;
        matched = true;
      }
    }
    if (!matched) ++p;
  }
  return out;
}

inline std::vector<std::string> word_keys(const std::vector<std::string>& words) {
  std::vector<std::string> keys;
  keys.reserve(words.size());
  for (const auto& w : words) keys.push_back(is_reserved_token(w) ? std::string() : text::word_key(w));
  return keys;
}

// Positions refer to whitespace words of `text`.
inline AlignmentSet detect_and_link(std::string_view text_in, const AliasTable& table) {
  return detect_and_link_keys(word_keys(text::split_ws(text_in)), table);
}

// Positions refer to token positions of `seq`; [PAD] positions never match.
inline AlignmentSet detect_and_link(const TokenSequence& seq, const Vocab& vocab, const AliasTable& table) {
  std::vector<std::string> words;
  for (size_t i = 0; i < seq.length(); ++i) words.push_back(vocab.token(seq.ids[i]));
  return detect_and_link_keys(word_keys(words), table);
}

struct AlignmentReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double token_coverage = 0.0;    // fraction of non-[PAD] tokens inside a predicted span
  double node_coverage = 0.0;     // fraction of graph elements with a predicted link
  double alignment_size = 0.0;    // |A| (number of predicted links)

  // Raw counts; merging reports sums these.
  size_t pred_correct = 0, pred_total = 0;
  size_t gold_found = 0, gold_total = 0;
  size_t tokens_covered = 0, tokens_total = 0;
  size_t nodes_covered = 0, nodes_total = 0;
  size_t examples = 0;

  void finalize() {
    precision = pred_total ? static_cast<double>(pred_correct) / static_cast<double>(pred_total)
                           : (gold_total ? 0.0 : 1.0);
    recall = gold_total ? static_cast<double>(gold_found) / static_cast<double>(gold_total)
                        : (pred_total ? 0.0 : 1.0);
    f1 = (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    token_coverage = tokens_total ? static_cast<double>(tokens_covered) / static_cast<double>(tokens_total) : 0.0;
    node_coverage = nodes_total ? static_cast<double>(nodes_covered) / static_cast<double>(nodes_total) : 0.0;
    alignment_size = examples ? static_cast<double>(pred_total) / static_cast<double>(examples) : 0.0;
  }

  void merge(const AlignmentReport& o) {
    pred_correct += o.pred_correct;
    pred_total += o.pred_total;
    gold_found += o.gold_found;
    gold_total += o.gold_total;
    tokens_covered += o.tokens_covered;
    tokens_total += o.tokens_total;
    nodes_covered += o.nodes_covered;
    nodes_total += o.nodes_total;
    examples += o.examples;
    finalize();
  }
};

inline bool spans_overlap(const Link& a, const Link& b) { return a.start < b.end && b.start < a.end; }

// A predicted link is correct when it overlaps a gold span linked to the same
// element; a gold link is found when some predicted link matches it.
inline AlignmentReport score_alignment(const AlignmentSet& pred, const AlignmentSet& gold, size_t n_tokens,
                                       const KnowledgeGraph& g) {
  const size_t n_elements = g.elements().size();
  for (const auto* set : {&pred, &gold}) {
    for (const auto& l : set->links) {
      if (l.start >= l.end || l.end > n_tokens) {
        throw DataError("alignment span [" + std::to_string(l.start) + "," + std::to_string(l.end) +
                        ") out of range for " + std::to_string(n_tokens) + " tokens");
      }
      if (l.element < 0 || static_cast<size_t>(l.element) >= n_elements) {
        throw DataError("alignment element id " + std::to_string(l.element) + " not in graph");
      }
    }
  }
  AlignmentReport r;
  r.examples = 1;
  r.pred_total = pred.size();
  r.gold_total = gold.size();
  auto matches = [](const Link& a, const Link& b) { return a.element == b.element && spans_overlap(a, b); };
  for (const auto& p : pred.links) {
    if (std::any_of(gold.links.begin(), gold.links.end(), [&](const Link& q) { return matches(p, q); })) ++r.pred_correct;
  }
  for (const auto& q : gold.links) {
    if (std::any_of(pred.links.begin(), pred.links.end(), [&](const Link& p) { return matches(p, q); })) ++r.gold_found;
  }
  std::vector<bool> covered(n_tokens, false);
  std::set<int> nodes;
  for (const auto& p : pred.links) {
    for (size_t i = p.start; i < p.end; ++i) covered[i] = true;
    nodes.insert(p.element);
  }
  r.tokens_total = n_tokens;
  r.tokens_covered = static_cast<size_t>(std::count(covered.begin(), covered.end(), true));
  r.nodes_total = n_elements;
  r.nodes_covered = nodes.size();
  r.finalize();
  return r;
}

inline AlignmentReport score_alignment(const AlignmentSet& pred, const AlignmentSet& gold, const TokenSequence& s,
                                       const KnowledgeGraph& g) {
  return score_alignment(pred, gold, s.length(), g);
}

// Gold alignments: one object per line, {example_id, links:[{start,end,element}]}
// where element is the element label as written in the graph.
struct GoldLink {
  size_t start = 0;
  size_t end = 0;
  std::string element;
};

using GoldAlignments = std::map<std::string, std::vector<GoldLink>>;

inline GoldAlignments load_gold_alignments(std::istream& in) {
  GoldAlignments out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim_ws(line).empty()) continue;
    try {
      auto obj = nlohmann::json::parse(line);
      auto id_it = obj.at("example_id");
      std::string id = id_it.is_string() ? id_it.get<std::string>() : id_it.dump();
      auto& links = out[id];
      for (const auto& l : obj.at("links")) {
        links.push_back({l.at("start").get<size_t>(), l.at("end").get<size_t>(), l.at("element").get<std::string>()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("gold alignment line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline AlignmentSet resolve_gold(const std::vector<GoldLink>& links, const KnowledgeGraph& g) {
  const auto elements = g.elements();
  AlignmentSet out;
  for (const auto& l : links) {
    const std::string key = text::normalize_phrase(l.element);
    int found = -1;
    for (size_t e = 0; e < elements.size(); ++e) {
      if (text::normalize_phrase(elements[e].label) == key) {
        found = static_cast<int>(e);
        break;
      }
    }
    if (found < 0) throw DataError("gold link references unknown element '" + l.element + "'");
    out.links.push_back({l.start, l.end, found});
  }
  std::sort(out.links.begin(), out.links.end());
  return out;
}

inline nlohmann::json alignment_to_json(const std::string& example_id, const AlignmentSet& set,
                                        const std::vector<Element>& elements) {
  nlohmann::json links = nlohmann::json::array();
  for (const auto& l : set.links) {
    links.push_back({{"start", l.start}, {"end", l.end}, {"element", elements[static_cast<size_t>(l.element)].label}});
  }
  return nlohmann::json{{"example_id", example_id}, {"links", links}};
}

}  // namespace kgdiff

#endif  // KGDIFF_ALIGNMENT_HPP_
