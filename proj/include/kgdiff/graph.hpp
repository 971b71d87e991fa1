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

#ifndef KGDIFF_GRAPH_HPP_
#define KGDIFF_GRAPH_HPP_

#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "kgdiff/common.hpp"

namespace kgdiff {

inline constexpr std::string_view kHead = "[HEAD]";
inline constexpr std::string_view kRel = "[REL]";
inline constexpr std::string_view kTail = "[TAIL]";
inline constexpr std::string_view kSep = "[SEP]";
inline constexpr std::string_view kPad = "[PAD]";
inline constexpr std::string_view kUnk = "[UNK]";

inline constexpr std::array<std::string_view, 5> kReservedMarkers = {kHead, kRel, kTail, kSep, kPad};

// Canonical label form: surrounding whitespace trimmed, inner runs of
// whitespace collapsed to one space. Throws on empty labels and on labels
// that contain a reserved marker.
inline std::string canonical_label(std::string_view raw) {
  std::string label = text::join(text::split_ws(raw), " ");
  if (label.empty()) throw DataError("empty label");
  for (auto marker : kReservedMarkers) {
    if (label.find(marker) != std::string::npos) {
      throw DataError("label '" + label + "' contains reserved marker " + std::string(marker));
    }
  }
  return label;
}

struct Triple {
  std::string head;
  std::string rel;
  std::string tail;

  static Triple make(std::string_view h, std::string_view r, std::string_view t) {
    return Triple{canonical_label(h), canonical_label(r), canonical_label(t)};
  }

  friend bool operator==(const Triple&, const Triple&) = default;
};

enum class ElementKind { kEntity, kRelation };

// A graph element that text can mention: an entity (head or tail) or a
// relation label.
struct Element {
  ElementKind kind;
  std::string label;
  friend bool operator==(const Element&, const Element&) = default;
};

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  explicit KnowledgeGraph(std::vector<Triple> triples) : triples_(std::move(triples)) {}

  const std::vector<Triple>& triples() const { return triples_; }
  bool empty() const { return triples_.empty(); }
  size_t size() const { return triples_.size(); }

  // Distinct entities (heads and tails) in first-appearance order,
  // deduplicated by normalized label.
  std::vector<std::string> entities() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& tr : triples_) {
      for (const auto* label : {&tr.head, &tr.tail}) {
        if (seen.insert(text::normalize_phrase(*label)).second) out.push_back(*label);
      }
    }
    return out;
  }

  std::vector<std::string> relations() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& tr : triples_) {
      if (seen.insert(text::normalize_phrase(tr.rel)).second) out.push_back(tr.rel);
    }
    return out;
  }

  // Normalized entity set U_G.
  std::set<std::string> entity_keys() const {
    std::set<std::string> out;
    for (const auto& e : entities()) out.insert(text::normalize_phrase(e));
    return out;
  }

  // Entities and relations in triple order (head, rel, tail per triple),
  // first appearance wins. Index in this list is the element id.
  std::vector<Element> elements() const {
    std::vector<Element> out;
    std::set<std::pair<int, std::string>> seen;
    auto add = [&](ElementKind kind, const std::string& label) {
      if (seen.emplace(static_cast<int>(kind), text::normalize_phrase(label)).second) {
        out.push_back({kind, label});
      }
    };
    for (const auto& tr : triples_) {
      add(ElementKind::kEntity, tr.head);
      add(ElementKind::kRelation, tr.rel);
      add(ElementKind::kEntity, tr.tail);
    }
    return out;
  }

  friend bool operator==(const KnowledgeGraph&, const KnowledgeGraph&) = default;

 private:
  std::vector<Triple> triples_;
};

// "[HEAD] h [REL] r [TAIL] t" blocks joined by " [SEP] ", in triple order.
inline std::string serialize_graph(const KnowledgeGraph& g) {
  if (g.empty()) throw DataError("empty graph");
  std::string out;
  for (size_t i = 0; i < g.size(); ++i) {
    const auto& tr = g.triples()[i];
    if (i) out += " [SEP] ";
    out += "[HEAD] " + tr.head + " [REL] " + tr.rel + " [TAIL] " + tr.tail;
  }
  return out;
}

// Inverse of serialize_graph. Accepts any whitespace between tokens.
inline KnowledgeGraph parse_serialized(std::string_view s) {
  const auto tokens = text::split_ws(s);
  std::vector<Triple> triples;
  size_t i = 0;
  auto read_label = [&](std::string_view terminator_a, std::string_view terminator_b) {
    std::vector<std::string> words;
    while (i < tokens.size() && tokens[i] != terminator_a && tokens[i] != terminator_b) {
      words.push_back(tokens[i++]);
    }
    return text::join(words, " ");
  };
  auto expect = [&](std::string_view marker) {
    if (i >= tokens.size() || tokens[i] != marker) {
      throw DataError("malformed serialized graph: expected " + std::string(marker) + " at token " +
                      std::to_string(i));
    }
    ++i;
  };
  if (tokens.empty()) throw DataError("empty graph");
  while (i < tokens.size()) {
    expect(kHead);
    std::string h = read_label(kRel, kRel);
    expect(kRel);
    std::string r = read_label(kTail, kTail);
    expect(kTail);
    std::string t = read_label(kSep, kHead);
    triples.push_back(Triple::make(h, r, t));
    if (i < tokens.size()) expect(kSep);
    if (i == tokens.size() && tokens.back() == kSep) {
      throw DataError("malformed serialized graph: trailing [SEP]");
    }
  }
  return KnowledgeGraph(std::move(triples));
}

struct Example {
  std::string id;
  KnowledgeGraph graph;
  std::string text;
};

struct RecordError {
  size_t line = 0;  // 1-based
  std::string message;
};

struct ParsedDataset {
  std::vector<Example> examples;
  std::vector<RecordError> errors;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string required_string(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError(std::string("missing field '") + key + "'");
  if (!it->is_string()) throw DataError(std::string("field '") + key + "' is not a string");
  return it->get<std::string>();
}

inline Example parse_record(const nlohmann::json& obj, size_t line) {
  if (!obj.is_object()) throw DataError("record is not an object");
  Example ex;
  if (auto it = obj.find("id"); it != obj.end()) {
    ex.id = it->is_string() ? it->get<std::string>() : it->dump();
  } else {
    ex.id = std::to_string(line);
  }
  ex.text = required_string(obj, "text");
  std::vector<Triple> triples;
  if (auto it = obj.find("triples"); it != obj.end()) {
    if (!it->is_array() || it->empty()) throw DataError("field 'triples' must be a non-empty array");
    for (const auto& item : *it) {
      if (!item.is_array() || item.size() != 3 || !item[0].is_string() || !item[1].is_string() ||
          !item[2].is_string()) {
        throw DataError("each triple must be an array of three strings");
      }
      triples.push_back(
          Triple::make(item[0].get<std::string>(), item[1].get<std::string>(), item[2].get<std::string>()));
    }
  } else {
    triples.push_back(Triple::make(required_string(obj, "subject"), required_string(obj, "predicate"),
                                   required_string(obj, "object")));
  }
  ex.graph = KnowledgeGraph(std::move(triples));
  return ex;
}

}  // namespace detail

// Line-delimited JSON records. Blank lines are skipped; malformed records
// are reported with their line number and do not stop parsing.
inline ParsedDataset parse_dataset(std::istream& in) {
  ParsedDataset out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim_ws(line).empty()) continue;
    try {
      auto obj = nlohmann::json::parse(line);
      out.examples.push_back(detail::parse_record(obj, lineno));
    } catch (const nlohmann::json::exception& e) {
      out.errors.push_back({lineno, std::string("invalid JSON: ") + e.what()});
    } catch (const DataError& e) {
      out.errors.push_back({lineno, e.what()});
    }
  }
  if (out.examples.empty() && out.errors.empty()) out.warnings.push_back("dataset is empty");
  return out;
}

inline nlohmann::json example_to_json(const Example& ex) {
  nlohmann::json triples = nlohmann::json::array();
  for (const auto& tr : ex.graph.triples()) triples.push_back({tr.head, tr.rel, tr.tail});
  return nlohmann::json{{"id", ex.id}, {"triples", triples}, {"text", ex.text}};
}

inline void write_dataset(std::ostream& out, const std::vector<Example>& examples) {
  for (const auto& ex : examples) out << example_to_json(ex).dump() << '\n';
}

}  // namespace kgdiff

#endif  // KGDIFF_GRAPH_HPP_
