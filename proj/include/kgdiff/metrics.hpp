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

#ifndef KGDIFF_METRICS_HPP_
#define KGDIFF_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "kgdiff/alignment.hpp"
#include "kgdiff/common.hpp"
#include "kgdiff/graph.hpp"

namespace kgdiff {

using EntitySet = std::set<std::string>;  // normalized labels

struct EntitySets {
  EntitySet ug;  // graph entities
  EntitySet us;  // entities mentioned in the text
  EntitySet hs;  // us minus ug
  size_t n_words = 0;
};

struct MetricOptions {
  int alias_k = 5;
  UserAliases aliases;
};

// Alias table over entity labels only; earlier labels win shared surface
// forms. Labels are deduplicated by normalized form.
inline AliasTable entity_table(const std::vector<std::string>& labels, const MetricOptions& opt = {}) {
  std::vector<Element> elems;
  EntitySet seen;
  for (const auto& l : labels) {
    if (seen.insert(text::normalize_phrase(l)).second) elems.push_back({ElementKind::kEntity, l});
  }
  return alias_table(std::move(elems), opt.alias_k, opt.aliases);
}

// Normalized labels of the entities linked in `s`.
inline EntitySet text_entities(std::string_view s, const AliasTable& table) {
  EntitySet out;
  for (const auto& l : detect_and_link(s, table).links) {
    out.insert(text::normalize_phrase(table.elements[static_cast<size_t>(l.element)].label));
  }
  return out;
}

inline EntitySets extract_entity_sets(const KnowledgeGraph& g, std::string_view s,
                                      const std::vector<std::string>& lexicon, const MetricOptions& opt = {}) {
  EntitySets out;
  out.ug = g.entity_keys();
  auto labels = g.entities();
  labels.insert(labels.end(), lexicon.begin(), lexicon.end());
  out.us = text_entities(s, entity_table(labels, opt));
  for (const auto& e : out.us) {
    if (!out.ug.count(e)) out.hs.insert(e);
  }
  out.n_words = text::split_ws(s).size();
  return out;
}

inline double fgt_value(double f1, double h_count, double n_words, double lambda) {
  if (lambda < 0.0) throw UsageError("fgt: lambda must be non-negative");
  if (!(n_words >= 1.0)) throw DataError("fgt: text has no words");
  return f1 * (1.0 - lambda * h_count / n_words);
}

struct FGTReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  size_t h_count = 0;
  size_t n_words = 0;
  std::map<double, double> fgt;  // lambda -> value
};

inline FGTReport fgt_report(const EntitySets& e, const std::vector<double>& lambdas) {
  if (e.n_words == 0) throw DataError("fgt: text has no words");
  FGTReport r;
  size_t inter = 0;
  for (const auto& x : e.us) inter += e.ug.count(x);
  r.precision = e.us.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(e.us.size());
  r.recall = e.ug.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(e.ug.size());
  const size_t denom = e.ug.size() + e.us.size();
  r.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(denom);
  r.h_count = e.hs.size();
  r.n_words = e.n_words;
  for (double l : lambdas) {
    r.fgt[l] = fgt_value(r.f1, static_cast<double>(r.h_count), static_cast<double>(r.n_words), l);
  }
  return r;
}

inline double fgt(const EntitySets& e, double lambda) {
  return fgt_report(e, std::vector<double>{lambda}).fgt.at(lambda);
}

inline EntitySet symmetric_difference(const EntitySet& a, const EntitySet& b) {
  EntitySet out;
  std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  return out;
}

struct ESRReport {
  EntitySet delta_g;
  EntitySet delta_t;
  double score = 0.0;
};

// |dG & dT| / |dT|; with no text change the score is 1 if the graph did not
// change either, else 0.
inline ESRReport esr_from_sets(EntitySet delta_g, EntitySet delta_t) {
  ESRReport r{std::move(delta_g), std::move(delta_t), 0.0};
  if (r.delta_t.empty()) {
    r.score = r.delta_g.empty() ? 1.0 : 0.0;
    return r;
  }
  size_t inter = 0;
  for (const auto& x : r.delta_t) inter += r.delta_g.count(x);
  r.score = static_cast<double>(inter) / static_cast<double>(r.delta_t.size());
  return r;
}

// Text entity sets use one detector over the entities of both graphs plus
// the lexicon, so both texts are read against the same universe.
inline ESRReport esr(const KnowledgeGraph& g, std::string_view s, const KnowledgeGraph& g2, std::string_view s2,
                     const std::vector<std::string>& lexicon = {}, const MetricOptions& opt = {}) {
  auto labels = g.entities();
  for (const auto& e : g2.entities()) labels.push_back(e);
  labels.insert(labels.end(), lexicon.begin(), lexicon.end());
  const auto table = entity_table(labels, opt);
  return esr_from_sets(symmetric_difference(g.entity_keys(), g2.entity_keys()),
                       symmetric_difference(text_entities(s, table), text_entities(s2, table)));
}

enum class Slot { kHead, kTail };

struct GraphEdit {
  size_t triple = 0;
  Slot slot = Slot::kHead;
  std::string old_entity;
  std::string new_entity;
};

// Replaces one slot of one uniformly chosen triple with a different lexicon
// entity. Other occurrences of the old entity are left alone.
inline std::pair<KnowledgeGraph, GraphEdit> make_edit(const KnowledgeGraph& g, const std::vector<std::string>& lexicon,
                                                      Rng& rng) {
  if (g.empty()) throw DataError("edit: empty graph");
  std::vector<std::string> pool;
  EntitySet keys;
  for (const auto& e : lexicon) {
    if (keys.insert(text::normalize_phrase(e)).second) pool.push_back(e);
  }
  if (pool.size() < 2) throw DataError("edit: lexicon needs at least two entities");
  GraphEdit ed;
  ed.triple = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(g.size()) - 1));
  ed.slot = rng.uniform_int(0, 1) == 0 ? Slot::kHead : Slot::kTail;
  auto triples = g.triples();
  auto& tr = triples[ed.triple];
  ed.old_entity = ed.slot == Slot::kHead ? tr.head : tr.tail;
  const auto old_key = text::normalize_phrase(ed.old_entity);
  std::vector<std::string> choices;
  for (const auto& e : pool) {
    if (text::normalize_phrase(e) != old_key) choices.push_back(e);
  }
  ed.new_entity = choices[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(choices.size()) - 1))];
  tr = ed.slot == Slot::kHead ? Triple::make(ed.new_entity, tr.rel, tr.tail) : Triple::make(tr.head, tr.rel, ed.new_entity);
  return {KnowledgeGraph(std::move(triples)), ed};
}

// Sentence BLEU over whitespace tokens with clipped n-gram counts against
// all references, add-one smoothing for n >= 2 and the brevity penalty
// against the closest reference length.
inline double bleu(std::string_view candidate, const std::vector<std::string>& references, int max_n = 4) {
  if (references.empty()) throw UsageError("bleu: no references");
  if (max_n < 1) throw UsageError("bleu: max n must be positive");
  const auto cand = text::split_ws(candidate);
  if (cand.empty()) return 0.0;
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : references) refs.push_back(text::split_ws(r));

  auto ngrams = [](const std::vector<std::string>& w, int n) {
    std::map<std::vector<std::string>, int> out;
    for (size_t i = 0; i + static_cast<size_t>(n) <= w.size(); ++i) {
      ++out[std::vector<std::string>(w.begin() + static_cast<long>(i), w.begin() + static_cast<long>(i) + n)];
    }
    return out;
  };

  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto c = ngrams(cand, n);
    std::map<std::vector<std::string>, int> max_ref;
    for (const auto& r : refs) {
      for (const auto& [g, k] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], k);
    }
    double clipped = 0.0, total = 0.0;
    for (const auto& [g, k] : c) {
      total += k;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) clipped += std::min(k, it->second);
    }
    if (n >= 2) {
      clipped += 1.0;
      total += 1.0;
    }
    if (clipped == 0.0 || total == 0.0) return 0.0;
    log_sum += std::log(clipped / total);
  }
  size_t ref_len = refs[0].size();
  for (const auto& r : refs) {
    const auto diff = [&](size_t L) { return L > cand.size() ? L - cand.size() : cand.size() - L; };
    if (diff(r.size()) < diff(ref_len) || (diff(r.size()) == diff(ref_len) && r.size() < ref_len)) ref_len = r.size();
  }
  const double c = static_cast<double>(cand.size());
  const double bp = cand.size() >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / c);
  return bp * std::exp(log_sum / max_n);
}

// ---- reports --------------------------------------------------------------

struct ExampleScore {
  std::string id;
  FGTReport fgt;
  std::optional<double> esr;
  std::optional<double> bleu;
};

inline nlohmann::ordered_json score_to_json(const ExampleScore& s) {
  nlohmann::ordered_json j;
  j["example_id"] = s.id;
  nlohmann::ordered_json f = nlohmann::ordered_json::object();
  for (const auto& [l, v] : s.fgt.fgt) f[text::format_double(l)] = v;
  j["fgt"] = f;
  j["precision"] = s.fgt.precision;
  j["recall"] = s.fgt.recall;
  j["f1"] = s.fgt.f1;
  j["h_count"] = s.fgt.h_count;
  j["n_words"] = s.fgt.n_words;
  if (s.esr) j["esr"] = *s.esr;
  if (s.bleu) j["bleu"] = *s.bleu;
  return j;
}

// Mean of every numeric field across the scored examples.
inline nlohmann::ordered_json summary_json(const std::vector<ExampleScore>& scores) {
  nlohmann::ordered_json j;
  j["summary"] = true;
  j["examples"] = scores.size();
  if (scores.empty()) return j;
  const double n = static_cast<double>(scores.size());
  std::map<double, double> fgt;
  double p = 0, r = 0, f1 = 0, h = 0, esr_sum = 0, bleu_sum = 0;
  size_t esr_n = 0, bleu_n = 0;
  for (const auto& s : scores) {
    for (const auto& [l, v] : s.fgt.fgt) fgt[l] += v;
    p += s.fgt.precision;
    r += s.fgt.recall;
    f1 += s.fgt.f1;
    h += static_cast<double>(s.fgt.h_count);
    if (s.esr) {
      esr_sum += *s.esr;
      ++esr_n;
    }
    if (s.bleu) {
      bleu_sum += *s.bleu;
      ++bleu_n;
    }
  }
  nlohmann::ordered_json f = nlohmann::ordered_json::object();
  for (const auto& [l, v] : fgt) f[text::format_double(l)] = v / n;
  j["fgt"] = f;
  j["precision"] = p / n;
  j["recall"] = r / n;
  j["f1"] = f1 / n;
  j["h_count"] = h / n;
  if (esr_n) j["esr"] = esr_sum / static_cast<double>(esr_n);
  if (bleu_n) j["bleu"] = bleu_sum / static_cast<double>(bleu_n);
  return j;
}

}  // namespace kgdiff

#endif  // KGDIFF_METRICS_HPP_
