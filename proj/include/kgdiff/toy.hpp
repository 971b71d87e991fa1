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

#ifndef KGDIFF_TOY_HPP_
#define KGDIFF_TOY_HPP_

#include <algorithm>
#include <array>
#include <set>
#include <string>
#include <vector>

#include "kgdiff/alignment.hpp"
#include "kgdiff/common.hpp"
#include "kgdiff/graph.hpp"
#include "kgdiff/schedule.hpp"

namespace kgdiff::toy {

// ---- worked noising example (T = 2000, one hard aligned token) -----------

inline constexpr int kNoisingT = 2000;
inline constexpr int kNoisingWindow = 200;
inline constexpr double kNoisingLmin = 0.03;
inline constexpr double kNoisingLmax = 0.20;

inline constexpr std::array<int, 10> kSampleSteps{1, 100, 300, 600, 900, 1200, 1500, 1700, 1850, 2000};
inline constexpr std::array<double, 10> kBaselineAbar{0.999, 0.980, 0.940, 0.880, 0.780,
                                                      0.650, 0.520, 0.430, 0.360, 0.300};
inline constexpr std::array<double, 10> kBaselineSnr{999.0, 49.0, 15.7, 7.33, 3.55, 1.86, 1.08, 0.75, 0.56, 0.43};
inline constexpr std::array<double, 10> kDifficulty{0.020, 0.030, 0.050, 0.082, 0.078,
                                                    0.115, 0.160, 0.155, 0.185, 0.200};
inline constexpr std::array<double, 10> kAdaptiveAbar{0.999, 0.982, 0.947, 0.892, 0.804,
                                                      0.683, 0.555, 0.462, 0.392, 0.300};
inline constexpr std::array<int, 7> kSnrSteps{600, 900, 1200, 1500, 1700, 1850, 2000};
inline constexpr std::array<double, 7> kAdaptiveSnr{8.25, 4.10, 2.15, 1.25, 0.86, 0.64, 0.43};

// Tabulated window rows: m, alpha at t_{m-1}, alpha at t_m, mean difficulty,
// listed coefficient.
struct WindowRow {
  int m;
  double alpha_start;
  double alpha_end;
  double difficulty;
  double alpha_listed;
};

inline constexpr std::array<WindowRow, 7> kWindowRows{{
    {2, 0.9989, 0.9986, 0.045, 0.9988},
    {4, 0.9984, 0.9980, 0.080, 0.9983},
    {5, 0.9980, 0.9976, 0.095, 0.9979},
    {7, 0.9971, 0.9962, 0.130, 0.9969},
    {8, 0.9962, 0.9947, 0.155, 0.9958},
    {9, 0.9947, 0.9924, 0.175, 0.9941},
    {10, 0.9924, 0.9896, 0.195, 0.9918},
}};

inline CumulativeSchedule noising_baseline() {
  std::vector<GridPoint> grid;
  for (size_t k = 0; k < kSampleSteps.size(); ++k) grid.push_back({kSampleSteps[k], kBaselineAbar[k]});
  return table_schedule(grid, kNoisingT);
}

// Difficulty of the hard token at every t, linear between sampled steps.
inline DifficultyProfile noising_profile() {
  DifficultyProfile p;
  p.count = 1.0;
  p.loss.assign(kNoisingT + 1, 0.0);
  p.loss[0] = kDifficulty[0];
  for (int t = 1; t <= kNoisingT; ++t) {
    size_t k = 0;
    while (k + 1 < kSampleSteps.size() && kSampleSteps[k + 1] < t) ++k;
    if (t <= kSampleSteps[0]) {
      p.loss[static_cast<size_t>(t)] = kDifficulty[0];
      continue;
    }
    const double t0 = kSampleSteps[k], t1 = kSampleSteps[k + 1];
    p.loss[static_cast<size_t>(t)] = kDifficulty[k] + (kDifficulty[k + 1] - kDifficulty[k]) * (t - t0) / (t1 - t0);
  }
  return p;
}

struct NoisingResult {
  CumulativeSchedule baseline;
  std::vector<double> window_loss;  // 1..M
  std::vector<double> alpha;        // per-step, 1..T
  CumulativeSchedule adaptive;
  WindowSpec spec;
};

// Runs the window mapping for the hard token with the fixed extrema.
inline NoisingResult run_noising_example(const MappingConfig& cfg = {}) {
  NoisingResult r{noising_baseline(), {}, {}, CumulativeSchedule::from_values({1.0}),
                  WindowSpec::make(kNoisingT, kNoisingWindow)};
  r.window_loss = window_means(noising_profile(), r.spec);
  const std::vector<double> lmin(r.window_loss.size(), kNoisingLmin), lmax(r.window_loss.size(), kNoisingLmax);
  r.alpha = adaptive_coefficients(r.baseline, r.window_loss, lmin, lmax, r.spec, cfg);
  r.adaptive = from_per_step(r.alpha);
  return r;
}

// ---- worked alignment example -------------------------------------------

struct AlignmentExample {
  KnowledgeGraph graph;
  std::string sentence;
  UserAliases aliases;
  std::vector<GoldLink> gold;
};

inline AlignmentExample usa_example() {
  AlignmentExample ex;
  ex.graph = KnowledgeGraph({Triple::make("USA", "hosted", "1994_FIFA_World_Cup"),
                             Triple::make("USA", "capital", "Washington_D.C."),
                             Triple::make("1994_FIFA_World_Cup", "top_scorer", "Hristo_Stoichkov")});
  ex.sentence =
      "The United States hosted the 1994 FIFA World Cup; its capital is Washington, D.C., and the tournament's "
      "top scorer was Hristo Stoichkov";
  ex.aliases = {{"USA", "USA"},
                {"USA", "U.S."},
                {"USA", "United States"},
                {"USA", "United States of America"},
                {"1994_FIFA_World_Cup", "1994 FIFA World Cup"},
                {"1994_FIFA_World_Cup", "1994 World Cup"},
                {"Washington_D.C.", "Washington, D.C."},
                {"Washington_D.C.", "Washington DC"},
                {"Hristo_Stoichkov", "Hristo Stoichkov"},
                {"Hristo_Stoichkov", "Stoichkov"}};
  ex.gold = {{1, 3, "USA"},         {3, 4, "hosted"},  {5, 9, "1994_FIFA_World_Cup"}, {10, 11, "capital"},
             {12, 14, "Washington_D.C."}, {17, 19, "top_scorer"}, {20, 22, "Hristo_Stoichkov"}};
  return ex;
}

// ---- synthetic graph-to-text corpus -------------------------------------

enum class Kind { kPerson, kCity, kCountry, kOrg };

struct Relation {
  const char* label;
  Kind head;
  Kind tail;
  const char* middle;  // text between head and tail mentions
};

inline const std::vector<Relation>& relations() {
  static const std::vector<Relation> r{
      {"born_in", Kind::kPerson, Kind::kCity, "was born in"},
      {"works_for", Kind::kPerson, Kind::kOrg, "works for"},
      {"lives_in", Kind::kPerson, Kind::kCountry, "lives in"},
      {"located_in", Kind::kCity, Kind::kCountry, "is located in"},
      {"based_in", Kind::kOrg, Kind::kCity, "is based in"},
  };
  return r;
}

inline const std::vector<std::string>& entities(Kind k) {
  static const std::vector<std::string> person{"Ada_Moss",   "Ben_Hale",  "Cora_Vance", "Dev_Patel",
                                               "Eva_Stone",  "Finn_Ross", "Gia_Lund",   "Hugo_Berg",
                                               "Iris_Nolan", "Jon_Reyes", "Kai_Olsen",  "Lena_Frey"};
  static const std::vector<std::string> city{"Oslo",  "Lyon",  "Kyoto", "Lima",  "Cairo",
                                             "Perth", "Quito", "Turin", "Bergen"};
  static const std::vector<std::string> country{"Norway", "France", "Japan", "Peru", "Egypt", "Chile", "Italy"};
  static const std::vector<std::string> org{"Acme_Corp", "Blue_Labs", "Nova_Bank", "Orbit_Media", "Delta_Foods"};
  switch (k) {
    case Kind::kPerson: return person;
    case Kind::kCity: return city;
    case Kind::kCountry: return country;
    case Kind::kOrg: return org;
  }
  return person;
}

inline std::string surface(const std::string& label) {
  std::string s = label;
  std::replace(s.begin(), s.end(), '_', ' ');
  return text::to_lower(s);
}

// All entity labels the generator can emit.
inline std::vector<std::string> entity_lexicon() {
  std::vector<std::string> out;
  for (auto k : {Kind::kPerson, Kind::kCity, Kind::kCountry, Kind::kOrg}) {
    const auto& e = entities(k);
    out.insert(out.end(), e.begin(), e.end());
  }
  return out;
}

// Realizes a graph as "h middle t" clauses joined by "and", ending in " .".
inline std::string realize(const KnowledgeGraph& g) {
  std::string out;
  for (size_t i = 0; i < g.size(); ++i) {
    const auto& tr = g.triples()[i];
    const char* middle = nullptr;
    for (const auto& r : relations()) {
      if (tr.rel == r.label) middle = r.middle;
    }
    if (middle == nullptr) throw DataError("toy: unknown relation '" + tr.rel + "'");
    if (i > 0) out += " and ";
    out += surface(tr.head) + " " + middle + " " + surface(tr.tail);
  }
  return out + " .";
}

inline std::string pick(Kind k, Rng& rng) {
  const auto& e = entities(k);
  return e[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(e.size()) - 1))];
}

// n distinct pairs of one or two chained triples. The second triple, when
// present, starts from the first triple's tail if a relation allows it.
inline std::vector<Example> make_corpus(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> out;
  std::set<std::string> seen;
  const auto& rels = relations();
  size_t attempts = 0;
  while (out.size() < n) {
    if (++attempts > n * 1000) throw std::runtime_error("toy: could not draw enough distinct pairs");
    const auto& r1 = rels[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(rels.size()) - 1))];
    std::vector<Triple> triples{Triple::make(pick(r1.head, rng), r1.label, pick(r1.tail, rng))};
    if (rng.uniform() < 0.5) {
      std::vector<const Relation*> next;
      for (const auto& r : rels) {
        if (r.head == r1.tail) next.push_back(&r);
      }
      if (!next.empty()) {
        const auto* r2 = next[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(next.size()) - 1))];
        triples.push_back(Triple::make(triples[0].tail, r2->label, pick(r2->tail, rng)));
      }
    }
    Example ex;
    ex.graph = KnowledgeGraph(std::move(triples));
    ex.text = realize(ex.graph);
    if (!seen.insert(serialize_graph(ex.graph)).second) continue;
    ex.id = "toy-" + std::to_string(out.size());
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace kgdiff::toy

#endif  // KGDIFF_TOY_HPP_
