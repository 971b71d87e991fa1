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

// Acceptance gate: one PASS/FAIL line per criterion. Exits nonzero if any
// criterion fails. Tolerances are fixed here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "kgdiff.hpp"

using namespace kgdiff;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// ---- 1: FGT arithmetic ------------------------------------------------------

Outcome fgt_arithmetic() {
  const double f0 = fgt_value(0.86, 1.08, 16, 0.0);
  const double f5 = fgt_value(0.86, 1.08, 16, 0.5);
  const double f1 = fgt_value(0.86, 1.08, 16, 1.0);
  const bool ok = f0 == 0.86 && std::abs(f5 - 0.831) <= 0.005 && std::abs(f1 - 0.802) <= 0.005 &&
                  std::abs(f5 - 0.83) <= 0.005 && std::abs(f1 - 0.80) <= 0.005;
  return {ok, fmt("FGT@0=%.4f FGT@0.5=%.4f FGT@1=%.4f", f0, f5, f1)};
}

// ---- 2: worked-example SNR --------------------------------------------------

Outcome toy_snr() {
  const auto base = toy::noising_baseline();
  std::string bad;
  for (size_t k = 0; k < toy::kSampleSteps.size(); ++k) {
    const int t = toy::kSampleSteps[k];
    const double s = snr(base[t]);
    const double tol = t == 1 ? 0.5 : 0.01;
    if (std::abs(s - toy::kBaselineSnr[k]) > tol) {
      bad += fmt(" baseline t=%d: %.4f vs %.4g;", t, s, toy::kBaselineSnr[k]);
    }
  }
  for (size_t k = 0; k + 1 < toy::kSnrSteps.size(); ++k) {
    const int t = toy::kSnrSteps[k];
    const auto idx = static_cast<size_t>(
        std::find(toy::kSampleSteps.begin(), toy::kSampleSteps.end(), t) - toy::kSampleSteps.begin());
    const double s = snr(toy::kAdaptiveAbar[idx]);
    if (std::abs(s - toy::kAdaptiveSnr[k]) > 0.02) bad += fmt(" adaptive t=%d: %.4f vs %.4g;", t, s, toy::kAdaptiveSnr[k]);
  }
  return {bad.empty(), bad.empty() ? "all listed cells within tolerance" : "out of tolerance:" + bad};
}

// ---- 3: reconstructed schedule shape ----------------------------------------

Outcome toy_shape() {
  const auto r = toy::run_noising_example();
  bool monotone = r.adaptive[0] == 1.0;
  for (int t = 1; t <= toy::kNoisingT; ++t) monotone = monotone && r.adaptive[t] <= r.adaptive[t - 1];
  int below = 0, first = -1, last = -1, worst_t = -1;
  double worst = 0.0;
  for (int t = 200; t < 2000; ++t) {
    const double gap = r.adaptive[t] - r.baseline[t];
    if (gap < 0.0) {
      ++below;
      if (first < 0) first = t;
      last = t;
      if (gap < worst) {
        worst = gap;
        worst_t = t;
      }
    }
  }
  std::string d = fmt("monotone=%s start=%.1f", monotone ? "yes" : "no", r.adaptive[0]);
  if (below) {
    d += fmt("; below baseline at %d steps (t=%d..%d), largest shortfall %.3g at t=%d", below, first, last, -worst,
             worst_t);
  } else {
    d += "; dominates baseline on [200, 2000)";
  }
  return {monotone && below == 0, d};
}

// ---- 4: window-schedule invariants ------------------------------------------

Outcome window_invariants() {
  Rng rng(20260401);
  const MappingFamily families[] = {MappingFamily::kLinear, MappingFamily::kPolynomial, MappingFamily::kExponential,
                                    MappingFamily::kCosine};
  size_t profiles = 0, trials = 0;
  std::string bad;
  auto fail = [&](const std::string& what) {
    if (bad.empty()) bad = what + fmt(" (trial %zu)", trials);
  };
  while (profiles < 12000) {
    ++trials;
    const int T = static_cast<int>(rng.uniform_int(10, 240));
    const auto base = sqrt_baseline(T, 1e-4 * (1.0 + 9.0 * rng.uniform()));
    const auto spec = WindowSpec::make(T, static_cast<int>(rng.uniform_int(1, T / 2)));
    MappingConfig cfg;
    cfg.family = families[trials % 4];
    cfg.p = 1.0 + 3.0 * rng.uniform();
    cfg.beta = 0.5 + 5.0 * rng.uniform();
    if (rng.uniform() < 0.3) cfg.alpha_min = 0.9 + 0.099 * rng.uniform();
    const double amin = resolve_alpha_min(base, cfg);

    const int ntok = static_cast<int>(rng.uniform_int(1, 5));
    ProfileSet prof;
    std::set<int> aligned;
    for (int k = 0; k < ntok; ++k) {
      DifficultyProfile p;
      p.count = 1.0 + static_cast<double>(rng.uniform_int(0, 4));
      p.loss.assign(static_cast<size_t>(T) + 1, 0.0);
      const double scale = 3.0 * rng.uniform();
      for (int t = 1; t <= T; ++t) p.loss[static_cast<size_t>(t)] = scale * rng.uniform();
      prof.emplace(10 + k, std::move(p));
      aligned.insert(10 + k);
    }
    profiles += static_cast<size_t>(ntok);
    const auto sched = build_token_schedules(base, aligned, prof, spec, cfg);

    if (sched.lookup(3, true).values() != base.values() || sched.lookup(10, false).values() != base.values()) {
      fail("unaligned schedule differs from baseline");
    }
    const auto ws = window_stats(prof, spec);
    std::map<int, std::vector<double>> coeff;
    for (int id : aligned) {
      const auto& s = sched.lookup(id, true);
      if (s[0] != 1.0 || !(s[T] > 0.0)) fail("schedule endpoints invalid");
      for (int t = 1; t <= T; ++t) {
        if (s[t] > s[t - 1]) fail("schedule not monotone");
      }
      coeff[id] = adaptive_coefficients(base, ws.mean.at(id), ws.lmin, ws.lmax, spec, cfg);
      const auto& a = coeff[id];
      const auto rebuilt = from_per_step(a);
      if (rebuilt.values() != s.values()) fail("schedule is not the product of its coefficients");
      const auto ba = per_step(base).alpha;
      for (int t = 1; t <= spec.end(1); ++t) {
        if (a[static_cast<size_t>(t)] != ba[static_cast<size_t>(t)]) fail("first window differs from baseline");
      }
      for (int m = 2; m <= spec.count(); ++m) {
        const double c = a[static_cast<size_t>(spec.start(m) + 1)];
        if (c < amin || c > 1.0) fail("coefficient outside clip bounds");
        for (int t = spec.start(m) + 1; t <= spec.end(m); ++t) {
          if (a[static_cast<size_t>(t)] != c) fail("coefficient not constant within window");
        }
      }
    }
    // Harder tokens never get a smaller coefficient in the same window.
    for (int m = 2; m <= spec.count(); ++m) {
      const auto mi = static_cast<size_t>(m);
      const auto t = static_cast<size_t>(spec.start(m) + 1);
      for (int i : aligned) {
        for (int j : aligned) {
          if (ws.mean.at(i)[mi] <= ws.mean.at(j)[mi] && coeff[i][t] > coeff[j][t]) fail("map not monotone in difficulty");
        }
      }
    }
  }
  return {bad.empty(), fmt("%zu profiles over %zu trials, 4 families", profiles, trials) + (bad.empty() ? "" : "; " + bad)};
}

// ---- 5: gradient check ------------------------------------------------------

Outcome gradient_check() {
  Example ex;
  ex.id = "g";
  ex.graph = KnowledgeGraph({Triple::make("a", "r", "b"), Triple::make("b", "s", "c")});
  ex.text = "a r b and c";
  const auto vocab = build_vocab(std::vector<std::string>{ex.text, serialize_graph(ex.graph)}, 1);
  const auto prepared = prepare_example(ex, vocab, 6);
  ModelConfig mc;
  mc.vocab = vocab.size();
  mc.d = 4;
  mc.heads = 2;
  mc.ffn = 8;
  mc.enc_layers = 2;
  mc.dec_layers = 2;
  mc.max_len = 6;
  mc.max_graph_len = 16;
  const auto params = DenoiserParams::init(mc, 11);

  // Aligned tokens get a schedule that differs from the baseline.
  const int T = 20;
  TokenWiseSchedule sched(sqrt_baseline(T));
  for (int id : aligned_token_ids({prepared})) {
    auto v = sched.baseline().values();
    for (auto& x : v) x = std::sqrt(x);
    sched.set(id, CumulativeSchedule::from_values(v));
  }
  Rng rng(5);
  const std::vector<const PreparedExample*> batch{&prepared};
  const std::vector<NoiseDraw> draws{sample_draw(prepared, T, mc.d, rng)};
  const auto r = loss_with_draws(batch, draws, params, sched);
  const double h = 1e-5;
  double worst = 0.0;
  size_t checked = 0;
  bool tiny_ok = true;
  for (size_t k = 0; k < params.count(); ++k) {
    for (Eigen::Index i = 0; i < params.tensors()[k].value.size(); ++i) {
      auto q = params;
      double& x = q.tensors()[k].value.data()[i];
      const double x0 = x;
      x = x0 + h;
      const double lp = loss_with_draws(batch, draws, q, sched, {1.0, false}).parts.total;
      x = x0 - h;
      const double lm = loss_with_draws(batch, draws, q, sched, {1.0, false}).parts.total;
      const double num = (lp - lm) / (2 * h);
      const double an = r.grads[k].data()[i];
      const double mag = std::max(std::abs(num), std::abs(an));
      if (mag > 1e-6) {
        worst = std::max(worst, std::abs(num - an) / mag);
      } else if (std::abs(num - an) > 1e-9) {
        tiny_ok = false;
      }
      ++checked;
    }
  }
  return {worst <= 1e-4 && tiny_ok, fmt("%zu parameters, worst relative error %.2e", checked, worst)};
}

// ---- 6: forward-noising moments ---------------------------------------------

Outcome noising_moments() {
  struct Setting {
    double abar, z0;
  };
  const Setting settings[] = {{0.999, 1.5}, {0.9, -0.7}, {0.5, 2.0}, {0.2, 0.3}, {0.01, -3.0}};
  const int n = 100000;
  std::string d;
  bool ok = true;
  uint64_t seed = 100;
  for (const auto& s : settings) {
    Rng rng(seed++);
    Matrix z0(1, 1);
    z0(0, 0) = s.z0;
    const std::vector<double> abar{s.abar};
    std::vector<double> x(n);
    for (auto& v : x) v = forward_noise(z0, abar, {false}, rng)(0, 0);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0, m4 = 0.0;
    for (double v : x) {
      const double c = v - mean;
      var += c * c;
      m4 += c * c * c * c;
    }
    var /= (n - 1);
    m4 /= n;
    const double se_mean = std::sqrt(var / n);
    const double se_var = std::sqrt((m4 - var * var) / n);
    const double zm = (mean - std::sqrt(s.abar) * s.z0) / se_mean;
    const double zv = (var - (1.0 - s.abar)) / se_var;
    ok = ok && std::abs(zm) <= 3.0 && std::abs(zv) <= 3.0;
    d += fmt(" abar=%g: %+.2f/%+.2f SE;", s.abar, zm, zv);
  }
  return {ok, "mean/var deviations" + d};
}

// ---- 7: posterior-mean identity ---------------------------------------------

Outcome posterior_identity() {
  Rng rng(77);
  double worst = 0.0;
  size_t n = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int T = static_cast<int>(rng.uniform_int(2, 2000));
    std::vector<double> alpha(static_cast<size_t>(T) + 1, 1.0);
    const double lo = 0.9 + 0.0999 * rng.uniform();
    for (int t = 1; t <= T; ++t) alpha[static_cast<size_t>(t)] = lo + (1.0 - lo) * rng.uniform() * 0.999;
    const auto s = from_per_step(alpha);
    for (int t = 1; t <= T; ++t) {
      const auto c = posterior_coefficients(s[t], s[t - 1]);
      const double want = std::sqrt(s[t - 1]);
      worst = std::max(worst, std::abs(c.u * std::sqrt(s[t]) + c.e - want) / want);
      ++n;
    }
  }
  return {worst <= 1e-12, fmt("%zu steps, worst relative error %.2e", n, worst)};
}

// ---- 8: worked alignment example --------------------------------------------

Outcome usa_alignment() {
  const auto ex = toy::usa_example();
  const auto table = expand_aliases(ex.graph, 5, ex.aliases);
  const auto pred = detect_and_link(ex.sentence, table);
  const auto gold = resolve_gold(ex.gold, ex.graph);
  const auto r = score_alignment(pred, gold, text::split_ws(ex.sentence).size(), ex.graph);
  const bool ok = pred.size() == 7 && pred.links == gold.links && r.precision == 1.0 && r.recall == 1.0 && r.f1 == 1.0;
  return {ok, fmt("%zu links, P=%.2f R=%.2f F1=%.2f", pred.size(), r.precision, r.recall, r.f1)};
}

// ---- 9: ESR edge cases ------------------------------------------------------

Outcome esr_cases() {
  const std::vector<std::string> lex{"Ada_Moss", "Oslo", "Lyon", "Kyoto"};
  const KnowledgeGraph g({Triple::make("Ada_Moss", "born_in", "Oslo")});
  const KnowledgeGraph g2({Triple::make("Ada_Moss", "born_in", "Lyon")});
  const std::string s = "ada moss was born in oslo .";
  const double same = esr(g, s, g, s, lex, {}).score;
  const double frozen = esr(g, s, g2, s, lex, {}).score;
  const double partial = esr(g, s, g2, "ada moss was born in lyon near kyoto .", lex, {}).score;
  const bool ok = same == 1.0 && frozen == 0.0 && partial == 2.0 / 3.0;
  return {ok, fmt("unchanged=%.4f graph-only=%.4f partial=%.6f", same, frozen, partial)};
}

// ---- shared toy training ----------------------------------------------------

struct ToySetup {
  std::vector<Example> data;
  Vocab vocab;
  std::vector<PreparedExample> prepared;
};

ToySetup toy_setup(size_t n, uint64_t seed) {
  ToySetup s;
  s.data = toy::make_corpus(n, seed);
  std::vector<std::string> corpus;
  for (const auto& ex : s.data) {
    corpus.push_back(ex.text);
    corpus.push_back(serialize_graph(ex.graph));
  }
  s.vocab = build_vocab(corpus, 1);
  for (const auto& ex : s.data) s.prepared.push_back(prepare_example(ex, s.vocab, 16));
  return s;
}

TrainConfig toy_config(const Vocab& vocab, int steps, uint64_t seed) {
  TrainConfig cfg;
  cfg.model.vocab = vocab.size();
  cfg.model.d = 32;
  cfg.model.heads = 4;
  cfg.model.ffn = 64;
  cfg.model.max_len = 16;
  cfg.model.max_graph_len = 24;
  cfg.T = 200;
  cfg.steps = steps;
  cfg.batch = 16;
  cfg.lr = 3e-3;
  cfg.warmup = 100;
  cfg.k_up = 1000;
  cfg.n_mc = 2;
  cfg.difficulty_stride = 10;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

TrainResult* g_overfit = nullptr;
ToySetup* g_overfit_data = nullptr;

// ---- 10: toy overfit --------------------------------------------------------

Outcome toy_overfit() {
  static ToySetup s = toy_setup(50, 2026);
  const auto cfg = toy_config(s.vocab, 3000, 1);
  const auto t0 = std::chrono::steady_clock::now();
  static TrainResult r = train(s.prepared, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  g_overfit = &r;
  g_overfit_data = &s;
  const auto& base = r.schedules.schedules.baseline();
  const auto* anchor = r.schedules.anchor ? &*r.schedules.anchor : nullptr;
  int exact = 0;
  for (size_t i = 0; i < s.data.size(); ++i) {
    Rng rng(1000 + i);
    const auto out = sample_ddpm(s.prepared[i].graph_ids, r.params, base, anchor, rng, {});
    exact += decode(out.tokens, s.vocab) == s.data[i].text;
  }
  const double frac = static_cast<double>(exact) / static_cast<double>(s.data.size());
  const bool ok = frac >= 0.9 && s.vocab.size() <= 200 && secs <= 1800.0;
  return {ok, fmt("%d/%zu exact (%.0f%%), vocab %zu, %d steps, %d schedule updates, train %.0fs", exact, s.data.size(),
                  100.0 * frac, s.vocab.size(), cfg.steps, r.schedule_updates, secs)};
}

// ---- 11: graph-aware vs baseline schedule on edited graphs -----------------

double edited_fgt(const ToySetup& s, const TrainResult& r, bool use_anchor, uint64_t seed) {
  const auto lex = toy::entity_lexicon();
  Rng edit_rng(seed);
  const auto& base = r.schedules.schedules.baseline();
  const auto* anchor = r.schedules.anchor ? &*r.schedules.anchor : nullptr;
  double sum = 0.0;
  for (size_t i = 0; i < s.data.size(); ++i) {
    const auto [g2, edit] = make_edit(s.data[i].graph, lex, edit_rng);
    const auto ids = encode_ids(serialize_graph(g2), s.vocab);
    Rng rng(5000 + i);
    const auto text = decode(sample_ddpm(ids, r.params, base, anchor, rng, {use_anchor, 0}).tokens, s.vocab);
    if (text::split_ws(text).empty()) continue;  // scores 0
    sum += fgt(extract_entity_sets(g2, text, lex, {}), 0.5);
  }
  return sum / static_cast<double>(s.data.size());
}

Outcome schedule_ablation() {
  const auto s = toy_setup(50, 2026);
  std::vector<double> aware, plain;
  std::string d;
  for (uint64_t seed : {1, 2, 3}) {
    auto cfg = toy_config(s.vocab, 2000, seed);
    cfg.k_up = 500;
    const auto ra = train(s.prepared, cfg);
    cfg.k_up = cfg.steps + 1;
    const auto rb = train(s.prepared, cfg);
    aware.push_back(edited_fgt(s, ra, true, 90 + seed));
    plain.push_back(edited_fgt(s, rb, false, 90 + seed));
    d += fmt(" seed %llu: %.3f vs %.3f;", static_cast<unsigned long long>(seed), aware.back(), plain.back());
  }
  std::sort(aware.begin(), aware.end());
  std::sort(plain.begin(), plain.end());
  const bool ok = aware[1] >= plain[1] - 0.02;
  return {ok, fmt("median FGT@0.5 graph-aware %.3f, baseline %.3f;", aware[1], plain[1]) + d};
}

// ---- 12: sampler contracts --------------------------------------------------

Outcome sampler_contracts() {
  if (g_overfit == nullptr) return {false, "toy model unavailable"};
  const auto& r = *g_overfit;
  const auto& s = *g_overfit_data;
  const auto& base = r.schedules.schedules.baseline();
  const auto* anchor = r.schedules.anchor ? &*r.schedules.anchor : nullptr;
  bool ok = true;
  std::string d;
  for (size_t i = 0; i < 5; ++i) {
    const auto& ids = s.prepared[i].graph_ids;
    for (int tp : {200, 100, 50}) {
      Rng a(40 + i), b(40 + i);
      const auto ra = sample_ddim(ids, r.params, base, anchor, tp, a);
      const auto rb = sample_ddim(ids, r.params, base, anchor, tp, b);
      ok = ok && ra.denoiser_calls == tp && rb.denoiser_calls == tp;
      ok = ok && ra.tokens.ids == rb.tokens.ids && ra.z0_hat == rb.z0_hat;
    }
    Rng c(60 + i);
    ok = ok && sample_ddpm(ids, r.params, base, anchor, c).denoiser_calls == base.steps();
  }
  d = fmt("T=%d; DDIM T'={200,100,50} call counts and bit-identical reruns checked on 5 graphs", base.steps());
  return {ok, d};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "FGT arithmetic", fgt_arithmetic},
      {2, "worked-example SNR", toy_snr},
      {3, "worked-example schedule shape", toy_shape},
      {4, "window-schedule invariants", window_invariants},
      {5, "objective gradient check", gradient_check},
      {6, "forward-noising moments", noising_moments},
      {7, "posterior-mean identity", posterior_identity},
      {8, "worked alignment example", usa_alignment},
      {9, "ESR edge cases", esr_cases},
      {10, "toy overfit", toy_overfit},
      {11, "graph-aware vs baseline schedule", schedule_ablation},
      {12, "sampler contracts", sampler_contracts},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
