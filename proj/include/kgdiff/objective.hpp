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

#ifndef KGDIFF_OBJECTIVE_HPP_
#define KGDIFF_OBJECTIVE_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "kgdiff/alignment.hpp"
#include "kgdiff/autodiff.hpp"
#include "kgdiff/graph.hpp"
#include "kgdiff/model.hpp"
#include "kgdiff/schedule.hpp"
#include "kgdiff/vocab.hpp"

namespace kgdiff {

// One encoded training pair: serialized-graph ids, padded target, and the
// positions covered by the alignment set.
struct PreparedExample {
  std::string id;
  std::vector<int> graph_ids;
  TokenSequence target;
  std::vector<bool> aligned;

  size_t length() const { return target.length(); }
};

inline PreparedExample prepare_example(const Example& ex, const Vocab& vocab, size_t n_max, int alias_k = 5,
                                       const UserAliases& aliases = {}) {
  PreparedExample p;
  p.id = ex.id;
  p.graph_ids = encode_ids(serialize_graph(ex.graph), vocab);
  p.target = encode(ex.text, vocab, n_max);
  if (p.target.length() == 0) throw DataError("example '" + ex.id + "' has an empty target");
  const auto table = expand_aliases(ex.graph, alias_k, aliases);
  p.aligned = detect_and_link(p.target, vocab, table).aligned_positions(n_max);
  return p;
}

// Vocabulary ids that occur at aligned positions anywhere in the data.
inline std::set<int> aligned_token_ids(const std::vector<PreparedExample>& data) {
  std::set<int> out;
  for (const auto& ex : data) {
    for (size_t i = 0; i < ex.length(); ++i) {
      if (ex.aligned[i]) out.insert(ex.target.ids[i]);
    }
  }
  return out;
}

inline std::vector<double> position_abar(const PreparedExample& ex, const TokenWiseSchedule& sched, int t) {
  std::vector<double> a(ex.length());
  for (size_t i = 0; i < a.size(); ++i) a[i] = sched.lookup(ex.target.ids[i], ex.aligned[i])[t];
  return a;
}

// Randomness consumed by one example in one loss evaluation.
struct NoiseDraw {
  int t = 2;
  Matrix eps_t;  // length x d
  Matrix eps_1;
};

inline NoiseDraw sample_draw(const PreparedExample& ex, int T, int d, Rng& rng) {
  NoiseDraw dr;
  dr.t = T >= 2 ? static_cast<int>(rng.uniform_int(2, T)) : 1;
  const auto n = static_cast<Eigen::Index>(ex.length());
  dr.eps_t.resize(n, d);
  dr.eps_1.resize(n, d);
  for (Eigen::Index i = 0; i < dr.eps_t.size(); ++i) dr.eps_t.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < dr.eps_1.size(); ++i) dr.eps_1.data()[i] = rng.normal();
  return dr;
}

struct LossBreakdown {
  double denoise = 0.0;
  double consistency = 0.0;
  double rounding = 0.0;
  double length = 0.0;  // auxiliary length head, not part of the e2e terms
  double total = 0.0;
};

struct LossResult {
  LossBreakdown parts;
  std::vector<Matrix> grads;  // parallel to params.tensors()
};

struct LossOptions {
  double length_weight = 1.0;
  bool compute_grads = true;
};

// e2e objective with fixed randomness: per example, denoising error at the
// drawn t, consistency error at t=1, rounding cross-entropy on g(S) with the
// gold tokens, each averaged over non-[PAD] positions; then averaged over
// the batch.
inline LossResult loss_with_draws(const std::vector<const PreparedExample*>& batch, const std::vector<NoiseDraw>& draws,
                                  const DenoiserParams& params, const TokenWiseSchedule& sched,
                                  const LossOptions& opt = {}) {
  if (batch.empty()) throw UsageError("loss: empty batch");
  ad::Tape tp(opt.compute_grads);
  BoundParams bp(tp, params);
  std::vector<ad::Var> terms;
  std::vector<double> coeffs;
  std::vector<ad::Var> den, con, rnd, len;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (size_t b = 0; b < batch.size(); ++b) {
    const auto& ex = *batch[b];
    const auto& dr = draws[b];
    const size_t n = ex.length();
    if (n == 0) throw DataError("loss: example without tokens");
    std::vector<int> ids(ex.target.ids.begin(), ex.target.ids.begin() + static_cast<long>(n));
    const std::vector<double> w(n, 1.0 / static_cast<double>(n));

    auto z0 = tp.gather_rows(bp["embed"], ids);
    auto enc = encode_graph(tp, bp, ex.graph_ids);

    auto noised = [&](int t, const Matrix& eps) {
      const auto a = position_abar(ex, sched, t);
      std::vector<double> sa(n), sn(n);
      for (size_t i = 0; i < n; ++i) {
        sa[i] = std::sqrt(a[i]);
        sn[i] = std::sqrt(1.0 - a[i]);
      }
      Matrix noise = eps;
      for (Eigen::Index i = 0; i < noise.rows(); ++i) noise.row(i) *= sn[static_cast<size_t>(i)];
      return tp.add(tp.scale_rows(z0, sa), tp.constant(std::move(noise)));
    };

    auto pred_t = decode_latents(tp, bp, enc, noised(dr.t, dr.eps_t), dr.t).z0_hat;
    den.push_back(tp.weighted_sq_error(pred_t, z0, w));
    auto pred_1 = decode_latents(tp, bp, enc, noised(1, dr.eps_1), 1).z0_hat;
    con.push_back(tp.weighted_sq_error(z0, pred_1, w));
    rnd.push_back(tp.weighted_cross_entropy(rounding_logits(tp, bp, z0), ids, w));
    len.push_back(tp.weighted_cross_entropy(length_logits(tp, bp, enc), {static_cast<int>(n) - 1}, {1.0}));
  }
  LossResult r;
  auto mean_of = [&](const std::vector<ad::Var>& v) {
    double s = 0.0;
    for (auto x : v) s += tp.value(x)(0, 0);
    return s * inv_b;
  };
  r.parts.denoise = mean_of(den);
  r.parts.consistency = mean_of(con);
  r.parts.rounding = mean_of(rnd);
  r.parts.length = mean_of(len);
  for (size_t b = 0; b < batch.size(); ++b) {
    for (auto v : {den[b], con[b], rnd[b]}) {
      terms.push_back(v);
      coeffs.push_back(inv_b);
    }
    terms.push_back(len[b]);
    coeffs.push_back(inv_b * opt.length_weight);
  }
  auto total = tp.weighted_sum(terms, coeffs);
  r.parts.total = tp.value(total)(0, 0);
  if (!std::isfinite(r.parts.total)) throw NumericalError("non-finite loss");
  if (opt.compute_grads) {
    tp.backward(total);
    r.grads.reserve(params.count());
    for (size_t k = 0; k < params.count(); ++k) {
      const auto& g = tp.grad(bp.vars()[k]);
      const auto& v = params.tensors()[k].value;
      r.grads.push_back(g.size() ? g : Matrix::Zero(v.rows(), v.cols()));
    }
  }
  return r;
}

inline LossResult loss_e2e(const std::vector<const PreparedExample*>& batch, const DenoiserParams& params,
                           const TokenWiseSchedule& sched, Rng& rng, const LossOptions& opt = {}) {
  if (batch.empty()) throw UsageError("loss: empty batch");
  std::vector<NoiseDraw> draws;
  draws.reserve(batch.size());
  for (const auto* ex : batch) draws.push_back(sample_draw(*ex, sched.steps(), params.config().d, rng));
  return loss_with_draws(batch, draws, params, sched, opt);
}

// Evaluation timesteps: 1, then every `stride` steps, always ending at T.
inline std::vector<int> difficulty_grid(int T, int stride) {
  std::vector<int> grid{1};
  for (int t = stride; t <= T; t += stride) {
    if (t > grid.back()) grid.push_back(t);
  }
  if (grid.back() != T) grid.push_back(T);
  return grid;
}

struct DifficultyOptions {
  int stride = 0;  // 0: max(1, T/50)
  int n_mc = 8;
};

// Expected per-position reconstruction error of aligned tokens under the
// current schedules, evaluated on a timestep grid and linearly interpolated
// in between. Occurrences of the same token id are pooled by their mean.
inline ProfileSet estimate_difficulty(const std::vector<PreparedExample>& data, const DenoiserParams& params,
                                      const TokenWiseSchedule& sched, Rng& rng, const DifficultyOptions& opt = {}) {
  const int T = sched.steps();
  const int stride = opt.stride > 0 ? opt.stride : std::max(1, T / 50);
  const auto grid = difficulty_grid(T, stride);

  std::map<int, std::vector<double>> sums;  // token id -> per-grid sum over occurrences
  std::map<int, double> counts;
  for (const auto& ex : data) {
    const size_t n = ex.length();
    std::vector<size_t> positions;
    for (size_t i = 0; i < n; ++i) {
      if (ex.aligned[i]) positions.push_back(i);
    }
    if (positions.empty()) continue;
    ad::Tape tp(false);
    BoundParams bp(tp, params);
    auto enc = encode_graph(tp, bp, ex.graph_ids);
    const Matrix z0 = embed(ex.target, params).z.topRows(static_cast<Eigen::Index>(n));
    const std::vector<bool> no_pad(n, false);
    std::vector<std::vector<double>> occ(positions.size(), std::vector<double>(grid.size(), 0.0));
    for (size_t g = 0; g < grid.size(); ++g) {
      const auto a = position_abar(ex, sched, grid[g]);
      for (int k = 0; k < opt.n_mc; ++k) {
        const size_t mark = tp.size();
        Matrix zt = forward_noise(z0, a, no_pad, rng);
        auto pred = decode_latents(tp, bp, enc, tp.constant(std::move(zt)), grid[g]).z0_hat;
        const Matrix& zh = tp.value(pred);
        for (size_t q = 0; q < positions.size(); ++q) {
          const auto i = static_cast<Eigen::Index>(positions[q]);
          occ[q][g] += (zh.row(i) - z0.row(i)).squaredNorm() / opt.n_mc;
        }
        tp.truncate(mark);
      }
    }
    for (size_t q = 0; q < positions.size(); ++q) {
      const int id = ex.target.ids[positions[q]];
      auto& s = sums[id];
      if (s.empty()) s.assign(grid.size(), 0.0);
      for (size_t g = 0; g < grid.size(); ++g) s[g] += occ[q][g];
      counts[id] += 1.0;
    }
  }
  if (counts.empty()) throw DataError("difficulty: no aligned tokens in subset");

  ProfileSet out;
  for (const auto& [id, s] : sums) {
    DifficultyProfile prof;
    prof.count = counts[id];
    prof.loss.assign(static_cast<size_t>(T) + 1, 0.0);
    prof.loss[static_cast<size_t>(grid.back())] = s.back() / prof.count;
    for (size_t g = 0; g + 1 < grid.size(); ++g) {
      const int t0 = grid[g], t1 = grid[g + 1];
      const double v0 = s[g] / prof.count, v1 = s[g + 1] / prof.count;
      for (int t = t0; t < t1; ++t) {
        prof.loss[static_cast<size_t>(t)] = v0 + (v1 - v0) * static_cast<double>(t - t0) / (t1 - t0);
      }
    }
    out.emplace(id, std::move(prof));
  }
  return out;
}

inline std::map<int, double> profile_counts(const ProfileSet& profiles) {
  std::map<int, double> out;
  for (const auto& [id, p] : profiles) out[id] = p.count;
  return out;
}

}  // namespace kgdiff

#endif  // KGDIFF_OBJECTIVE_HPP_
