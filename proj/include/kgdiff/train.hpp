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

#ifndef KGDIFF_TRAIN_HPP_
#define KGDIFF_TRAIN_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "kgdiff/config.hpp"
#include "kgdiff/model.hpp"
#include "kgdiff/objective.hpp"
#include "kgdiff/schedule.hpp"

namespace kgdiff {

struct TrainConfig {
  ModelConfig model;
  int T = 200;
  int steps = 2000;
  int batch = 8;
  double lr = 1e-3;
  int warmup = 100;
  double weight_decay = 0.0;
  double clip = 1.0;
  double length_weight = 1.0;
  int k_up = 500;  // schedule update interval; > steps disables updates
  int k_win = 0;   // 0: T/10
  int n_mc = 8;
  int difficulty_stride = 0;  // 0: max(1, T/50)
  int difficulty_subset = 0;  // 0: whole training set
  MappingConfig mapping;
  double schedule_offset = 1e-4;
  double schedule_floor = kDefaultScheduleFloor;
  uint64_t seed = 0;
  int threads = 1;
  int alias_k = 5;

  void validate() const {
    model.validate();
    mapping.validate();
    if (T < 2) throw UsageError("train: T must be at least 2");
    if (steps < 1 || batch < 1 || warmup < 0 || n_mc < 1 || threads < 1 || alias_k < 1) {
      throw UsageError("train: counts must be positive");
    }
    if (k_up < 1) throw UsageError("train: k_up must be positive");
    if (k_win < 0 || k_win > T) throw UsageError("train: k_win must lie in [0, T]");
    if (!(lr > 0.0) || !(clip > 0.0) || weight_decay < 0.0 || length_weight < 0.0) {
      throw UsageError("train: bad optimizer settings");
    }
  }

  WindowSpec window_spec() const { return k_win > 0 ? WindowSpec::make(T, k_win) : WindowSpec::default_for(T); }
  CumulativeSchedule baseline() const { return sqrt_baseline(T, schedule_offset, schedule_floor); }

  ConfigMap to_config() const {
    ConfigMap c;
    c.set("model.d", model.d);
    c.set("model.heads", model.heads);
    c.set("model.enc_layers", model.enc_layers);
    c.set("model.dec_layers", model.dec_layers);
    c.set("model.ffn", model.ffn);
    c.set("model.max_len", model.max_len);
    c.set("model.max_graph_len", model.max_graph_len);
    c.set("model.tie_weights", model.tie_weights);
    c.set("train.T", T);
    c.set("train.steps", steps);
    c.set("train.batch", batch);
    c.set("train.lr", lr);
    c.set("train.warmup", warmup);
    c.set("train.weight_decay", weight_decay);
    c.set("train.clip", clip);
    c.set("train.length_weight", length_weight);
    c.set("train.threads", threads);
    c.set("train.alias_k", alias_k);
    c.set("train.seed", static_cast<long long>(seed));
    c.set("schedule.k_up", k_up);
    c.set("schedule.k_win", k_win);
    c.set("schedule.n_mc", n_mc);
    c.set("schedule.stride", difficulty_stride);
    c.set("schedule.subset", difficulty_subset);
    c.set("schedule.family", family_name(mapping.family));
    c.set("schedule.p", mapping.p);
    c.set("schedule.beta", mapping.beta);
    c.set("schedule.tau", mapping.tau);
    if (mapping.alpha_min) c.set("schedule.alpha_min", *mapping.alpha_min);
    c.set("schedule.offset", schedule_offset);
    c.set("schedule.floor", schedule_floor);
    return c;
  }

  static TrainConfig from_config(const ConfigMap& c) { return from_config(c, TrainConfig()); }

  static TrainConfig from_config(const ConfigMap& c, const TrainConfig& d) {
    TrainConfig t = d;
    t.model.d = c.get("model.d", d.model.d);
    t.model.heads = c.get("model.heads", d.model.heads);
    t.model.enc_layers = c.get("model.enc_layers", d.model.enc_layers);
    t.model.dec_layers = c.get("model.dec_layers", d.model.dec_layers);
    t.model.ffn = c.get("model.ffn", d.model.ffn);
    t.model.max_len = c.get("model.max_len", d.model.max_len);
    t.model.max_graph_len = c.get("model.max_graph_len", d.model.max_graph_len);
    t.model.tie_weights = c.get("model.tie_weights", d.model.tie_weights);
    t.T = c.get("train.T", d.T);
    t.steps = c.get("train.steps", d.steps);
    t.batch = c.get("train.batch", d.batch);
    t.lr = c.get("train.lr", d.lr);
    t.warmup = c.get("train.warmup", d.warmup);
    t.weight_decay = c.get("train.weight_decay", d.weight_decay);
    t.clip = c.get("train.clip", d.clip);
    t.length_weight = c.get("train.length_weight", d.length_weight);
    t.threads = c.get("train.threads", d.threads);
    t.alias_k = c.get("train.alias_k", d.alias_k);
    t.seed = static_cast<uint64_t>(c.get("train.seed", static_cast<long long>(d.seed)));
    t.k_up = c.get("schedule.k_up", d.k_up);
    t.k_win = c.get("schedule.k_win", d.k_win);
    t.n_mc = c.get("schedule.n_mc", d.n_mc);
    t.difficulty_stride = c.get("schedule.stride", d.difficulty_stride);
    t.difficulty_subset = c.get("schedule.subset", d.difficulty_subset);
    t.mapping.family = parse_family(c.get("schedule.family", family_name(d.mapping.family)));
    t.mapping.p = c.get("schedule.p", d.mapping.p);
    t.mapping.beta = c.get("schedule.beta", d.mapping.beta);
    t.mapping.tau = c.get("schedule.tau", d.mapping.tau);
    if (c.has("schedule.alpha_min")) t.mapping.alpha_min = c.get("schedule.alpha_min", 0.0);
    t.schedule_offset = c.get("schedule.offset", d.schedule_offset);
    t.schedule_floor = c.get("schedule.floor", d.schedule_floor);
    return t;
  }

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k = [] {
      std::set<std::string> s;
      TrainConfig t;
      t.mapping.alpha_min = 0.5;
      const auto c = t.to_config();
      for (const auto& [key, v] : c.values()) s.insert(key);
      return s;
    }();
    return k;
  }
};

// Linear warmup to the peak rate, then linear decay to zero at the last step.
inline double learning_rate(const TrainConfig& cfg, int step) {
  if (step < cfg.warmup) return cfg.lr * static_cast<double>(step + 1) / cfg.warmup;
  const int span = std::max(1, cfg.steps - cfg.warmup);
  return cfg.lr * std::max(0.0, static_cast<double>(cfg.steps - step) / span);
}

class AdamW {
 public:
  AdamW(const DenoiserParams& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& t : params.tensors()) {
      m_.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
      v_.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
    }
  }

  void step(DenoiserParams& params, const std::vector<Matrix>& grads, double lr, double weight_decay) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (size_t k = 0; k < grads.size(); ++k) {
      auto& p = params.tensors()[k];
      m_[k] = b1_ * m_[k] + (1.0 - b1_) * grads[k];
      v_[k] = b2_ * v_[k] + (1.0 - b2_) * grads[k].cwiseProduct(grads[k]);
      auto upd = (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
      if (p.decay && weight_decay > 0.0) p.value.array() -= lr * weight_decay * p.value.array();
      p.value.array() -= lr * upd;
    }
  }

 private:
  double b1_, b2_, eps_;
  int t_ = 0;
  std::vector<Matrix> m_, v_;
};

// Scales all gradients so their joint L2 norm is at most max_norm; returns
// the norm before clipping.
inline double clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) g *= s;
  }
  return norm;
}

struct ScheduleState {
  TokenWiseSchedule schedules;
  std::optional<CumulativeSchedule> anchor;
  ProfileSet profiles;
};

// Re-estimates difficulty under the current schedules and rebuilds the
// token-wise schedules and the anchor.
inline ScheduleState update_schedules(const std::vector<PreparedExample>& data, const DenoiserParams& params,
                                      const ScheduleState& current, const TrainConfig& cfg, Rng& rng) {
  std::vector<PreparedExample> subset = data;
  if (cfg.difficulty_subset > 0 && static_cast<size_t>(cfg.difficulty_subset) < subset.size()) {
    subset.resize(static_cast<size_t>(cfg.difficulty_subset));
  }
  DifficultyOptions dopt;
  dopt.stride = cfg.difficulty_stride;
  dopt.n_mc = cfg.n_mc;
  ScheduleState next{TokenWiseSchedule(current.schedules.baseline()), std::nullopt, {}};
  next.profiles = estimate_difficulty(subset, params, current.schedules, rng, dopt);
  std::set<int> ids;
  for (const auto& [id, p] : next.profiles) ids.insert(id);
  next.schedules = build_token_schedules(current.schedules.baseline(), ids, next.profiles, cfg.window_spec(), cfg.mapping);
  next.anchor = anchor_from(next.schedules, profile_counts(next.profiles));
  return next;
}

struct StepLog {
  int step = 0;
  LossBreakdown loss;
  double lr = 0.0;
  double grad_norm = 0.0;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  std::function<void(int step, const ScheduleState&)> on_schedule_update;
  std::function<void(int step, const DenoiserParams&, const ScheduleState&)> on_checkpoint;
  int checkpoint_every = 0;
};

struct TrainResult {
  DenoiserParams params;
  ScheduleState schedules;
  int step = 0;
  int schedule_updates = 0;
  std::vector<StepLog> log;
};

namespace detail {

// Per-example losses and gradients, reduced in example order so the result
// does not depend on the thread count.
inline LossResult batch_loss(const std::vector<const PreparedExample*>& batch, const std::vector<NoiseDraw>& draws,
                             const DenoiserParams& params, const TokenWiseSchedule& sched, const LossOptions& opt,
                             int threads) {
  std::vector<LossResult> parts(batch.size());
  auto work = [&](size_t begin, size_t end) {
    for (size_t b = begin; b < end; ++b) parts[b] = loss_with_draws({batch[b]}, {draws[b]}, params, sched, opt);
  };
  const size_t nt = std::min(batch.size(), static_cast<size_t>(std::max(1, threads)));
  if (nt <= 1) {
    work(0, batch.size());
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(nt);
    const size_t chunk = (batch.size() + nt - 1) / nt;
    for (size_t i = 0; i < nt; ++i) {
      pool.emplace_back([&, i] {
        try {
          work(i * chunk, std::min(batch.size(), (i + 1) * chunk));
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  LossResult out = std::move(parts[0]);
  for (size_t b = 1; b < parts.size(); ++b) {
    out.parts.denoise += parts[b].parts.denoise;
    out.parts.consistency += parts[b].parts.consistency;
    out.parts.rounding += parts[b].parts.rounding;
    out.parts.length += parts[b].parts.length;
    out.parts.total += parts[b].parts.total;
    for (size_t k = 0; k < out.grads.size(); ++k) out.grads[k] += parts[b].grads[k];
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  out.parts.denoise *= inv;
  out.parts.consistency *= inv;
  out.parts.rounding *= inv;
  out.parts.length *= inv;
  out.parts.total *= inv;
  for (auto& g : out.grads) g *= inv;
  return out;
}

}  // namespace detail

// Deterministic given (data, cfg). Batches are drawn by reshuffling the
// data each epoch; schedule updates fire at every positive multiple of
// k_up below cfg.steps.
inline TrainResult train(const std::vector<PreparedExample>& data, const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (data.empty()) throw DataError("train: empty dataset");
  Rng rng(cfg.seed);
  Rng sched_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  TrainResult res{DenoiserParams::init(cfg.model, cfg.seed), ScheduleState{TokenWiseSchedule(cfg.baseline()), std::nullopt, {}}, 0, 0, {}};
  AdamW opt(res.params);
  LossOptions lopt;
  lopt.length_weight = cfg.length_weight;

  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  size_t cursor = order.size();
  for (int step = 0; step < cfg.steps; ++step) {
    if (step > 0 && step % cfg.k_up == 0) {
      res.schedules = update_schedules(data, res.params, res.schedules, cfg, sched_rng);
      ++res.schedule_updates;
      if (hooks.on_schedule_update) hooks.on_schedule_update(step, res.schedules);
    }
    std::vector<const PreparedExample*> batch;
    for (int b = 0; b < cfg.batch; ++b) {
      if (cursor == order.size()) {
        for (size_t i = order.size(); i > 1; --i) {
          std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
        }
        cursor = 0;
      }
      batch.push_back(&data[order[cursor++]]);
    }
    std::vector<NoiseDraw> draws;
    for (const auto* ex : batch) draws.push_back(sample_draw(*ex, cfg.T, cfg.model.d, rng));
    auto r = detail::batch_loss(batch, draws, res.params, res.schedules.schedules, lopt, cfg.threads);
    if (!std::isfinite(r.parts.total)) {
      throw NumericalError("training diverged at step " + std::to_string(step));
    }
    StepLog log{step, r.parts, learning_rate(cfg, step), clip_global_norm(r.grads, cfg.clip)};
    opt.step(res.params, r.grads, log.lr, cfg.weight_decay);
    if (!res.params.all_finite()) throw NumericalError("non-finite parameters after step " + std::to_string(step));
    res.log.push_back(log);
    res.step = step + 1;
    if (hooks.on_step) hooks.on_step(log);
    if (hooks.on_checkpoint && hooks.checkpoint_every > 0 && res.step % hooks.checkpoint_every == 0 &&
        res.step < cfg.steps) {
      hooks.on_checkpoint(res.step, res.params, res.schedules);
    }
  }
  return res;
}

}  // namespace kgdiff

#endif  // KGDIFF_TRAIN_HPP_
