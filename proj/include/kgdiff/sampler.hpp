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

#ifndef KGDIFF_SAMPLER_HPP_
#define KGDIFF_SAMPLER_HPP_

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "kgdiff/autodiff.hpp"
#include "kgdiff/model.hpp"
#include "kgdiff/schedule.hpp"
#include "kgdiff/vocab.hpp"

namespace kgdiff {

// Per-position graph attention mass w_i from the latest denoiser call;
// positions past the sequence length are [PAD] and carry 0.
struct AttentionRecord {
  std::vector<double> w;
};

struct SampleOptions {
  bool use_anchor = true;
  size_t length = 0;  // 0: use the length head
};

struct SampleResult {
  TokenSequence tokens;
  size_t length = 0;
  int denoiser_calls = 0;
  AttentionRecord attention;
  Matrix z0_hat;
  std::vector<std::string> warnings;
};

// Reusable denoiser over a fixed graph: the encoder runs once and each call
// decodes on a scratch region of the same tape.
class GraphDenoiser {
 public:
  GraphDenoiser(const DenoiserParams& params, std::span<const int> graph_ids)
      : params_(&params), tape_(false), bound_(tape_, params) {
    enc_ = encode_graph(tape_, bound_, graph_ids);
    len_ = length_logits(tape_, bound_, enc_);
    base_ = tape_.size();
  }

  size_t predicted_length() const {
    const auto& lv = tape_.value(len_);
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < lv.cols(); ++j) {
      if (lv(0, j) > lv(0, best)) best = j;
    }
    return static_cast<size_t>(best) + 1;
  }

  std::pair<Matrix, std::vector<double>> operator()(const Matrix& z_t, int t) {
    ++calls_;
    auto r = decode_latents(tape_, bound_, enc_, tape_.constant(z_t), t);
    std::pair<Matrix, std::vector<double>> out{tape_.value(r.z0_hat), std::move(r.graph_mass)};
    tape_.truncate(base_);
    return out;
  }

  int calls() const { return calls_; }

 private:
  const DenoiserParams* params_;
  ad::Tape tape_;
  BoundParams bound_;
  ad::Var enc_;
  ad::Var len_;
  size_t base_ = 0;
  int calls_ = 0;
};

namespace detail {

inline const CumulativeSchedule* resolve_anchor(const CumulativeSchedule* anchor, const SampleOptions& opt,
                                                std::vector<std::string>& warnings) {
  if (!opt.use_anchor) return nullptr;
  if (anchor == nullptr) warnings.push_back("no anchor schedule; sampling with the baseline schedule");
  return anchor;
}

inline double blended(const CumulativeSchedule& base, const CumulativeSchedule* anchor, double w, int t) {
  return anchor ? blend(w, base[t], (*anchor)[t]) : base[t];
}

inline size_t sample_length(GraphDenoiser& den, const DenoiserParams& params, const SampleOptions& opt) {
  const size_t n = opt.length ? opt.length : den.predicted_length();
  if (n < 1 || static_cast<int>(n) > params.config().max_len) throw UsageError("sample: bad length");
  return n;
}

inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix z(rows, cols);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
  return z;
}

inline void finish(SampleResult& r, const DenoiserParams& params, const GraphDenoiser& den,
                   std::vector<double> last_w) {
  const auto& cfg = params.config();
  auto rounded = round_latents(r.z0_hat, params, r.length);
  r.tokens = TokenSequence::from_ids(rounded.argmax, static_cast<size_t>(cfg.max_len));
  r.denoiser_calls = den.calls();
  last_w.resize(static_cast<size_t>(cfg.max_len), 0.0);
  r.attention.w = std::move(last_w);
}

}  // namespace detail

// Ancestral sampling over t = T..1 with the posterior mean
// U z_t + E z0_hat and variance (1-abar_{t-1})/(1-abar_t) beta_t. Each
// position's schedule blends baseline and anchor by its attention mass
// from the previous denoiser call; the first call uses w = 0.
inline SampleResult sample_ddpm(std::span<const int> graph_ids, const DenoiserParams& params,
                                const CumulativeSchedule& baseline, const CumulativeSchedule* anchor, Rng& rng,
                                const SampleOptions& opt = {}) {
  SampleResult r;
  anchor = detail::resolve_anchor(anchor, opt, r.warnings);
  GraphDenoiser den(params, graph_ids);
  r.length = detail::sample_length(den, params, opt);
  const auto n = static_cast<Eigen::Index>(r.length);
  const int d = params.config().d;
  const int T = baseline.steps();

  Matrix z = detail::standard_normal(n, d, rng);
  std::vector<double> w(r.length, 0.0);
  for (int t = T; t >= 1; --t) {
    auto [z0_hat, mass] = den(z, t);
    Matrix next(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double wi = w[static_cast<size_t>(i)];
      const double a_t = detail::blended(baseline, anchor, wi, t);
      const double a_prev = detail::blended(baseline, anchor, wi, t - 1);
      const auto pc = posterior_coefficients(a_t, a_prev);
      next.row(i) = pc.u * z.row(i) + pc.e * z0_hat.row(i);
      if (t > 1) {
        const double sd = std::sqrt(std::max(pc.var, 0.0));
        for (Eigen::Index j = 0; j < d; ++j) next(i, j) += sd * rng.normal();
      }
    }
    z = std::move(next);
    w = std::move(mass);
    r.z0_hat = std::move(z0_hat);
  }
  detail::finish(r, params, den, w);
  return r;
}

// Evenly spaced decreasing subsequence of T' timesteps ending at T:
// t_k = round(k T / T') for k = T'..1.
inline std::vector<int> ddim_timesteps(int T, int t_prime) {
  if (t_prime < 1 || t_prime > T) throw UsageError("ddim: T' must lie in [1, T]");
  std::vector<int> out;
  out.reserve(static_cast<size_t>(t_prime));
  for (int k = t_prime; k >= 1; --k) {
    out.push_back(static_cast<int>(std::llround(static_cast<double>(k) * T / t_prime)));
  }
  return out;
}

// Deterministic (eta = 0) DDIM over ddim_timesteps(T, T'). The only
// randomness is the initial z_T.
inline SampleResult sample_ddim(std::span<const int> graph_ids, const DenoiserParams& params,
                                const CumulativeSchedule& baseline, const CumulativeSchedule* anchor, int t_prime,
                                Rng& rng, const SampleOptions& opt = {}) {
  const auto steps = ddim_timesteps(baseline.steps(), t_prime);
  SampleResult r;
  anchor = detail::resolve_anchor(anchor, opt, r.warnings);
  GraphDenoiser den(params, graph_ids);
  r.length = detail::sample_length(den, params, opt);
  const auto n = static_cast<Eigen::Index>(r.length);
  const int d = params.config().d;

  Matrix z = detail::standard_normal(n, d, rng);
  std::vector<double> w(r.length, 0.0);
  for (size_t k = 0; k < steps.size(); ++k) {
    const int t = steps[k];
    const int t_prev = k + 1 < steps.size() ? steps[k + 1] : 0;
    auto [z0_hat, mass] = den(z, t);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double wi = w[static_cast<size_t>(i)];
      const double a_t = detail::blended(baseline, anchor, wi, t);
      const double a_prev = detail::blended(baseline, anchor, wi, t_prev);
      const RowVector eps_dir = (z.row(i) - std::sqrt(a_t) * z0_hat.row(i)) / std::sqrt(1.0 - a_t);
      z.row(i) = std::sqrt(a_prev) * z0_hat.row(i) + std::sqrt(1.0 - a_prev) * eps_dir;
    }
    w = std::move(mass);
    r.z0_hat = std::move(z0_hat);
  }
  detail::finish(r, params, den, w);
  return r;
}

}  // namespace kgdiff

#endif  // KGDIFF_SAMPLER_HPP_
