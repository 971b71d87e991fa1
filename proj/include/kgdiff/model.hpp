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

#ifndef KGDIFF_MODEL_HPP_
#define KGDIFF_MODEL_HPP_

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgdiff/autodiff.hpp"
#include "kgdiff/common.hpp"
#include "kgdiff/vocab.hpp"

namespace kgdiff {

using ad::Matrix;
using ad::RowVector;

struct ModelConfig {
  int vocab = 0;
  int d = 32;
  int heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int ffn = 64;
  int max_len = 16;        // N_max, decoder positions
  int max_graph_len = 64;  // encoder positions
  bool tie_weights = true;

  void validate() const {
    if (vocab <= kUnkId) throw UsageError("model: vocabulary too small");
    if (d < 1 || heads < 1 || d % heads != 0) throw UsageError("model: d must be a positive multiple of heads");
    if (enc_layers < 1 || dec_layers < 1) throw UsageError("model: need at least one encoder and decoder layer");
    if (ffn < 1 || max_len < 1 || max_graph_len < 1) throw UsageError("model: sizes must be positive");
  }
};

enum class EmbeddingInit { kNormal, kOrthogonal };

struct NamedTensor {
  std::string name;
  Matrix value;
  bool decay = false;  // receives decoupled weight decay
};

// All trainable tensors of the denoiser, in a fixed order.
class DenoiserParams {
 public:
  DenoiserParams() = default;

  static DenoiserParams init(const ModelConfig& cfg, uint64_t seed, EmbeddingInit emb = EmbeddingInit::kNormal) {
    cfg.validate();
    DenoiserParams p;
    p.cfg_ = cfg;
    Rng rng(seed);
    const int d = cfg.d, f = cfg.ffn;
    auto normal = [&](int r, int c, double stddev) {
      Matrix m(r, c);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
      return m;
    };
    auto dense = [&](const std::string& name, int in, int out) {
      p.add(name + ".w", normal(in, out, 1.0 / std::sqrt(static_cast<double>(in))), true);
      p.add(name + ".b", Matrix::Zero(1, out), false);
    };
    auto norm = [&](const std::string& name) {
      p.add(name + ".g", Matrix::Ones(1, d), false);
      p.add(name + ".b", Matrix::Zero(1, d), false);
    };

    Matrix embed = normal(cfg.vocab, d, 1.0);
    if (emb == EmbeddingInit::kOrthogonal) {
      if (cfg.vocab > d) throw UsageError("orthogonal embedding init needs vocab <= d");
      Matrix q = Eigen::HouseholderQR<Matrix>(normal(d, d, 1.0)).householderQ();
      embed = q.topRows(cfg.vocab) * std::sqrt(static_cast<double>(d));
    }
    p.add("embed", std::move(embed), false);
    p.add("enc.embed", normal(cfg.vocab, d, 1.0), false);
    p.add("enc.pos", normal(cfg.max_graph_len, d, 0.1), false);
    for (int l = 0; l < cfg.enc_layers; ++l) {
      const std::string L = "enc." + std::to_string(l);
      norm(L + ".ln1");
      dense(L + ".qkv", d, 3 * d);
      dense(L + ".o", d, d);
      norm(L + ".ln2");
      dense(L + ".ff1", d, f);
      dense(L + ".ff2", f, d);
    }
    norm("enc.lnf");
    dense("dec.in", d, d);
    dense("dec.time", d, d);
    p.add("dec.pos", normal(cfg.max_len, d, 0.1), false);
    for (int l = 0; l < cfg.dec_layers; ++l) {
      const std::string L = "dec." + std::to_string(l);
      norm(L + ".ln1");
      dense(L + ".qkv", d, 3 * d);
      dense(L + ".o", d, d);
      norm(L + ".ln2");
      dense(L + ".xq", d, d);
      dense(L + ".xkv", d, 2 * d);
      p.add(L + ".xnull", normal(1, 2 * d, 0.1), false);
      dense(L + ".xo", d, d);
      norm(L + ".ln3");
      dense(L + ".ff1", d, f);
      dense(L + ".ff2", f, d);
    }
    norm("dec.lnf");
    dense("dec.out", d, d);
    if (!cfg.tie_weights) p.add("round.w", normal(cfg.vocab, d, 1.0 / std::sqrt(static_cast<double>(d))), true);
    dense("len", d, cfg.max_len);
    return p;
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<NamedTensor>& tensors() { return tensors_; }
  const std::vector<NamedTensor>& tensors() const { return tensors_; }
  size_t count() const { return tensors_.size(); }

  int index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("unknown parameter '" + name + "'");
    return it->second;
  }
  const Matrix& at(const std::string& name) const { return tensors_[static_cast<size_t>(index(name))].value; }
  Matrix& at(const std::string& name) { return tensors_[static_cast<size_t>(index(name))].value; }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<size_t>(t.value.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& t : tensors_) {
      if (!t.value.allFinite()) return false;
    }
    return true;
  }

  // Rebuild from stored tensors (checkpoint load); shapes must match a
  // fresh init with the same config.
  static DenoiserParams from_tensors(const ModelConfig& cfg, std::vector<NamedTensor> stored) {
    DenoiserParams p = init(cfg, 0);
    if (stored.size() != p.tensors_.size()) throw DataError("parameter count mismatch");
    for (size_t i = 0; i < stored.size(); ++i) {
      auto& dst = p.tensors_[i];
      if (stored[i].name != dst.name || stored[i].value.rows() != dst.value.rows() ||
          stored[i].value.cols() != dst.value.cols()) {
        throw DataError("parameter '" + stored[i].name + "' does not match the model layout");
      }
      dst.value = std::move(stored[i].value);
    }
    return p;
  }

  friend bool operator==(const DenoiserParams& a, const DenoiserParams& b) {
    if (a.tensors_.size() != b.tensors_.size()) return false;
    for (size_t i = 0; i < a.tensors_.size(); ++i) {
      if (a.tensors_[i].name != b.tensors_[i].name || a.tensors_[i].value != b.tensors_[i].value) return false;
    }
    return true;
  }

 private:
  void add(std::string name, Matrix value, bool decay) {
    index_.emplace(name, static_cast<int>(tensors_.size()));
    tensors_.push_back({std::move(name), std::move(value), decay});
  }

  ModelConfig cfg_;
  std::vector<NamedTensor> tensors_;
  std::unordered_map<std::string, int> index_;
};

// Parameters placed on a tape.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const DenoiserParams& params) : params_(&params) {
    vars_.reserve(params.count());
    for (const auto& t : params.tensors()) vars_.push_back(tape.parameter(t.value));
  }
  ad::Var operator[](const std::string& name) const { return vars_[static_cast<size_t>(params_->index(name))]; }
  const std::vector<ad::Var>& vars() const { return vars_; }
  const DenoiserParams& params() const { return *params_; }

 private:
  const DenoiserParams* params_;
  std::vector<ad::Var> vars_;
};

inline Matrix time_embedding(int t, int d) {
  Matrix e(1, d);
  const int half = d / 2;
  const double denom = std::max(half, 1);
  for (int k = 0; k < d; ++k) {
    const int j = k < half ? k : k - half;
    const double freq = std::pow(10000.0, -static_cast<double>(j) / denom);
    e(0, k) = k < half ? std::sin(t * freq) : std::cos(t * freq);
  }
  return e;
}

namespace detail {

inline ad::Var dense(ad::Tape& tp, const BoundParams& p, const std::string& name, ad::Var x) {
  return tp.add_row(tp.matmul(x, p[name + ".w"]), p[name + ".b"]);
}

inline ad::Var norm(ad::Tape& tp, const BoundParams& p, const std::string& name, ad::Var x) {
  return tp.layer_norm(x, p[name + ".g"], p[name + ".b"]);
}

// Multi-head attention over already-projected q, k, v. When `probs` is set,
// the per-head probability nodes are appended to it.
inline ad::Var attend(ad::Tape& tp, ad::Var q, ad::Var k, ad::Var v, int heads, std::vector<ad::Var>* probs) {
  const Eigen::Index d = tp.value(q).cols();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ad::Var> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    auto qh = tp.cols(q, h * dh, dh);
    auto kh = tp.cols(k, h * dh, dh);
    auto vh = tp.cols(v, h * dh, dh);
    auto pr = tp.softmax_rows(tp.scale(tp.matmul_nt(qh, kh), scale));
    if (probs) probs->push_back(pr);
    outs.push_back(tp.matmul(pr, vh));
  }
  return heads == 1 ? outs.front() : tp.hcat(outs);
}

inline ad::Var feed_forward(ad::Tape& tp, const BoundParams& p, const std::string& L, ad::Var x) {
  return dense(tp, p, L + ".ff2", tp.gelu(dense(tp, p, L + ".ff1", x)));
}

}  // namespace detail

// Encodes the non-[PAD] graph tokens; [PAD] ids are dropped so they can
// never act as attention keys. Positions count real tokens only.
inline ad::Var encode_graph(ad::Tape& tp, const BoundParams& p, std::span<const int> graph_ids) {
  const auto& cfg = p.params().config();
  std::vector<int> ids;
  for (int id : graph_ids) {
    if (id != kPadId) ids.push_back(id);
  }
  if (ids.empty()) throw DataError("encode_graph: no graph tokens");
  if (static_cast<int>(ids.size()) > cfg.max_graph_len) ids.resize(static_cast<size_t>(cfg.max_graph_len));
  const auto n = static_cast<Eigen::Index>(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= cfg.vocab) throw DataError("graph token id out of range");
  }
  auto x = tp.add(tp.gather_rows(p["enc.embed"], ids), tp.top_rows(p["enc.pos"], n));
  const int d = cfg.d;
  for (int l = 0; l < cfg.enc_layers; ++l) {
    const std::string L = "enc." + std::to_string(l);
    auto h = detail::norm(tp, p, L + ".ln1", x);
    auto qkv = detail::dense(tp, p, L + ".qkv", h);
    auto a = detail::attend(tp, tp.cols(qkv, 0, d), tp.cols(qkv, d, d), tp.cols(qkv, 2 * d, d), cfg.heads, nullptr);
    x = tp.add(x, detail::dense(tp, p, L + ".o", a));
    x = tp.add(x, detail::feed_forward(tp, p, L, detail::norm(tp, p, L + ".ln2", x)));
  }
  return detail::norm(tp, p, "enc.lnf", x);
}

struct DecodeResult {
  ad::Var z0_hat;                 // n x d
  std::vector<double> graph_mass; // per decoder row, mean over heads and layers
};

// Predicts z_0 for the first n = rows(z_t) positions.
inline DecodeResult decode_latents(ad::Tape& tp, const BoundParams& p, ad::Var enc, ad::Var z_t, int t) {
  const auto& cfg = p.params().config();
  const int d = cfg.d;
  const Eigen::Index n = tp.value(z_t).rows();
  if (n < 1 || n > cfg.max_len) throw UsageError("decode_latents: bad sequence length");
  auto x = detail::dense(tp, p, "dec.in", z_t);
  x = tp.add(x, tp.top_rows(p["dec.pos"], n));
  auto temb = detail::dense(tp, p, "dec.time", tp.constant(time_embedding(t, d)));
  x = tp.add_row(x, temb);
  std::vector<ad::Var> cross_probs;
  for (int l = 0; l < cfg.dec_layers; ++l) {
    const std::string L = "dec." + std::to_string(l);
    auto h = detail::norm(tp, p, L + ".ln1", x);
    auto qkv = detail::dense(tp, p, L + ".qkv", h);
    auto a = detail::attend(tp, tp.cols(qkv, 0, d), tp.cols(qkv, d, d), tp.cols(qkv, 2 * d, d), cfg.heads, nullptr);
    x = tp.add(x, detail::dense(tp, p, L + ".o", a));

    h = detail::norm(tp, p, L + ".ln2", x);
    auto q = detail::dense(tp, p, L + ".xq", h);
    auto kv = tp.vcat(p[L + ".xnull"], detail::dense(tp, p, L + ".xkv", enc));
    auto c = detail::attend(tp, q, tp.cols(kv, 0, d), tp.cols(kv, d, d), cfg.heads, &cross_probs);
    x = tp.add(x, detail::dense(tp, p, L + ".xo", c));

    x = tp.add(x, detail::feed_forward(tp, p, L, detail::norm(tp, p, L + ".ln3", x)));
  }
  auto out = detail::dense(tp, p, "dec.out", detail::norm(tp, p, "dec.lnf", x));
  if (!tp.value(out).allFinite()) throw NumericalError("numerical blow-up");

  DecodeResult r{out, std::vector<double>(static_cast<size_t>(n), 0.0)};
  for (auto pr : cross_probs) {
    const Matrix& pm = tp.value(pr);
    for (Eigen::Index i = 0; i < n; ++i) r.graph_mass[static_cast<size_t>(i)] += 1.0 - pm(i, 0);
  }
  for (auto& w : r.graph_mass) w = std::clamp(w / static_cast<double>(cross_probs.size()), 0.0, 1.0);
  return r;
}

// Rounding logits W z for each row of z.
inline ad::Var rounding_logits(ad::Tape& tp, const BoundParams& p, ad::Var z) {
  const bool tied = p.params().config().tie_weights;
  return tp.matmul_nt(z, tied ? p["embed"] : p["round.w"]);
}

inline ad::Var length_logits(ad::Tape& tp, const BoundParams& p, ad::Var enc) {
  return detail::dense(tp, p, "len", tp.mean_rows(enc));
}

// ---- plain-value helpers --------------------------------------------

struct LatentSequence {
  Matrix z;  // N_max x d
  int t = 0;
};

inline LatentSequence embed(const TokenSequence& s, const DenoiserParams& params) {
  const auto& table = params.at("embed");
  LatentSequence out{Matrix(static_cast<Eigen::Index>(s.size()), table.cols()), 0};
  for (size_t i = 0; i < s.size(); ++i) {
    if (s.ids[i] < 0 || s.ids[i] >= table.rows()) throw DataError("embed: token id out of range");
    out.z.row(static_cast<Eigen::Index>(i)) = table.row(s.ids[i]);
  }
  return out;
}

// Per-position ᾱ values used to noise one sequence.
using PositionSchedule = std::vector<double>;

// z_t^(i) = sqrt(abar_i) z_0^(i) + sqrt(1 - abar_i) eps for non-[PAD] rows;
// [PAD] rows are copied. Noise is drawn row by row in position order.
inline Matrix forward_noise(const Matrix& z0, std::span<const double> abar, const std::vector<bool>& is_pad, Rng& rng) {
  Matrix zt = z0;
  for (Eigen::Index i = 0; i < z0.rows(); ++i) {
    if (is_pad[static_cast<size_t>(i)]) continue;
    const double a = abar[static_cast<size_t>(i)];
    if (!(a > 0.0 && a <= 1.0)) throw UsageError("forward_noise: abar must lie in (0,1]");
    const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
    for (Eigen::Index j = 0; j < z0.cols(); ++j) zt(i, j) = sa * z0(i, j) + sn * rng.normal();
  }
  return zt;
}

struct Rounded {
  std::vector<int> argmax;  // one id per row below `length`
  TokenSequence tokens;
  Matrix probs;  // n x |W|
};

// Softmax(W z) per row; argmax ties go to the lowest id. Rows beyond
// `length` are [PAD].
inline Rounded round_latents(const Matrix& z0_hat, const DenoiserParams& params, size_t length) {
  const auto& w = params.config().tie_weights ? params.at("embed") : params.at("round.w");
  Matrix logits = z0_hat * w.transpose();
  Rounded r;
  r.probs.resize(logits.rows(), logits.cols());
  std::vector<int> ids;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    r.probs.row(i) = (logits.row(i).array() - mx).exp();
    r.probs.row(i) /= r.probs.row(i).sum();
    if (static_cast<size_t>(i) < length) {
      Eigen::Index best = 0;
      for (Eigen::Index j = 1; j < logits.cols(); ++j) {
        if (logits(i, j) > logits(i, best)) best = j;
      }
      ids.push_back(static_cast<int>(best));
    }
  }
  r.argmax = ids;
  r.tokens = TokenSequence::from_ids(std::move(ids), static_cast<size_t>(z0_hat.rows()));
  return r;
}

}  // namespace kgdiff

#endif  // KGDIFF_MODEL_HPP_
