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

#ifndef KGDIFF_SCHEDULE_HPP_
#define KGDIFF_SCHEDULE_HPP_

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kgdiff/common.hpp"

namespace kgdiff {

// Cumulative signal-retention coefficients abar_0..abar_T with abar_0 = 1,
// strictly positive and non-increasing.
class CumulativeSchedule {
 public:
  CumulativeSchedule() : values_{1.0} {}

  static CumulativeSchedule from_values(std::vector<double> values) {
    if (values.empty()) throw UsageError("schedule: no values");
    if (values[0] != 1.0) throw UsageError("schedule: abar_0 must be 1");
    for (size_t t = 1; t < values.size(); ++t) {
      if (!(values[t] > 0.0)) throw UsageError("schedule: abar_" + std::to_string(t) + " must be positive");
      if (values[t] > values[t - 1]) throw UsageError("schedule: not non-increasing at t=" + std::to_string(t));
    }
    CumulativeSchedule s;
    s.values_ = std::move(values);
    return s;
  }

  int steps() const { return static_cast<int>(values_.size()) - 1; }
  double operator[](int t) const { return values_[static_cast<size_t>(t)]; }
  double at(int t) const {
    if (t < 0 || t > steps()) throw UsageError("schedule: t=" + std::to_string(t) + " out of range");
    return values_[static_cast<size_t>(t)];
  }
  const std::vector<double>& values() const { return values_; }

  friend bool operator==(const CumulativeSchedule&, const CumulativeSchedule&) = default;

 private:
  std::vector<double> values_;
};

inline constexpr double kDefaultScheduleFloor = 1e-4;

// abar_t = max(1 - sqrt(t/T + s), floor), abar_0 = 1.
inline CumulativeSchedule sqrt_baseline(int T, double s = 1e-4, double floor = kDefaultScheduleFloor) {
  if (T < 1) throw UsageError("sqrt_baseline: T must be >= 1");
  if (!(s > 0.0)) throw UsageError("sqrt_baseline: offset s must be positive");
  if (!(floor > 0.0 && floor < 1.0)) throw UsageError("sqrt_baseline: floor must lie in (0,1)");
  std::vector<double> v(static_cast<size_t>(T) + 1);
  v[0] = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double raw = 1.0 - std::sqrt(static_cast<double>(t) / T + s);
    v[static_cast<size_t>(t)] = std::min(std::max(raw, floor), v[static_cast<size_t>(t) - 1]);
  }
  return CumulativeSchedule::from_values(std::move(v));
}

struct GridPoint {
  int t = 0;
  double value = 1.0;
};

// Piecewise-linear interpolation through explicit (t, abar) points. A grid
// that starts after t=0 gets (0, 1) prepended; the last point must be t=T.
inline CumulativeSchedule table_schedule(std::span<const GridPoint> grid, int T) {
  if (T < 1) throw UsageError("table_schedule: T must be >= 1");
  std::vector<GridPoint> pts(grid.begin(), grid.end());
  if (pts.empty() || pts.front().t > 0) pts.insert(pts.begin(), GridPoint{0, 1.0});
  if (pts.front().t != 0 || pts.front().value != 1.0) throw UsageError("table_schedule: abar_0 must be 1");
  for (size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].t <= pts[i - 1].t) throw UsageError("table_schedule: grid times must increase");
    if (!(pts[i].value > 0.0) || pts[i].value > pts[i - 1].value) {
      throw UsageError("table_schedule: grid values must be positive and non-increasing");
    }
  }
  if (pts.back().t != T) throw UsageError("table_schedule: grid must end at t=T");
  std::vector<double> v(static_cast<size_t>(T) + 1);
  size_t seg = 0;
  for (int t = 0; t <= T; ++t) {
    while (pts[seg + 1].t < t) ++seg;
    const auto& a = pts[seg];
    const auto& b = pts[seg + 1];
    if (t == a.t) {
      v[static_cast<size_t>(t)] = a.value;
    } else if (t == b.t) {
      v[static_cast<size_t>(t)] = b.value;
    } else {
      const double frac = static_cast<double>(t - a.t) / static_cast<double>(b.t - a.t);
      v[static_cast<size_t>(t)] = a.value + frac * (b.value - a.value);
    }
  }
  return CumulativeSchedule::from_values(std::move(v));
}

// alpha_t = abar_t / abar_{t-1}, beta_t = 1 - alpha_t. Index 0 holds the
// neutral values (1, 0) so that indices match timesteps.
struct PerStepCoeffs {
  std::vector<double> alpha;
  std::vector<double> beta;
};

inline PerStepCoeffs per_step(const CumulativeSchedule& s) {
  PerStepCoeffs c;
  const int T = s.steps();
  c.alpha.assign(static_cast<size_t>(T) + 1, 1.0);
  c.beta.assign(static_cast<size_t>(T) + 1, 0.0);
  for (int t = 1; t <= T; ++t) {
    c.alpha[static_cast<size_t>(t)] = s[t] / s[t - 1];
    c.beta[static_cast<size_t>(t)] = 1.0 - c.alpha[static_cast<size_t>(t)];
  }
  return c;
}

inline CumulativeSchedule from_per_step(std::span<const double> alpha) {
  std::vector<double> v(alpha.size());
  v[0] = 1.0;
  for (size_t t = 1; t < alpha.size(); ++t) v[t] = v[t - 1] * alpha[t];
  return CumulativeSchedule::from_values(std::move(v));
}

inline double snr(double abar) {
  if (abar == 1.0) throw NumericalError("infinite SNR");
  if (!(abar > 0.0 && abar < 1.0)) throw UsageError("snr: abar must lie in (0,1)");
  return abar / (1.0 - abar);
}

// Per-token denoising losses l_t for t=1..T (index 0 unused), pooled over
// `count` aligned occurrences.
struct DifficultyProfile {
  std::vector<double> loss;
  double count = 0.0;

  int steps() const { return loss.empty() ? 0 : static_cast<int>(loss.size()) - 1; }

  // Occurrence-weighted running mean; associative up to rounding.
  void merge(const DifficultyProfile& o) {
    if (o.count <= 0.0) return;
    if (count <= 0.0) {
      *this = o;
      return;
    }
    if (o.loss.size() != loss.size()) throw UsageError("profile merge: step count mismatch");
    const double total = count + o.count;
    for (size_t t = 1; t < loss.size(); ++t) loss[t] = (loss[t] * count + o.loss[t] * o.count) / total;
    count = total;
  }
};

using ProfileSet = std::map<int, DifficultyProfile>;

// Windows W_m = {(m-1)K+1, ..., min(mK, T)} for m = 1..M, M = ceil(T/K).
struct WindowSpec {
  int T = 1;
  int k_win = 1;

  static WindowSpec make(int T, int k_win) {
    if (T < 1 || k_win < 1) throw UsageError("window spec: T and K_win must be >= 1");
    return WindowSpec{T, k_win};
  }
  static WindowSpec default_for(int T) { return make(T, std::max(1, T / 10)); }

  int count() const { return (T + k_win - 1) / k_win; }
  int start(int m) const { return (m - 1) * k_win; }           // t_{m-1}
  int end(int m) const { return std::min(m * k_win, T); }      // t_m
  int size(int m) const { return end(m) - start(m); }
  int window_of(int t) const { return (t - 1) / k_win + 1; }
};

enum class MappingFamily { kLinear, kPolynomial, kExponential, kCosine };

inline std::string family_name(MappingFamily f) {
  switch (f) {
    case MappingFamily::kLinear: return "linear";
    case MappingFamily::kPolynomial: return "polynomial";
    case MappingFamily::kExponential: return "exponential";
    case MappingFamily::kCosine: return "cosine";
  }
  return "linear";
}

inline MappingFamily parse_family(std::string_view name) {
  if (name == "linear") return MappingFamily::kLinear;
  if (name == "polynomial") return MappingFamily::kPolynomial;
  if (name == "exponential") return MappingFamily::kExponential;
  if (name == "cosine") return MappingFamily::kCosine;
  throw UsageError("unknown mapping family '" + std::string(name) + "'");
}

struct MappingConfig {
  MappingFamily family = MappingFamily::kLinear;
  double p = 2.0;     // polynomial exponent
  double beta = 3.0;  // exponential rate
  double tau = 1e-8;
  std::optional<double> alpha_min;  // unset: min baseline per-step coefficient

  void validate() const {
    if (!(tau > 0.0)) throw UsageError("mapping: tau must be positive");
    if (!(p >= 1.0)) throw UsageError("mapping: p must be >= 1");
    if (!(beta > 0.0)) throw UsageError("mapping: beta must be positive");
    if (alpha_min && !(*alpha_min > 0.0 && *alpha_min < 1.0)) throw UsageError("mapping: alpha_min must lie in (0,1)");
  }

  // Shape phi on [0,1]; arguments outside are clamped first.
  double shape(double u) const {
    u = std::clamp(u, 0.0, 1.0);
    switch (family) {
      case MappingFamily::kLinear: return u;
      case MappingFamily::kPolynomial: return std::pow(u, p);
      case MappingFamily::kExponential: return std::expm1(beta * u) / std::expm1(beta);
      case MappingFamily::kCosine: return 0.5 * (1.0 - std::cos(std::numbers::pi * u));
    }
    return u;
  }
};

struct WindowStats {
  std::map<int, std::vector<double>> mean;  // token id -> window means, index 1..M
  std::vector<double> lmin;                 // index 1..M
  std::vector<double> lmax;
};

inline std::vector<double> window_means(const DifficultyProfile& prof, const WindowSpec& spec) {
  if (prof.steps() < spec.T) throw UsageError("window_stats: profile does not cover t=1..T");
  std::vector<double> out(static_cast<size_t>(spec.count()) + 1, 0.0);
  for (int m = 1; m <= spec.count(); ++m) {
    double sum = 0.0;
    for (int t = spec.start(m) + 1; t <= spec.end(m); ++t) sum += prof.loss[static_cast<size_t>(t)];
    out[static_cast<size_t>(m)] = sum / spec.size(m);
  }
  return out;
}

inline WindowStats window_stats(const ProfileSet& profiles, const WindowSpec& spec) {
  if (profiles.empty()) throw DataError("no aligned tokens");
  WindowStats ws;
  const size_t M = static_cast<size_t>(spec.count());
  ws.lmin.assign(M + 1, std::numeric_limits<double>::infinity());
  ws.lmax.assign(M + 1, -std::numeric_limits<double>::infinity());
  for (const auto& [id, prof] : profiles) {
    auto means = window_means(prof, spec);
    for (size_t m = 1; m <= M; ++m) {
      ws.lmin[m] = std::min(ws.lmin[m], means[m]);
      ws.lmax[m] = std::max(ws.lmax[m], means[m]);
    }
    ws.mean.emplace(id, std::move(means));
  }
  return ws;
}

// Baseline context for one window: the per-step coefficients at both window
// ends plus the difficulty extrema over aligned tokens.
struct WindowContext {
  double alpha_end = 1.0;    // alpha^base at t_m
  double alpha_start = 1.0;  // alpha^base at t_{m-1}
  double lmin = 0.0;
  double lmax = 0.0;
};

// clip(alpha_end + phi((x - lmin)/(lmax - lmin + tau)) (alpha_start - alpha_end), alpha_min, 1)
inline double psi_map(double x, const WindowContext& ctx, const MappingConfig& cfg, double alpha_min) {
  if (ctx.alpha_start < ctx.alpha_end) throw UsageError("psi_map: requires alpha(t_{m-1}) >= alpha(t_m)");
  const double u = (x - ctx.lmin) / (ctx.lmax - ctx.lmin + cfg.tau);
  const double raw = ctx.alpha_end + cfg.shape(u) * (ctx.alpha_start - ctx.alpha_end);
  return std::clamp(raw, alpha_min, 1.0);
}

// Geometric-mean per-step coefficient of the baseline over window m.
inline double window_rate(const CumulativeSchedule& baseline, const WindowSpec& spec, int m) {
  const int a = spec.start(m), b = spec.end(m);
  return std::pow(baseline[b] / baseline[a], 1.0 / static_cast<double>(b - a));
}

inline double default_alpha_min(const CumulativeSchedule& baseline) {
  const auto c = per_step(baseline);
  double lo = 1.0;
  for (int t = 1; t <= baseline.steps(); ++t) lo = std::min(lo, c.alpha[static_cast<size_t>(t)]);
  return std::min(lo, 1.0 - 1e-12);
}

inline double resolve_alpha_min(const CumulativeSchedule& baseline, const MappingConfig& cfg) {
  return cfg.alpha_min ? *cfg.alpha_min : default_alpha_min(baseline);
}

// Window context for window m >= 2. Endpoints are ordered so that the map is
// non-decreasing in difficulty even where the baseline rate rises over time.
inline WindowContext window_context(const CumulativeSchedule& baseline, const WindowSpec& spec, int m, double lmin,
                                    double lmax) {
  const double here = window_rate(baseline, spec, m);
  const double prev = window_rate(baseline, spec, m - 1);
  return WindowContext{std::min(here, prev), std::max(here, prev), lmin, lmax};
}

// Per-step coefficients for one aligned token (index 0 unused): window 1
// keeps the baseline coefficients, every later window gets a constant
// coefficient from psi_map of the token's window-averaged difficulty.
inline std::vector<double> adaptive_coefficients(const CumulativeSchedule& baseline, std::span<const double> window_loss,
                                                 std::span<const double> lmin, std::span<const double> lmax,
                                                 const WindowSpec& spec, const MappingConfig& cfg) {
  cfg.validate();
  if (baseline.steps() != spec.T) throw UsageError("adaptive_coefficients: baseline T does not match window spec");
  const size_t M = static_cast<size_t>(spec.count());
  if (window_loss.size() != M + 1 || lmin.size() != M + 1 || lmax.size() != M + 1) {
    throw UsageError("adaptive_coefficients: window arrays must have M+1 entries");
  }
  const double alpha_min = resolve_alpha_min(baseline, cfg);
  auto alpha = per_step(baseline).alpha;
  for (int m = 2; m <= spec.count(); ++m) {
    const auto mi = static_cast<size_t>(m);
    const auto ctx = window_context(baseline, spec, m, lmin[mi], lmax[mi]);
    const double a = psi_map(window_loss[mi], ctx, cfg, alpha_min);
    for (int t = spec.start(m) + 1; t <= spec.end(m); ++t) alpha[static_cast<size_t>(t)] = a;
  }
  return alpha;
}

// Baseline plus learned schedules keyed by vocabulary token id.
class TokenWiseSchedule {
 public:
  TokenWiseSchedule() = default;
  explicit TokenWiseSchedule(CumulativeSchedule baseline) : baseline_(std::move(baseline)) {}

  const CumulativeSchedule& baseline() const { return baseline_; }
  const std::map<int, CumulativeSchedule>& tokens() const { return tokens_; }
  int steps() const { return baseline_.steps(); }

  void set(int token, CumulativeSchedule s) {
    if (s.steps() != baseline_.steps()) throw UsageError("token schedule length mismatch");
    tokens_.insert_or_assign(token, std::move(s));
  }

  const CumulativeSchedule& lookup(int token, bool aligned) const {
    if (!aligned) return baseline_;
    auto it = tokens_.find(token);
    return it == tokens_.end() ? baseline_ : it->second;
  }

  friend bool operator==(const TokenWiseSchedule&, const TokenWiseSchedule&) = default;

 private:
  CumulativeSchedule baseline_;
  std::map<int, CumulativeSchedule> tokens_;
};

inline TokenWiseSchedule build_token_schedules(const CumulativeSchedule& baseline, const std::set<int>& aligned,
                                               const ProfileSet& profiles, const WindowSpec& spec,
                                               const MappingConfig& cfg) {
  TokenWiseSchedule out(baseline);
  if (aligned.empty()) return out;
  ProfileSet used;
  for (int id : aligned) {
    auto it = profiles.find(id);
    if (it == profiles.end()) throw DataError("no difficulty profile for aligned token " + std::to_string(id));
    used.emplace(id, it->second);
  }
  const auto ws = window_stats(used, spec);
  for (const auto& [id, means] : ws.mean) {
    auto alpha = adaptive_coefficients(baseline, means, ws.lmin, ws.lmax, spec, cfg);
    out.set(id, from_per_step(alpha));
  }
  return out;
}

// Occurrence-weighted per-t mean of the learned schedules.
inline CumulativeSchedule anchor_from(const TokenWiseSchedule& sched, const std::map<int, double>& counts) {
  if (sched.tokens().empty()) throw DataError("anchor: no aligned schedules");
  const int T = sched.steps();
  std::vector<double> acc(static_cast<size_t>(T) + 1, 0.0);
  double total = 0.0;
  for (const auto& [id, s] : sched.tokens()) {
    auto it = counts.find(id);
    if (it == counts.end() || !(it->second > 0.0)) throw DataError("anchor: missing count for token " + std::to_string(id));
    for (int t = 0; t <= T; ++t) acc[static_cast<size_t>(t)] += it->second * s[t];
    total += it->second;
  }
  for (auto& v : acc) v /= total;
  acc[0] = 1.0;
  // Rounding in the weighted mean must not break monotonicity.
  for (size_t t = 1; t < acc.size(); ++t) acc[t] = std::min(acc[t], acc[t - 1]);
  return CumulativeSchedule::from_values(std::move(acc));
}

inline double blend(double w, double base, double anchor) {
  if (!(w >= 0.0 && w <= 1.0)) throw UsageError("blend: weight must lie in [0,1]");
  return (1.0 - w) * base + w * anchor;
}

// Posterior q(z_{t-1} | z_t, z_0) coefficients: mean = u * z_t + e * z_0,
// variance = var.
struct PosteriorCoeffs {
  double u = 0.0;
  double e = 0.0;
  double var = 0.0;
};

inline PosteriorCoeffs posterior_coefficients(double abar_t, double abar_prev) {
  const double alpha = abar_t / abar_prev;
  const double beta = 1.0 - alpha;
  const double denom = 1.0 - abar_t;
  PosteriorCoeffs c;
  c.u = std::sqrt(alpha) * (1.0 - abar_prev) / denom;
  c.e = std::sqrt(abar_prev) * beta / denom;
  c.var = (1.0 - abar_prev) / denom * beta;
  return c;
}

// Schedule table file: versioned header, then "t<TAB>abar" rows grouped in
// [baseline], [token <id>] and [anchor] sections.
struct ScheduleFile {
  TokenWiseSchedule schedules;
  std::optional<CumulativeSchedule> anchor;
  std::string family = "linear";
  double tau = 1e-8;
  double alpha_min = 0.0;
  int k_win = 1;
};

inline void save_schedule_file(std::ostream& out, const ScheduleFile& f) {
  out << "# kgdiff-schedule v1\n";
  out << "T=" << f.schedules.steps() << '\n';
  out << "family=" << f.family << '\n';
  out << "tau=" << text::format_double(f.tau) << '\n';
  out << "alpha_min=" << text::format_double(f.alpha_min) << '\n';
  out << "k_win=" << f.k_win << '\n';
  auto rows = [&](const CumulativeSchedule& s) {
    for (int t = 0; t <= s.steps(); ++t) out << t << '\t' << text::format_double(s[t]) << '\n';
  };
  out << "[baseline]\n";
  rows(f.schedules.baseline());
  for (const auto& [id, s] : f.schedules.tokens()) {
    out << "[token " << id << "]\n";
    rows(s);
  }
  if (f.anchor) {
    out << "[anchor]\n";
    rows(*f.anchor);
  }
}

inline ScheduleFile load_schedule_file(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "# kgdiff-schedule v1") throw DataError("schedule file: bad header");
  ScheduleFile f;
  int T = -1;
  std::string section;
  std::vector<double> current;
  std::optional<CumulativeSchedule> baseline;
  std::map<int, CumulativeSchedule> tokens;
  auto flush = [&]() {
    if (section.empty()) return;
    if (static_cast<int>(current.size()) != T + 1) throw DataError("schedule file: section '" + section + "' has wrong length");
    auto s = CumulativeSchedule::from_values(current);
    if (section == "baseline") {
      baseline = std::move(s);
    } else if (section == "anchor") {
      f.anchor = std::move(s);
    } else if (section.rfind("token ", 0) == 0) {
      tokens.emplace(static_cast<int>(text::parse_int(section.substr(6))), std::move(s));
    } else {
      throw DataError("schedule file: unknown section '" + section + "'");
    }
    current.clear();
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() == '[') {
      flush();
      if (line.back() != ']') throw DataError("schedule file: bad section line");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    if (section.empty()) {
      auto eq = line.find('=');
      if (eq == std::string::npos) throw DataError("schedule file: bad header line '" + line + "'");
      const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
      if (key == "T") T = static_cast<int>(text::parse_int(val));
      else if (key == "family") f.family = val;
      else if (key == "tau") f.tau = text::parse_double(val);
      else if (key == "alpha_min") f.alpha_min = text::parse_double(val);
      else if (key == "k_win") f.k_win = static_cast<int>(text::parse_int(val));
      else throw DataError("schedule file: unknown header key '" + key + "'");
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("schedule file: bad row '" + line + "'");
    const auto t = text::parse_int(std::string_view(line).substr(0, tab));
    if (t != static_cast<long long>(current.size())) throw DataError("schedule file: rows must be t=0..T in order");
    current.push_back(text::parse_double(std::string_view(line).substr(tab + 1)));
  }
  flush();
  if (T < 1 || !baseline) throw DataError("schedule file: missing T or baseline");
  f.schedules = TokenWiseSchedule(std::move(*baseline));
  for (auto& [id, s] : tokens) f.schedules.set(id, std::move(s));
  return f;
}

}  // namespace kgdiff

#endif  // KGDIFF_SCHEDULE_HPP_
