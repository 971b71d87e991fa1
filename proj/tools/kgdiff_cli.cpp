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

// kgdiff command-line interface.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kgdiff.hpp"

namespace fs = std::filesystem;
using namespace kgdiff;

namespace {

// ---- I/O helpers ------------------------------------------------------------

class Input {
 public:
  explicit Input(const std::string& path) {
    if (path == "-") return;
    file_ = std::make_unique<std::ifstream>(path, std::ios::binary);
    if (!*file_) throw UsageError("cannot open '" + path + "'");
  }
  std::istream& get() { return file_ ? *file_ : std::cin; }

 private:
  std::unique_ptr<std::ifstream> file_;
};

class Output {
 public:
  explicit Output(const std::string& path) : path_(path) {
    if (path == "-" || path.empty()) return;
    if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw UsageError("cannot write '" + path + "'");
  }
  std::ostream& get() { return file_ ? *file_ : std::cout; }
  void close() {
    if (file_) {
      file_->close();
      if (!*file_) throw UsageError("failed writing '" + path_ + "'");
    }
  }

 private:
  std::string path_;
  std::unique_ptr<std::ofstream> file_;
};

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what);
  if (path != "-" && !fs::exists(path)) throw UsageError(std::string(what) + " '" + path + "' does not exist");
}

std::vector<Example> read_dataset(const std::string& path) {
  require_file(path, "dataset");
  Input in(path);
  auto parsed = parse_dataset(in.get());
  for (const auto& w : parsed.warnings) warn(path + ": " + w);
  if (!parsed.errors.empty()) {
    std::string msg;
    for (const auto& e : parsed.errors) msg += path + ": line " + std::to_string(e.line) + ": " + e.message + "\n";
    msg.pop_back();
    throw DataError(msg);
  }
  return parsed.examples;
}

Vocab read_vocab(const std::string& path) {
  require_file(path, "vocabulary");
  Input in(path);
  return Vocab::load(in.get());
}

UserAliases read_aliases(const std::string& path) {
  if (path.empty()) return {};
  require_file(path, "alias file");
  Input in(path);
  return load_alias_file(in.get());
}

// One label per line; blank lines skipped.
std::vector<std::string> read_lines(const std::string& path) {
  require_file(path, "lexicon");
  Input in(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in.get(), line)) {
    if (auto t = text::trim_ws(line); !t.empty()) out.emplace_back(t);
  }
  return out;
}

// Predictions: line-delimited {"id", "text"} objects keyed by id.
std::map<std::string, std::string> read_predictions(const std::string& path) {
  require_file(path, "predictions");
  Input in(path);
  std::map<std::string, std::string> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in.get(), line)) {
    ++lineno;
    if (text::trim_ws(line).empty()) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      const auto& id = obj.at("id");
      out[id.is_string() ? id.get<std::string>() : id.dump()] = obj.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

const std::string& prediction_for(const std::map<std::string, std::string>& preds, const std::string& id,
                                  const std::string& path) {
  auto it = preds.find(id);
  if (it == preds.end()) throw DataError(path + ": no prediction for example '" + id + "'");
  return it->second;
}

// Entity lexicon: every entity of the dataset graphs plus an optional file.
std::vector<std::string> entity_lexicon(const std::vector<Example>& data, const std::string& extra) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  auto add = [&](const std::string& l) {
    if (seen.insert(text::normalize_phrase(l)).second) out.push_back(l);
  };
  for (const auto& ex : data) {
    for (const auto& e : ex.graph.entities()) add(e);
  }
  if (!extra.empty()) {
    for (const auto& l : read_lines(extra)) add(l);
  }
  return out;
}

// ---- configuration ----------------------------------------------------------

struct RunConfig {
  ConfigMap file;
  TrainConfig train;
  std::string sampler = "ddpm";
  int ddim_steps = 0;  // 0: T
  bool use_anchor = true;
  std::vector<double> lambdas{0.0, 0.5, 1.0};
  int min_count = 1;
};

const std::set<std::string>& run_keys() {
  static const std::set<std::string> k = [] {
    auto s = TrainConfig::keys();
    s.insert({"sample.sampler", "sample.ddim_steps", "sample.use_anchor", "eval.lambdas", "vocab.min_count"});
    return s;
  }();
  return k;
}

RunConfig load_run_config(const std::string& path, std::optional<uint64_t> seed) {
  RunConfig rc;
  if (!path.empty()) {
    require_file(path, "config file");
    Input in(path);
    rc.file = ConfigMap::parse(in.get());
    if (const auto unknown = rc.file.unknown_keys(run_keys()); !unknown.empty()) {
      throw UsageError("config: unknown key '" + unknown.front() + "'");
    }
  }
  rc.train = TrainConfig::from_config(rc.file);
  if (seed) rc.train.seed = *seed;
  rc.sampler = rc.file.get("sample.sampler", rc.sampler);
  rc.ddim_steps = rc.file.get("sample.ddim_steps", rc.ddim_steps);
  rc.use_anchor = rc.file.get("sample.use_anchor", rc.use_anchor);
  rc.lambdas = rc.file.get_list("eval.lambdas", rc.lambdas);
  rc.min_count = rc.file.get("vocab.min_count", rc.min_count);
  return rc;
}

std::vector<double> parse_lambdas(const std::string& s) {
  ConfigMap c;
  c.set("lambdas", s);
  auto out = c.get_list("lambdas", {});
  if (out.empty()) throw UsageError("--lambdas: empty list");
  for (double l : out) {
    if (l < 0.0) throw UsageError("--lambdas: values must be non-negative");
  }
  return out;
}

std::vector<std::string> vocab_corpus(const std::vector<Example>& data) {
  std::vector<std::string> corpus;
  for (const auto& ex : data) {
    corpus.push_back(ex.text);
    corpus.push_back(serialize_graph(ex.graph));
  }
  return corpus;
}

void write_json_line(std::ostream& out, const nlohmann::ordered_json& j) { out << j.dump() << '\n'; }

// ---- commands ---------------------------------------------------------------

struct Globals {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out = "-";
};

int cmd_serialize(const Globals& g, const std::string& data) {
  const auto examples = read_dataset(data);
  Output out(g.out);
  for (const auto& ex : examples) out.get() << serialize_graph(ex.graph) << '\t' << ex.text << '\n';
  out.close();
  return 0;
}

int cmd_build_vocab(const Globals& g, const std::string& data, std::optional<int> min_count) {
  const auto rc = load_run_config(g.config, g.seed);
  const auto examples = read_dataset(data);
  const auto vocab = build_vocab(vocab_corpus(examples), min_count.value_or(rc.min_count));
  Output out(g.out);
  vocab.save(out.get());
  out.close();
  std::cerr << "vocabulary: " << vocab.size() << " tokens\n";
  return 0;
}

int cmd_align(const Globals& g, const std::string& data, const std::string& aliases, int k) {
  const auto examples = read_dataset(data);
  const auto extra = read_aliases(aliases);
  Output out(g.out);
  for (const auto& ex : examples) {
    std::vector<std::string> warnings;
    const auto table = expand_aliases(ex.graph, k, extra, &warnings);
    for (const auto& w : warnings) warn(ex.id + ": " + w);
    out.get() << alignment_to_json(ex.id, detect_and_link(ex.text, table), ex.graph.elements()).dump() << '\n';
  }
  out.close();
  return 0;
}

int cmd_align_score(const Globals& g, const std::string& data, const std::string& pred_path,
                    const std::string& gold_path) {
  const auto examples = read_dataset(data);
  require_file(pred_path, "predicted alignments");
  require_file(gold_path, "gold alignments");
  Input pin(pred_path), gin(gold_path);
  const auto pred = load_gold_alignments(pin.get());
  const auto gold = load_gold_alignments(gin.get());
  AlignmentReport total;
  Output out(g.out);
  for (const auto& ex : examples) {
    auto git = gold.find(ex.id);
    if (git == gold.end()) continue;
    auto pit = pred.find(ex.id);
    const AlignmentSet p = pit == pred.end() ? AlignmentSet{} : resolve_gold(pit->second, ex.graph);
    const auto r = score_alignment(p, resolve_gold(git->second, ex.graph), text::split_ws(ex.text).size(), ex.graph);
    total.merge(r);
    nlohmann::ordered_json j;
    j["example_id"] = ex.id;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    write_json_line(out.get(), j);
  }
  if (total.examples == 0) throw DataError("align-score: no example has gold alignments");
  nlohmann::ordered_json s;
  s["summary"] = true;
  s["examples"] = total.examples;
  s["precision"] = total.precision;
  s["recall"] = total.recall;
  s["f1"] = total.f1;
  s["token_coverage"] = total.token_coverage;
  s["node_coverage"] = total.node_coverage;
  s["mean_links"] = total.alignment_size;
  write_json_line(out.get(), s);
  out.close();
  return 0;
}

std::vector<PreparedExample> prepare_all(const std::vector<Example>& data, const Vocab& vocab, const TrainConfig& cfg,
                                         const UserAliases& aliases) {
  std::vector<PreparedExample> out;
  size_t truncated_text = 0, truncated_graph = 0;
  for (const auto& ex : data) {
    if (tokenize(ex.text).size() > static_cast<size_t>(cfg.model.max_len)) ++truncated_text;
    out.push_back(prepare_example(ex, vocab, static_cast<size_t>(cfg.model.max_len), cfg.alias_k, aliases));
    if (out.back().graph_ids.size() > static_cast<size_t>(cfg.model.max_graph_len)) ++truncated_graph;
  }
  if (truncated_text) warn(std::to_string(truncated_text) + " target texts truncated to model.max_len");
  if (truncated_graph) warn(std::to_string(truncated_graph) + " serialized graphs truncated to model.max_graph_len");
  return out;
}

void write_schedule_table(const std::string& path, const ScheduleState& s, const TrainConfig& cfg) {
  ScheduleFile f;
  f.schedules = s.schedules;
  f.anchor = s.anchor;
  f.family = family_name(cfg.mapping.family);
  f.tau = cfg.mapping.tau;
  f.alpha_min = resolve_alpha_min(s.schedules.baseline(), cfg.mapping);
  f.k_win = cfg.window_spec().k_win;
  Output out(path);
  save_schedule_file(out.get(), f);
  out.close();
}

void write_profiles(const std::string& path, const ProfileSet& profiles, const Vocab& vocab) {
  Output out(path);
  out.get() << "token\tid\tcount\tt\tloss\n";
  for (const auto& [id, p] : profiles) {
    for (size_t t = 1; t < p.loss.size(); ++t) {
      out.get() << vocab.token(id) << '\t' << id << '\t' << text::format_double(p.count) << '\t' << t << '\t'
                << text::format_double(p.loss[t]) << '\n';
    }
  }
  out.close();
}

int cmd_train(const Globals& g, const std::string& data, const std::string& vocab_path, const std::string& aliases,
              std::optional<int> steps, int checkpoint_every) {
  auto rc = load_run_config(g.config, g.seed);
  if (steps) rc.train.steps = *steps;
  if (g.out == "-" || g.out.empty()) throw UsageError("train: --out must name an output directory");
  const auto examples = read_dataset(data);
  if (examples.empty()) throw DataError("train: dataset is empty");
  const auto extra = read_aliases(aliases);
  const Vocab vocab = vocab_path.empty() ? build_vocab(vocab_corpus(examples), rc.min_count) : read_vocab(vocab_path);
  rc.train.model.vocab = vocab.size();
  rc.train.validate();
  const auto prepared = prepare_all(examples, vocab, rc.train, extra);

  const fs::path dir(g.out);
  fs::create_directories(dir);
  {
    Output v((dir / "vocab.tsv").string());
    vocab.save(v.get());
    v.close();
    Output c((dir / "config.txt").string());
    rc.train.to_config().write(c.get());
    c.close();
  }
  Output log((dir / "metrics.tsv").string());
  log.get() << "step\tlr\tgrad_norm\tdenoise\tconsistency\trounding\tlength\ttotal\n";

  TrainHooks hooks;
  hooks.on_step = [&](const StepLog& s) {
    log.get() << s.step << '\t' << text::format_double(s.lr) << '\t' << text::format_double(s.grad_norm) << '\t'
              << text::format_double(s.loss.denoise) << '\t' << text::format_double(s.loss.consistency) << '\t'
              << text::format_double(s.loss.rounding) << '\t' << text::format_double(s.loss.length) << '\t'
              << text::format_double(s.loss.total) << '\n';
    if ((s.step + 1) % 100 == 0 || s.step + 1 == rc.train.steps) {
      std::cerr << "step " << s.step + 1 << "/" << rc.train.steps << " loss " << s.loss.total << '\n';
    }
  };
  hooks.on_schedule_update = [&](int step, const ScheduleState& s) {
    std::cerr << "schedule update at step " << step << ": " << s.schedules.tokens().size() << " aligned tokens\n";
    write_schedule_table((dir / ("schedules-" + std::to_string(step) + ".tsv")).string(), s, rc.train);
  };
  hooks.checkpoint_every = checkpoint_every;
  hooks.on_checkpoint = [&](int step, const DenoiserParams& params, const ScheduleState& s) {
    Checkpoint c{rc.train, vocab, params, s.schedules, s.anchor, step};
    save_checkpoint((dir / ("checkpoint-" + std::to_string(step) + ".bin")).string(), c);
  };

  const auto result = train(prepared, rc.train, hooks);
  log.close();
  save_checkpoint((dir / "checkpoint.bin").string(), make_checkpoint(rc.train, vocab, result));
  write_schedule_table((dir / "schedules.tsv").string(), result.schedules, rc.train);
  if (!result.schedules.profiles.empty()) write_profiles((dir / "profiles.tsv").string(), result.schedules.profiles, vocab);
  std::cerr << "wrote " << (dir / "checkpoint.bin").string() << '\n';
  return 0;
}

Checkpoint load_checked_checkpoint(const std::string& path, const std::string& vocab_path) {
  require_file(path, "checkpoint");
  auto ckpt = load_checkpoint(path);
  if (!vocab_path.empty() && read_vocab(vocab_path).fingerprint() != ckpt.vocab.fingerprint()) {
    throw DataError("vocabulary '" + vocab_path + "' does not match the checkpoint vocabulary");
  }
  return ckpt;
}

int cmd_schedule_build(const Globals& g, const std::string& ckpt_path, const std::string& data,
                       const std::string& vocab_path, const std::string& aliases, const std::string& profiles_out) {
  const auto ckpt = load_checked_checkpoint(ckpt_path, vocab_path);
  TrainConfig cfg = ckpt.config;
  if (!g.config.empty()) cfg = TrainConfig::from_config(load_run_config(g.config, g.seed).file, cfg);
  if (g.seed) cfg.seed = *g.seed;
  cfg.model.vocab = ckpt.vocab.size();
  cfg.validate();
  const auto examples = read_dataset(data);
  const auto prepared = prepare_all(examples, ckpt.vocab, cfg, read_aliases(aliases));
  Rng rng(cfg.seed);
  const ScheduleState current{ckpt.schedules, ckpt.anchor, {}};
  const auto next = update_schedules(prepared, ckpt.params, current, cfg, rng);
  write_schedule_table(g.out, next, cfg);
  if (!profiles_out.empty()) write_profiles(profiles_out, next.profiles, ckpt.vocab);
  return 0;
}

int cmd_toy_example(const Globals& g) {
  const auto r = toy::run_noising_example();
  Output out(g.out);
  auto& os = out.get();
  int failed = 0;
  auto verdict = [&](bool ok) {
    failed += !ok;
    return ok ? "PASS" : "FAIL";
  };
  os << "baseline SNR (table grid)\n";
  os << "t\tabar\tsnr\tlisted\tverdict\n";
  for (size_t k = 0; k < toy::kSampleSteps.size(); ++k) {
    const int t = toy::kSampleSteps[k];
    const double s = snr(r.baseline[t]);
    const double tol = t == 1 ? 0.5 : 0.01;
    os << t << '\t' << text::format_double(r.baseline[t]) << '\t' << text::format_double(s) << '\t'
       << toy::kBaselineSnr[k] << '\t' << verdict(std::abs(s - toy::kBaselineSnr[k]) <= tol) << '\n';
  }
  os << "\nadaptive SNR (tabulated adaptive abar)\n";
  os << "t\tabar\tsnr\tlisted\treconstructed_abar\tverdict\n";
  for (size_t k = 0; k + 1 < toy::kSnrSteps.size(); ++k) {
    const int t = toy::kSnrSteps[k];
    size_t idx = 0;
    while (toy::kSampleSteps[idx] != t) ++idx;
    const double s = snr(toy::kAdaptiveAbar[idx]);
    os << t << '\t' << toy::kAdaptiveAbar[idx] << '\t' << text::format_double(s) << '\t' << toy::kAdaptiveSnr[k]
       << '\t' << text::format_double(r.adaptive[t]) << '\t'
       << verdict(std::abs(s - toy::kAdaptiveSnr[k]) <= 0.02) << '\n';
  }
  os << "\nwindow coefficients (mapping evaluated directly vs listed column)\n";
  os << "m\talpha_start\talpha_end\tdifficulty\tmapped\tlisted\tdelta\n";
  const MappingConfig mcfg;
  for (const auto& row : toy::kWindowRows) {
    const WindowContext ctx{std::min(row.alpha_start, row.alpha_end), std::max(row.alpha_start, row.alpha_end),
                            toy::kNoisingLmin, toy::kNoisingLmax};
    const double a = psi_map(row.difficulty, ctx, mcfg, 0.0);
    os << row.m << '\t' << row.alpha_start << '\t' << row.alpha_end << '\t' << row.difficulty << '\t'
       << text::format_double(a) << '\t' << row.alpha_listed << '\t' << text::format_double(a - row.alpha_listed)
       << '\n';
  }
  os << "\nreconstructed schedule shape\n";
  bool monotone = r.adaptive[0] == 1.0;
  for (int t = 1; t <= toy::kNoisingT; ++t) monotone = monotone && r.adaptive[t] <= r.adaptive[t - 1];
  int below = 0, worst_t = 0;
  double worst = 0.0;
  for (int t = toy::kNoisingWindow; t < toy::kNoisingT; ++t) {
    const double gap = r.adaptive[t] - r.baseline[t];
    if (gap < 0.0) {
      ++below;
      if (gap < worst) {
        worst = gap;
        worst_t = t;
      }
    }
  }
  os << "monotone and starts at 1\t" << verdict(monotone) << '\n';
  os << "dominates baseline on [200, 2000)\t" << verdict(below == 0);
  if (below) os << "\t(" << below << " steps below; largest shortfall " << text::format_double(-worst) << " at t=" << worst_t << ")";
  os << '\n';
  os << "\nt\tbaseline\tadaptive\n";
  for (int t = 0; t <= toy::kNoisingT; t += 100) {
    os << t << '\t' << text::format_double(r.baseline[t]) << '\t' << text::format_double(r.adaptive[t]) << '\n';
  }
  os << "\n" << failed << " checks failed\n";
  out.close();
  return 0;
}

int cmd_sample(const Globals& g, const std::string& ckpt_path, const std::string& data, const std::string& vocab_path,
               std::optional<std::string> sampler, std::optional<int> ddim_steps, bool no_anchor,
               size_t length, const std::string& log_path) {
  const auto rc = load_run_config(g.config, g.seed);
  const auto ckpt = load_checked_checkpoint(ckpt_path, vocab_path);
  const auto examples = read_dataset(data);
  const std::string kind = sampler.value_or(rc.sampler);
  if (kind != "ddpm" && kind != "ddim") throw UsageError("sample: --sampler must be ddpm or ddim");
  const auto baseline = ckpt.schedules.baseline();
  const int t_prime = ddim_steps.value_or(rc.ddim_steps ? rc.ddim_steps : baseline.steps());
  SampleOptions opt;
  opt.use_anchor = rc.use_anchor && !no_anchor;
  opt.length = length;
  const uint64_t seed = g.seed.value_or(ckpt.config.seed);

  Output out(g.out);
  std::optional<Output> log;
  if (!log_path.empty()) {
    log.emplace(log_path);
    log->get() << "id\tsampler\tsteps\tdenoiser_calls\tlength\n";
  }
  bool warned = false;
  for (size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    const auto ids = encode_ids(serialize_graph(ex.graph), ckpt.vocab);
    Rng rng(seed + i);
    const auto r = kind == "ddpm" ? sample_ddpm(ids, ckpt.params, baseline, ckpt.anchor_ptr(), rng, opt)
                                  : sample_ddim(ids, ckpt.params, baseline, ckpt.anchor_ptr(), t_prime, rng, opt);
    if (!warned) {
      for (const auto& w : r.warnings) warn(w);
      warned = true;
    }
    nlohmann::ordered_json j;
    j["id"] = ex.id;
    j["text"] = decode(r.tokens, ckpt.vocab);
    j["length"] = r.length;
    j["denoiser_calls"] = r.denoiser_calls;
    write_json_line(out.get(), j);
    if (log) {
      log->get() << ex.id << '\t' << kind << '\t' << (kind == "ddpm" ? baseline.steps() : t_prime) << '\t'
                 << r.denoiser_calls << '\t' << r.length << '\n';
    }
  }
  out.close();
  if (log) log->close();
  return 0;
}

// FGT@0 must equal F1 and FGT must not increase with lambda.
bool fgt_invariants_hold(const FGTReport& r) {
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& [l, v] : r.fgt) {
    if (l == 0.0 && v != r.f1) return false;
    if (v > prev) return false;
    prev = v;
  }
  return true;
}

int cmd_eval_fgt(const Globals& g, const std::string& data, const std::string& pred_path,
                 std::optional<std::string> lambdas, const std::string& lexicon, const std::string& aliases, int k) {
  const auto rc = load_run_config(g.config, g.seed);
  const auto lam = lambdas ? parse_lambdas(*lambdas) : rc.lambdas;
  const auto examples = read_dataset(data);
  const auto preds = read_predictions(pred_path);
  const auto lex = entity_lexicon(examples, lexicon);
  MetricOptions opt{k, read_aliases(aliases)};
  std::vector<ExampleScore> scores;
  bool ok = true;
  Output out(g.out);
  for (const auto& ex : examples) {
    const auto& text = prediction_for(preds, ex.id, pred_path);
    if (text::split_ws(text).empty()) throw DataError("eval-fgt: prediction for '" + ex.id + "' is empty");
    ExampleScore s{ex.id, fgt_report(extract_entity_sets(ex.graph, text, lex, opt), lam), std::nullopt,
                   bleu(text, {ex.text})};
    ok = ok && fgt_invariants_hold(s.fgt);
    write_json_line(out.get(), score_to_json(s));
    scores.push_back(std::move(s));
  }
  write_json_line(out.get(), summary_json(scores));
  out.close();
  if (!ok) throw NumericalError("eval-fgt: FGT invariant check failed");
  return 0;
}

int cmd_eval_esr(const Globals& g, const std::string& data, const std::string& edited, const std::string& pred_path,
                 const std::string& pred_edited_path, const std::string& lexicon, const std::string& aliases, int k) {
  const auto rc = load_run_config(g.config, g.seed);
  const auto originals = read_dataset(data);
  const auto edits = read_dataset(edited);
  std::map<std::string, const Example*> edit_by_id;
  for (const auto& ex : edits) edit_by_id[ex.id] = &ex;
  const auto preds = read_predictions(pred_path);
  const auto preds2 = read_predictions(pred_edited_path);
  auto all = originals;
  all.insert(all.end(), edits.begin(), edits.end());
  const auto lex = entity_lexicon(all, lexicon);
  MetricOptions opt{k, read_aliases(aliases)};
  std::vector<ExampleScore> scores;
  bool ok = true;
  Output out(g.out);
  for (const auto& ex : originals) {
    auto it = edit_by_id.find(ex.id);
    if (it == edit_by_id.end()) throw DataError("eval-esr: no edited graph for example '" + ex.id + "'");
    const auto& s1 = prediction_for(preds, ex.id, pred_path);
    const auto& s2 = prediction_for(preds2, ex.id, pred_edited_path);
    const auto r = esr(ex.graph, s1, it->second->graph, s2, lex, opt);
    ok = ok && r.score >= 0.0 && r.score <= 1.0;
    if (text::split_ws(s2).empty()) throw DataError("eval-esr: edited prediction for '" + ex.id + "' is empty");
    ExampleScore s{ex.id, fgt_report(extract_entity_sets(it->second->graph, s2, lex, opt), rc.lambdas), r.score,
                   std::nullopt};
    auto j = score_to_json(s);
    j["delta_g"] = r.delta_g;
    j["delta_t"] = r.delta_t;
    write_json_line(out.get(), j);
    scores.push_back(std::move(s));
  }
  write_json_line(out.get(), summary_json(scores));
  out.close();
  if (!ok) throw NumericalError("eval-esr: ESR outside [0, 1]");
  return 0;
}

int cmd_eval_bleu(const Globals& g, const std::string& data, const std::string& pred_path, int max_n) {
  const auto examples = read_dataset(data);
  const auto preds = read_predictions(pred_path);
  Output out(g.out);
  double sum = 0.0;
  for (const auto& ex : examples) {
    const double b = bleu(prediction_for(preds, ex.id, pred_path), {ex.text}, max_n);
    sum += b;
    nlohmann::ordered_json j;
    j["example_id"] = ex.id;
    j["bleu"] = b;
    write_json_line(out.get(), j);
  }
  nlohmann::ordered_json s;
  s["summary"] = true;
  s["examples"] = examples.size();
  s["bleu"] = examples.empty() ? 0.0 : sum / static_cast<double>(examples.size());
  write_json_line(out.get(), s);
  out.close();
  return 0;
}

// Edited records keep the original id and reference text; the edit itself
// is recorded alongside.
int cmd_edit_gen(const Globals& g, const std::string& data, const std::string& lexicon) {
  const auto examples = read_dataset(data);
  const auto lex = entity_lexicon(examples, lexicon);
  Rng rng(g.seed.value_or(0));
  Output out(g.out);
  for (const auto& ex : examples) {
    auto [edited, ed] = make_edit(ex.graph, lex, rng);
    Example e2{ex.id, std::move(edited), ex.text};
    auto j = example_to_json(e2);
    j["edit"] = {{"triple", ed.triple},
                 {"slot", ed.slot == Slot::kHead ? "head" : "tail"},
                 {"old", ed.old_entity},
                 {"new", ed.new_entity}};
    out.get() << j.dump() << '\n';
  }
  out.close();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kgdiff: graph-conditioned diffusion text generation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  uint64_t seed = 0;
  app.add_option("--config", g.config, "key=value configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides the config)");
  app.add_option("--out,-o", g.out, "output path ('-' for stdout; a directory for train)");

  std::string data, vocab, aliases, pred, gold, ckpt, edited, pred_edited, lexicon, log_path, profiles;
  int k = 5, checkpoint_every = 0, max_n = 4;
  std::optional<int> min_count, steps, ddim_steps;
  std::optional<std::string> sampler, lambdas;
  bool no_anchor = false;
  size_t length = 0;

  auto* serialize = app.add_subcommand("serialize", "print the serialized graph and text of each record");
  serialize->add_option("--data", data, "dataset (JSON lines)")->required();

  auto* build = app.add_subcommand("build-vocab", "build a vocabulary from texts and serialized graphs");
  build->add_option("--data", data)->required();
  build->add_option("--min-count", min_count);

  auto* align = app.add_subcommand("align", "link graph elements to text spans");
  align->add_option("--data", data)->required();
  align->add_option("--aliases", aliases, "element<TAB>alias file");
  align->add_option("--k", k, "aliases per element")->check(CLI::PositiveNumber);

  auto* ascore = app.add_subcommand("align-score", "score predicted alignments against gold");
  ascore->add_option("--data", data)->required();
  ascore->add_option("--pred", pred)->required();
  ascore->add_option("--gold", gold)->required();

  auto* sbuild = app.add_subcommand("schedule-build", "estimate difficulty and build token-wise schedules");
  sbuild->add_option("--checkpoint", ckpt)->required();
  sbuild->add_option("--data", data)->required();
  sbuild->add_option("--vocab", vocab);
  sbuild->add_option("--aliases", aliases);
  sbuild->add_option("--profiles", profiles, "also write the difficulty profiles here");

  auto* toy_cmd = app.add_subcommand("toy-example", "rerun the worked noising example against its tables");

  auto* train_cmd = app.add_subcommand("train", "train a denoiser; writes checkpoint, schedules and metrics log");
  train_cmd->add_option("--data", data)->required();
  train_cmd->add_option("--vocab", vocab, "use this vocabulary instead of building one");
  train_cmd->add_option("--aliases", aliases);
  train_cmd->add_option("--steps", steps);
  train_cmd->add_option("--checkpoint-every", checkpoint_every);

  auto* sample = app.add_subcommand("sample", "generate one text per input graph");
  sample->add_option("--checkpoint", ckpt)->required();
  sample->add_option("--data", data)->required();
  sample->add_option("--vocab", vocab, "must match the checkpoint vocabulary");
  sample->add_option("--sampler", sampler, "ddpm or ddim");
  sample->add_option("--ddim-steps", ddim_steps, "T' for ddim");
  sample->add_flag("--no-anchor", no_anchor, "sample with the baseline schedule only");
  sample->add_option("--length", length, "fixed output length (default: length head)");
  sample->add_option("--log", log_path, "per-example denoiser call log");

  auto* efgt = app.add_subcommand("eval-fgt", "factual grounding of predictions");
  efgt->add_option("--data", data)->required();
  efgt->add_option("--pred", pred)->required();
  efgt->add_option("--lambdas", lambdas, "comma-separated penalty weights");
  efgt->add_option("--lexicon", lexicon, "extra entity labels, one per line");
  efgt->add_option("--aliases", aliases);
  efgt->add_option("--k", k)->check(CLI::PositiveNumber);

  auto* eesr = app.add_subcommand("eval-esr", "edit sensitivity of predictions");
  eesr->add_option("--data", data)->required();
  eesr->add_option("--edited", edited)->required();
  eesr->add_option("--pred", pred)->required();
  eesr->add_option("--pred-edited", pred_edited)->required();
  eesr->add_option("--lexicon", lexicon);
  eesr->add_option("--aliases", aliases);
  eesr->add_option("--k", k)->check(CLI::PositiveNumber);

  auto* ebleu = app.add_subcommand("eval-bleu", "sentence BLEU of predictions");
  ebleu->add_option("--data", data)->required();
  ebleu->add_option("--pred", pred)->required();
  ebleu->add_option("--max-n", max_n)->check(CLI::PositiveNumber);

  auto* edit = app.add_subcommand("edit-gen", "replace one entity per graph");
  edit->add_option("--data", data)->required();
  edit->add_option("--lexicon", lexicon);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*serialize) return cmd_serialize(g, data);
    if (*build) return cmd_build_vocab(g, data, min_count);
    if (*align) return cmd_align(g, data, aliases, k);
    if (*ascore) return cmd_align_score(g, data, pred, gold);
    if (*sbuild) return cmd_schedule_build(g, ckpt, data, vocab, aliases, profiles);
    if (*toy_cmd) return cmd_toy_example(g);
    if (*train_cmd) return cmd_train(g, data, vocab, aliases, steps, checkpoint_every);
    if (*sample) return cmd_sample(g, ckpt, data, vocab, sampler, ddim_steps, no_anchor, length, log_path);
    if (*efgt) return cmd_eval_fgt(g, data, pred, lambdas, lexicon, aliases, k);
    if (*eesr) return cmd_eval_esr(g, data, edited, pred, pred_edited, lexicon, aliases, k);
    if (*ebleu) return cmd_eval_bleu(g, data, pred, max_n);
    if (*edit) return cmd_edit_gen(g, data, lexicon);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
