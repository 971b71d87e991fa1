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

#ifndef KGDIFF_CHECKPOINT_HPP_
#define KGDIFF_CHECKPOINT_HPP_

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "kgdiff/config.hpp"
#include "kgdiff/model.hpp"
#include "kgdiff/schedule.hpp"
#include "kgdiff/train.hpp"
#include "kgdiff/vocab.hpp"

namespace kgdiff {

struct Checkpoint {
  TrainConfig config;
  Vocab vocab;
  DenoiserParams params;
  TokenWiseSchedule schedules;
  std::optional<CumulativeSchedule> anchor;
  int64_t step = 0;

  const CumulativeSchedule* anchor_ptr() const { return anchor ? &*anchor : nullptr; }
};

inline Checkpoint make_checkpoint(const TrainConfig& cfg, const Vocab& vocab, const TrainResult& r) {
  return Checkpoint{cfg, vocab, r.params, r.schedules.schedules, r.schedules.anchor, r.step};
}

inline constexpr char kCheckpointMagic[8] = {'K', 'G', 'D', 'F', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

namespace ckpt {

class Writer {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) { put(v, 4); }
  void u64(uint64_t v) { put(v, 8); }
  void i64(int64_t v) { put(static_cast<uint64_t>(v), 8); }
  void f64(double v) { put(std::bit_cast<uint64_t>(v), 8); }
  void str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  void raw(const std::string& s) { buf_.append(s); }
  const std::string& data() const { return buf_; }

 private:
  void put(uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
  uint32_t u32() { return static_cast<uint32_t>(get(4)); }
  uint64_t u64() { return get(8); }
  int64_t i64() { return static_cast<int64_t>(get(8)); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string str() {
    const auto n = u64();
    return std::string(take(n));
  }
  std::string_view take(uint64_t n) {
    if (n > data_.size() - pos_) throw DataError("checkpoint: truncated data");
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  uint64_t get(int bytes) {
    const auto s = take(static_cast<uint64_t>(bytes));
    uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  std::string_view data_;
  size_t pos_ = 0;
};

inline void put_schedule(Writer& w, const CumulativeSchedule& s) {
  w.u64(s.values().size());
  for (double v : s.values()) w.f64(v);
}

inline CumulativeSchedule get_schedule(Reader& r) {
  const auto n = r.u64();
  if (n > (1ull << 32)) throw DataError("checkpoint: schedule too long");
  std::vector<double> v(n);
  for (auto& x : v) x = r.f64();
  return CumulativeSchedule::from_values(std::move(v));
}

}  // namespace ckpt

// Layout: magic, u32 version, u32 section count, then per section a
// length-prefixed name and a length-prefixed payload. Integers and fp64
// values are little-endian.
inline std::string serialize_checkpoint(const Checkpoint& c) {
  std::map<std::string, std::string> sections;
  sections["config"] = c.config.to_config().str();
  {
    std::ostringstream os;
    c.vocab.save(os);
    sections["vocab"] = os.str();
  }
  {
    ckpt::Writer w;
    w.u64(c.vocab.fingerprint());
    sections["vocab_hash"] = w.data();
  }
  {
    ckpt::Writer w;
    w.u64(c.params.count());
    for (const auto& t : c.params.tensors()) {
      w.str(t.name);
      w.u8(t.decay ? 1 : 0);
      w.u64(static_cast<uint64_t>(t.value.rows()));
      w.u64(static_cast<uint64_t>(t.value.cols()));
      for (Eigen::Index i = 0; i < t.value.size(); ++i) w.f64(t.value.data()[i]);
    }
    sections["params"] = w.data();
  }
  {
    ckpt::Writer w;
    ckpt::put_schedule(w, c.schedules.baseline());
    w.u64(c.schedules.tokens().size());
    for (const auto& [id, s] : c.schedules.tokens()) {
      w.i64(id);
      ckpt::put_schedule(w, s);
    }
    sections["schedules"] = w.data();
  }
  if (c.anchor) {
    ckpt::Writer w;
    ckpt::put_schedule(w, *c.anchor);
    sections["anchor"] = w.data();
  }
  {
    ckpt::Writer w;
    w.i64(c.step);
    sections["step"] = w.data();
  }
  ckpt::Writer out;
  out.raw(std::string(kCheckpointMagic, sizeof(kCheckpointMagic)));
  out.u32(kCheckpointVersion);
  out.u32(static_cast<uint32_t>(sections.size()));
  for (const auto& [name, payload] : sections) {
    out.str(name);
    out.str(payload);
  }
  return out.data();
}

inline Checkpoint deserialize_checkpoint(std::string_view data) {
  ckpt::Reader in(data);
  if (data.size() < sizeof(kCheckpointMagic) ||
      in.take(sizeof(kCheckpointMagic)) != std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw DataError("checkpoint: bad magic");
  }
  if (const auto v = in.u32(); v != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(v));
  }
  std::map<std::string, std::string> sections;
  const auto n = in.u32();
  for (uint32_t i = 0; i < n; ++i) {
    auto name = in.str();
    sections[name] = in.str();
  }
  if (!in.done()) throw DataError("checkpoint: trailing bytes");
  auto need = [&](const char* name) -> const std::string& {
    auto it = sections.find(name);
    if (it == sections.end()) throw DataError(std::string("checkpoint: missing section '") + name + "'");
    return it->second;
  };

  std::istringstream cfg_in(need("config"));
  auto cfg = TrainConfig::from_config(ConfigMap::parse(cfg_in));
  std::istringstream vocab_in(need("vocab"));
  auto vocab = Vocab::load(vocab_in);
  cfg.model.vocab = vocab.size();
  {
    ckpt::Reader r(need("vocab_hash"));
    if (r.u64() != vocab.fingerprint()) throw DataError("checkpoint: vocabulary hash mismatch");
  }

  std::vector<NamedTensor> tensors;
  {
    ckpt::Reader r(need("params"));
    const auto count = r.u64();
    for (uint64_t k = 0; k < count; ++k) {
      NamedTensor t;
      t.name = r.str();
      t.decay = r.u8() != 0;
      const auto rows = r.u64(), cols = r.u64();
      if (rows > (1u << 24) || cols > (1u << 24)) throw DataError("checkpoint: tensor too large");
      t.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = r.f64();
      tensors.push_back(std::move(t));
    }
  }
  auto params = DenoiserParams::from_tensors(cfg.model, std::move(tensors));

  ckpt::Reader sr(need("schedules"));
  TokenWiseSchedule sched(ckpt::get_schedule(sr));
  const auto ntok = sr.u64();
  for (uint64_t k = 0; k < ntok; ++k) {
    const auto id = sr.i64();
    sched.set(static_cast<int>(id), ckpt::get_schedule(sr));
  }
  std::optional<CumulativeSchedule> anchor;
  if (sections.count("anchor")) {
    ckpt::Reader r(sections["anchor"]);
    anchor = ckpt::get_schedule(r);
  }
  ckpt::Reader stepr(need("step"));
  return Checkpoint{cfg, std::move(vocab), std::move(params), std::move(sched), std::move(anchor), stepr.i64()};
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write checkpoint '" + path + "'");
  const auto bytes = serialize_checkpoint(c);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw UsageError("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open checkpoint '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return deserialize_checkpoint(os.str());
}

}  // namespace kgdiff

#endif  // KGDIFF_CHECKPOINT_HPP_
