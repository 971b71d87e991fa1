#include <gtest/gtest.h>

#include <sstream>

#include "kgdiff/common.hpp"
#include "kgdiff/vocab.hpp"

namespace kgdiff {
namespace {

TEST(Vocab, ReservedIds) {
  Vocab v;
  EXPECT_EQ(v.id("[PAD]"), 0);
  EXPECT_EQ(v.id("[HEAD]"), kHeadId);
  EXPECT_EQ(v.id("[SEP]"), kSepId);
  EXPECT_EQ(v.id("never-seen"), kUnkId);
}

TEST(BuildVocab, MinCountFilters) {
  const auto v = build_vocab({"a a b"}, 2);
  EXPECT_EQ(v.size(), kNumReserved + 2);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
  EXPECT_TRUE(v.contains("[UNK]"));
}

TEST(BuildVocab, SingleWord) { EXPECT_EQ(build_vocab({"word"}, 1).size(), kNumReserved + 2); }

TEST(BuildVocab, MarkersNeverShadowed) {
  const auto v = build_vocab({"[sep] [SEP] [pad] sep"}, 1);
  EXPECT_EQ(v.id("[SEP]"), kSepId);
  EXPECT_EQ(v.id("[PAD]"), kPadId);
  EXPECT_EQ(v.size(), kNumReserved + 2);
}

TEST(BuildVocab, FrequencyOrderThenLexicographic) {
  const auto v = build_vocab({"b c c a", "b c"}, 1);
  EXPECT_EQ(v.token(6), "c");
  EXPECT_EQ(v.token(7), "b");
  EXPECT_EQ(v.token(8), "a");
}

TEST(BuildVocab, Errors) {
  EXPECT_THROW(build_vocab({}, 1), UsageError);
  EXPECT_THROW(build_vocab({"a"}, 0), UsageError);
}

TEST(Encode, LowercasesAndPads) {
  const auto v = build_vocab({"hello world"}, 1);
  const auto s = encode("Hello WORLD", v, 4);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s.ids[0], v.id("hello"));
  EXPECT_EQ(s.ids[1], v.id("world"));
  EXPECT_EQ(s.ids[2], kPadId);
  EXPECT_EQ(s.ids[3], kPadId);
  EXPECT_EQ(s.length(), 2u);
  EXPECT_EQ(s.is_pad, (std::vector<bool>{false, false, true, true}));
}

TEST(Encode, TruncatesFromTheRight) {
  const auto v = build_vocab({"a b c d e f"}, 1);
  const auto s = encode("a b c d e f", v, 3);
  EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(decode(s, v), "a b c");
}

TEST(Encode, MarkersAreAtomic) {
  const auto v = build_vocab({"[HEAD] usa [REL] hosted"}, 1);
  const auto ids = encode_ids("[head] USA [REL] hosted", v);
  EXPECT_EQ(ids[0], kHeadId);
  EXPECT_EQ(ids[2], kRelId);
}

TEST(Encode, RoundTripOnRandomText) {
  Rng rng(5);
  const std::vector<std::string> words{"alpha", "Beta", "gamma", "DELTA", "eps", "zeta_1", "d.c."};
  const auto v = build_vocab({text::join(words, " ")}, 1);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> w;
    const auto n = rng.uniform_int(1, 12);
    for (int i = 0; i < n; ++i) w.push_back(words[static_cast<size_t>(rng.uniform_int(0, 6))]);
    const std::string s = text::join(w, "  ");
    EXPECT_EQ(decode(encode(s, v, 16), v), text::to_lower(text::join(w, " ")));
  }
}

TEST(TokenSequence, PaddingKeepsPrefix) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> ids;
    const auto n = rng.uniform_int(0, 10);
    for (int i = 0; i < n; ++i) ids.push_back(static_cast<int>(rng.uniform_int(1, 30)));
    const auto n_max = static_cast<size_t>(rng.uniform_int(1, 12));
    const auto s = TokenSequence::from_ids(ids, n_max);
    ASSERT_EQ(s.size(), n_max);
    const size_t keep = std::min(ids.size(), n_max);
    EXPECT_EQ(s.length(), keep);
    for (size_t i = 0; i < keep; ++i) EXPECT_EQ(s.ids[i], ids[i]);
    for (size_t i = keep; i < n_max; ++i) {
      EXPECT_EQ(s.ids[i], kPadId);
      EXPECT_TRUE(s.is_pad[i]);
    }
  }
}

TEST(Vocab, SaveLoadRoundTrip) {
  const auto v = build_vocab({"x y z y"}, 1);
  std::stringstream buf;
  v.save(buf);
  const auto w = Vocab::load(buf);
  EXPECT_EQ(w.tokens(), v.tokens());
  EXPECT_EQ(w.fingerprint(), v.fingerprint());
}

TEST(Vocab, LoadRejectsGaps) {
  std::istringstream in("[PAD]\t0\n[HEAD]\t2\n");
  EXPECT_THROW(Vocab::load(in), DataError);
}

}  // namespace
}  // namespace kgdiff
