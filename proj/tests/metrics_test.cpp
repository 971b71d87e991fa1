#include <gtest/gtest.h>

#include "kgdiff/metrics.hpp"
#include "kgdiff/toy.hpp"

namespace kgdiff {
namespace {

KnowledgeGraph two_triples() {
  return KnowledgeGraph({Triple::make("Ada_Moss", "born_in", "Oslo"), Triple::make("Oslo", "located_in", "Norway")});
}

EntitySet keys(std::initializer_list<const char*> xs) {
  EntitySet out;
  for (const char* x : xs) out.insert(text::normalize_phrase(x));
  return out;
}

TEST(EntitySets, ExactRealization) {
  const auto e = extract_entity_sets(two_triples(), "ada moss was born in oslo and oslo is located in norway .",
                                     toy::entity_lexicon());
  EXPECT_EQ(e.ug, keys({"Ada_Moss", "Oslo", "Norway"}));
  EXPECT_EQ(e.us, e.ug);
  EXPECT_TRUE(e.hs.empty());
  EXPECT_EQ(e.n_words, 13u);
}

TEST(EntitySets, OutOfGraphMentionIsHallucination) {
  const auto e = extract_entity_sets(two_triples(), "ada moss was born in lyon .", toy::entity_lexicon());
  EXPECT_EQ(e.us, keys({"Ada_Moss", "Lyon"}));
  EXPECT_EQ(e.hs, keys({"Lyon"}));
  for (const auto& h : e.hs) EXPECT_EQ(e.ug.count(h), 0u);
}

TEST(EntitySets, UsaWorkedExampleFindsAllEntities) {
  const auto ex = toy::usa_example();
  MetricOptions opt;
  opt.aliases = ex.aliases;
  const auto e = extract_entity_sets(ex.graph, ex.sentence, {}, opt);
  EXPECT_EQ(e.ug.size(), 4u);
  EXPECT_EQ(e.us, e.ug);
  EXPECT_TRUE(e.hs.empty());
}

TEST(Fgt, PerfectRealizationIsOne) {
  EntitySets e{keys({"a", "b"}), keys({"a", "b"}), {}, 5};
  for (double l : {0.0, 0.5, 1.0, 3.0}) EXPECT_DOUBLE_EQ(fgt(e, l), 1.0);
}

TEST(Fgt, HandComputedExample) {
  EntitySets e{keys({"a", "b", "c"}), keys({"a", "b", "x"}), keys({"x"}), 10};
  const auto r = fgt_report(e, {0.0, 1.0});
  EXPECT_NEAR(r.f1, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.precision, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.recall, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.fgt.at(1.0), 0.6, 1e-15);
  EXPECT_DOUBLE_EQ(r.fgt.at(0.0), r.f1);
}

TEST(Fgt, TableArithmetic) {
  EXPECT_NEAR(fgt_value(0.86, 1.08, 16, 0.5), 0.830975, 1e-12);
  EXPECT_NEAR(fgt_value(0.86, 1.08, 16, 1.0), 0.80195, 1e-12);
  EXPECT_DOUBLE_EQ(fgt_value(0.86, 1.08, 16, 0.0), 0.86);
}

TEST(Fgt, MonotoneInLambdaAndHallucinations) {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const double f1 = rng.uniform(), n = 1.0 + static_cast<double>(rng.uniform_int(0, 30));
    const double h = static_cast<double>(rng.uniform_int(0, static_cast<int64_t>(n)));
    const double l = 2.0 * rng.uniform();
    EXPECT_LE(fgt_value(f1, h, n, l + 0.1), fgt_value(f1, h, n, l));
    EXPECT_LE(fgt_value(f1, h + 1, n, l), fgt_value(f1, h, n, l));
  }
}

TEST(Fgt, Errors) {
  EntitySets e{keys({"a"}), {}, {}, 0};
  EXPECT_THROW(fgt(e, 0.5), DataError);
  EXPECT_THROW(fgt_value(1, 0, 5, -0.1), UsageError);
}

TEST(Fgt, EmptyTextEntitiesScoreZero) {
  EntitySets e{keys({"a"}), {}, {}, 3};
  EXPECT_EQ(fgt(e, 0.0), 0.0);
}

TEST(Esr, EdgeRules) {
  EXPECT_EQ(esr_from_sets({}, {}).score, 1.0);
  EXPECT_EQ(esr_from_sets(keys({"x"}), {}).score, 0.0);
  EXPECT_NEAR(esr_from_sets(keys({"x", "y"}), keys({"x", "y", "z"})).score, 2.0 / 3.0, 1e-15);
}

TEST(Esr, EndToEnd) {
  const auto g = two_triples();
  const auto s = toy::realize(g);
  const auto lex = toy::entity_lexicon();
  EXPECT_EQ(esr(g, s, g, s, lex).score, 1.0);

  const KnowledgeGraph g2({Triple::make("Ada_Moss", "born_in", "Lyon"), Triple::make("Oslo", "located_in", "Norway")});
  EXPECT_EQ(esr(g, s, g2, s, lex).score, 0.0);
  const auto r = esr(g, s, g2, toy::realize(g2), lex);
  EXPECT_EQ(r.delta_g, keys({"Lyon"}));
  EXPECT_EQ(r.delta_t, keys({"Lyon"}));
  EXPECT_EQ(r.score, 1.0);
  const auto off = esr(g, s, g2, "ada moss was born in lyon and oslo is located in peru .", lex);
  EXPECT_EQ(off.delta_t, keys({"Lyon", "Norway", "Peru"}));
  EXPECT_NEAR(off.score, 1.0 / 3.0, 1e-15);
}

TEST(MakeEdit, ReplacesExactlyOneSlot) {
  const auto lex = toy::entity_lexicon();
  Rng rng(3);
  for (int i = 0; i < 300; ++i) {
    const auto corpus = toy::make_corpus(1, static_cast<uint64_t>(i));
    const auto& g = corpus[0].graph;
    const auto [g2, ed] = make_edit(g, lex, rng);
    ASSERT_EQ(g2.size(), g.size());
    int changed_slots = 0;
    for (size_t k = 0; k < g.size(); ++k) {
      const auto &a = g.triples()[k], &b = g2.triples()[k];
      EXPECT_EQ(a.rel, b.rel);
      changed_slots += (a.head != b.head) + (a.tail != b.tail);
      if (k != ed.triple) {
        EXPECT_EQ(a.head, b.head);
        EXPECT_EQ(a.tail, b.tail);
      }
    }
    EXPECT_EQ(changed_slots, 1);
    EXPECT_NE(text::normalize_phrase(ed.old_entity), text::normalize_phrase(ed.new_entity));
    EXPECT_NE(std::find(lex.begin(), lex.end(), ed.new_entity), lex.end());
    const auto d = symmetric_difference(g.entity_keys(), g2.entity_keys());
    for (const auto& x : d) {
      EXPECT_TRUE(x == text::normalize_phrase(ed.old_entity) || x == text::normalize_phrase(ed.new_entity));
    }
  }
}

TEST(MakeEdit, SeededAndValidated) {
  const auto lex = toy::entity_lexicon();
  const auto g = two_triples();
  Rng a(9), b(9);
  const auto ea = make_edit(g, lex, a), eb = make_edit(g, lex, b);
  EXPECT_EQ(serialize_graph(ea.first), serialize_graph(eb.first));
  Rng rng(1);
  EXPECT_THROW(make_edit(g, {"Oslo"}, rng), DataError);
  EXPECT_THROW(make_edit(KnowledgeGraph(), lex, rng), DataError);
}

TEST(Bleu, HandComputed) {
  EXPECT_DOUBLE_EQ(bleu("a b c d", {"a b c d"}), 1.0);
  EXPECT_NEAR(bleu("a b c d", {"a b c d e"}), std::exp(1.0 - 5.0 / 4.0), 1e-12);
  // unigram 3/4, bigrams (1+1)/(3+1), trigrams (0+1)/(2+1), 4-grams (0+1)/(1+1)
  const double expect = std::exp((std::log(0.75) + std::log(0.5) + std::log(1.0 / 3.0) + std::log(0.5)) / 4.0);
  EXPECT_NEAR(bleu("a b x d", {"a b c d"}), expect, 1e-12);
  EXPECT_EQ(bleu("x y", {"a b"}), 0.0);
  EXPECT_EQ(bleu("", {"a b"}), 0.0);
  EXPECT_THROW(bleu("a", {}), UsageError);
}

TEST(Bleu, ClippingAndClosestReference) {
  // "the the the": unigram clipped to 2/3 against a reference with two "the";
  // neither "the the" bigram occurs in the reference.
  const double p1 = 2.0 / 3.0, p2 = (0.0 + 1.0) / (2.0 + 1.0);
  EXPECT_NEAR(bleu("the the the", {"the cat the"}, 2), std::sqrt(p1 * p2), 1e-12);
  EXPECT_NEAR(bleu("a b c", {"a b c d e f g h", "a b c d"}, 1), std::exp(1.0 - 4.0 / 3.0), 1e-12);
}

TEST(Reports, JsonShape) {
  ExampleScore s{"ex1", fgt_report(EntitySets{keys({"a"}), keys({"a"}), {}, 4}, {0.0, 0.5}), 0.5, std::nullopt};
  const auto j = score_to_json(s);
  EXPECT_EQ(j["example_id"], "ex1");
  EXPECT_EQ(j["fgt"]["0.5"], 1.0);
  EXPECT_EQ(j["esr"], 0.5);
  EXPECT_FALSE(j.contains("bleu"));
  ExampleScore t = s;
  t.esr = 1.0;
  const auto sum = summary_json({s, t});
  EXPECT_EQ(sum["examples"], 2);
  EXPECT_DOUBLE_EQ(sum["esr"].get<double>(), 0.75);
}

}  // namespace
}  // namespace kgdiff
