#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "structsum/evalkit/extractive.hpp"
#include "structsum/evalkit/report.hpp"
#include "structsum/evalkit/rouge.hpp"
#include "evalkit_oracles.hpp"

using namespace structsum;
using namespace structsum::evalkit;
using textpipe::Tokens;
using textpipe::tokenize;

using namespace oracles;

// ---- ROUGE ----

TEST(Rouge, IdenticalTextsScoreOne) {
  Tokens t = tokenize("the quick brown fox jumps");
  for (std::size_t n : {1, 2}) {
    RougeScore s = rouge_n(t, t, n);
    EXPECT_DOUBLE_EQ(s.precision, 1.0);
    EXPECT_DOUBLE_EQ(s.recall, 1.0);
    EXPECT_DOUBLE_EQ(s.f1, 1.0);
  }
  EXPECT_DOUBLE_EQ(rouge_l(t, t).f1, 1.0);
}

TEST(Rouge, HandCountedUnigramAndBigram) {
  Tokens c = tokenize("the cat sat"), r = tokenize("the cat ran");
  EXPECT_NEAR(rouge_n(c, r, 1).f1, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(rouge_n(c, r, 2).f1, 0.5, 1e-12);
}

TEST(Rouge, HandCountedLcs) {
  Tokens c = tokenize("the cat sat"), r = tokenize("the cat ran");
  EXPECT_EQ(lcs_length(c, r), 2u);
  EXPECT_NEAR(rouge_l(c, r).f1, 2.0 / 3.0, 1e-12);
}

TEST(Rouge, DisjointVocabularyScoresZero) {
  Tokens c = tokenize("alpha beta gamma"), r = tokenize("one two three");
  EXPECT_EQ(rouge_n(c, r, 1).f1, 0.0);
  EXPECT_EQ(rouge_l(c, r).f1, 0.0);
}

TEST(Rouge, EmptyReferenceGivesZeros) {
  Tokens c = tokenize("anything at all");
  for (const RougeScore& s : {rouge_n(c, {}, 1), rouge_n(c, {}, 2), rouge_l(c, {})}) {
    EXPECT_EQ(s.precision, 0.0);
    EXPECT_EQ(s.recall, 0.0);
    EXPECT_EQ(s.f1, 0.0);
  }
}

TEST(Rouge, ClippedCounts) {
  // "the" appears three times in the candidate but once in the reference.
  RougeScore s = rouge_n(tokenize("the the the"), tokenize("the cat"), 1);
  EXPECT_NEAR(s.precision, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.recall, 0.5, 1e-12);
}

TEST(Rouge, RandomizedAgainstNaiveCounterAndDpLcs) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    Tokens c = random_tokens(rng, 25, 8), r = random_tokens(rng, 25, 8);
    for (std::size_t n : {1, 2}) {
      std::size_t nc = 0, nr = 0;
      const double hit = naive_overlap(c, r, n, nc, nr);
      RougeScore want = oracle_score(hit, nc, nr), got = rouge_n(c, r, n);
      EXPECT_NEAR(got.precision, want.precision, 1e-12);
      EXPECT_NEAR(got.recall, want.recall, 1e-12);
      EXPECT_NEAR(got.f1, want.f1, 1e-12);
    }
    const std::size_t l = lcs_table(c, r);
    ASSERT_EQ(lcs_length(c, r), l);
    RougeScore want = oracle_score(static_cast<double>(l), c.size(), r.size()), got = rouge_l(c, r);
    EXPECT_NEAR(got.precision, want.precision, 1e-12);
    EXPECT_NEAR(got.recall, want.recall, 1e-12);
    EXPECT_NEAR(got.f1, want.f1, 1e-12);
  }
}

TEST(Rouge, ValuesInRangeAndSwapSymmetric) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tokens c = random_tokens(rng, 15, 5), r = random_tokens(rng, 15, 5);
    if (c.size() < 2 || r.size() < 2) continue;
    RougeScore a = rouge_n(c, r, 1), b = rouge_n(r, c, 1);
    EXPECT_DOUBLE_EQ(a.precision, b.recall);
    EXPECT_DOUBLE_EQ(a.recall, b.precision);
    for (double v : {a.precision, a.recall, a.f1, rouge_l(c, r).f1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_DOUBLE_EQ(rouge_l(c, c).f1, 1.0);
  }
}

// ---- Lead ----

TEST(Lead, ShortDocumentIsWhole) {
  Tokens doc;
  for (int i = 0; i < 50; ++i) doc.push_back("t" + std::to_string(i));
  EXPECT_EQ(lead(doc, 100), doc);
}

TEST(Lead, LongDocumentTruncatesToFirstHundred) {
  Tokens doc;
  for (int i = 0; i < 150; ++i) doc.push_back("t" + std::to_string(i));
  Tokens out = lead(doc, 100);
  ASSERT_EQ(out.size(), 100u);
  EXPECT_EQ(out, Tokens(doc.begin(), doc.begin() + 100));
}

TEST(Lead, ThreadStartsWithHighestUpvoteAnswer) {
  textpipe::Example ex;
  ex.id = "t";
  ex.source = std::vector<textpipe::Answer>{{tokenize("low vote answer ."), 1}, {tokenize("top answer here ."), 9},
                                            {tokenize("middle one ."), 4}};
  EXPECT_EQ(lead3(ex, 100), tokenize("top answer here . middle one . low vote answer ."));
  EXPECT_EQ(lead3(ex, 3), tokenize("top answer here"));
}

// ---- graph rankers ----

TEST(LexRank, SingleSentenceSelected) {
  auto s = sentences_of("only one sentence here .");
  Extract e = lexrank(s);
  EXPECT_EQ(e.picked, std::vector<std::size_t>{0});
  EXPECT_EQ(e.tokens, s[0]);
}

TEST(LexRank, SymmetricPairTiesBreakByPosition) {
  auto s = sentences_of("cats like milk . milk likes cats .");
  std::vector<double> sc = lexrank_scores(s);
  EXPECT_NEAR(sc[0], sc[1], 1e-12);
  // Budget for one sentence: the earlier one wins the tie.
  ExtractOptions o;
  o.budget = 4;
  EXPECT_EQ(lexrank(s, o).picked, std::vector<std::size_t>{0});
}

TEST(LexRank, MatchesDirectSolveOnCraftedCorpora) {
  for (const auto& text : crafted_corpora()) {
    auto s = sentences_of(text);
    std::vector<double> got = lexrank_scores(s);
    std::vector<double> want = oracle_stationary(oracle_tfidf_graph(s, 0.1), 0.85);
    double total = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_NEAR(got[i], want[i], 1e-5) << text;
      total += got[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-8);
    EXPECT_EQ(ranking(got), ranking(want)) << text;
  }
}

TEST(TextRank, SingleSentenceSelected) {
  auto s = sentences_of("only one sentence here .");
  EXPECT_EQ(textrank(s).picked, std::vector<std::size_t>{0});
}

TEST(TextRank, SymmetricPairTiesBreakByPosition) {
  auto s = sentences_of("cats like milk . milk like cats .");
  std::vector<double> sc = textrank_scores(s);
  EXPECT_NEAR(sc[0], sc[1], 1e-12);
  ExtractOptions o;
  o.budget = 4;
  EXPECT_EQ(textrank(s, o).picked, std::vector<std::size_t>{0});
}

TEST(TextRank, MatchesDirectSolveOnCraftedCorpora) {
  for (const auto& text : crafted_corpora()) {
    auto s = sentences_of(text);
    std::vector<double> got = textrank_scores(s);
    std::vector<double> want = oracle_stationary(oracle_overlap_graph(s), 0.85);
    double total = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_NEAR(got[i], want[i], 1e-5) << text;
      total += got[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-8);
    EXPECT_EQ(ranking(got), ranking(want)) << text;
  }
}

TEST(Extractive, BudgetRespectedAndOrderPreserved) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Tokens> s;
    const std::size_t n = 2 + rng() % 8;
    for (std::size_t i = 0; i < n; ++i) {
      Tokens t = random_tokens(rng, 20, 12);
      t.push_back(".");
      s.push_back(t);
    }
    ExtractOptions o;
    o.budget = 10 + rng() % 40;
    for (const Extract& e : {lexrank(s, o), textrank(s, o), kl_summ(s, o)}) {
      EXPECT_LE(e.tokens.size(), o.budget);
      EXPECT_TRUE(std::is_sorted(e.picked.begin(), e.picked.end()));
      Tokens rebuilt;
      for (std::size_t i : e.picked) rebuilt.insert(rebuilt.end(), s[i].begin(), s[i].end());
      EXPECT_EQ(rebuilt, e.tokens);
    }
  }
}

// ---- KL-Sum ----

TEST(KlSumm, SingleSentenceSource) {
  auto s = sentences_of("just this one .");
  EXPECT_EQ(kl_summ(s).picked, std::vector<std::size_t>{0});
}

TEST(KlSumm, DuplicatedDominantSentenceFirst) {
  auto s = sentences_of("rare words appear here . markets rally strongly . markets rally strongly . markets rally strongly .");
  ExtractOptions o;
  o.budget = 5;
  Extract e = kl_summ(s, o);
  ASSERT_EQ(e.picked.size(), 1u);
  EXPECT_EQ(e.picked[0], 1u);
}

TEST(KlSumm, GreedyMatchesExhaustiveOnThreeSentences) {
  for (const auto& [text, budget] : kl_cases()) {
    auto s = sentences_of(text);
    ASSERT_EQ(s.size(), 3u);
    ExtractOptions o;
    o.budget = budget;
    Extract e = kl_summ(s, o);
    double best = 0;
    EXPECT_EQ(e.picked, exhaustive_kl(s, budget, best)) << text;
    EXPECT_NEAR(kl_divergence(s, e.picked), best, 1e-12) << text;
  }
}

// ---- thread sentences and baselines ----

TEST(Baselines, ThreadSentencesFollowUpvoteOrder) {
  textpipe::Example ex;
  ex.id = "t";
  ex.source = std::vector<textpipe::Answer>{{tokenize("second . more second ."), 2}, {tokenize("first ."), 5}};
  auto s = example_sentences(ex);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], tokenize("first ."));
  EXPECT_EQ(s[1], tokenize("second ."));
}

TEST(Baselines, ParseNames) {
  EXPECT_EQ(parse_baseline("lead3"), Baseline::Lead3);
  EXPECT_EQ(parse_baseline("lexrank"), Baseline::LexRank);
  EXPECT_EQ(parse_baseline("textrank"), Baseline::TextRank);
  EXPECT_EQ(parse_baseline("kl-summ"), Baseline::KlSumm);
  EXPECT_THROW(parse_baseline("mmr"), Error);
}

// ---- corpus evaluation ----

TEST(Report, IdenticalFilesAggregateToOne) {
  std::vector<summnet::SummaryRecord> cands = {{"a", tokenize("x y z"), 0}, {"b", tokenize("p q"), 0}};
  std::map<std::string, Tokens> refs = {{"a", tokenize("x y z")}, {"b", tokenize("p q")}};
  for (std::size_t jobs : {1, 3}) {
    EvalReport rep = evaluate_corpus(cands, refs, jobs);
    EXPECT_DOUBLE_EQ(rep.mean.r1, 1.0);
    EXPECT_DOUBLE_EQ(rep.mean.r2, 1.0);
    EXPECT_DOUBLE_EQ(rep.mean.rl, 1.0);
  }
}

TEST(Report, CsvLayoutAndMissingReference) {
  std::vector<summnet::SummaryRecord> cands = {{"a", tokenize("the cat sat"), 0}};
  std::map<std::string, Tokens> refs = {{"a", tokenize("the cat ran")}};
  std::ostringstream os;
  write_csv(os, evaluate_corpus(cands, refs));
  EXPECT_EQ(os.str(), "id,r1_f,r2_f,rl_f\na,0.666667,0.500000,0.666667\nmean,0.666667,0.500000,0.666667\n");
  std::map<std::string, Tokens> none;
  EXPECT_THROW(evaluate_corpus(cands, none), DataError);
}

TEST(Report, ParallelMatchesSerial) {
  std::mt19937_64 rng(11);
  std::vector<summnet::SummaryRecord> cands;
  std::map<std::string, Tokens> refs;
  for (int i = 0; i < 40; ++i) {
    const std::string id = "e" + std::to_string(i);
    cands.push_back({id, random_tokens(rng, 20, 6), 0});
    refs[id] = random_tokens(rng, 20, 6);
  }
  std::ostringstream a, b;
  write_csv(a, evaluate_corpus(cands, refs, 1));
  write_csv(b, evaluate_corpus(cands, refs, 4));
  EXPECT_EQ(a.str(), b.str());
}
