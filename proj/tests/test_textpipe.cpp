#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "structsum/textpipe/encode.hpp"

using namespace structsum;
using namespace structsum::textpipe;

namespace {

Example flat(const std::string& id, const std::string& doc, const std::string& summary = "x") {
  return parse_example_line(nlohmann::json{{"id", id}, {"document", doc}, {"summary", summary}}.dump());
}

Example thread(const std::string& id, const std::vector<std::pair<std::string, int>>& answers,
               const std::string& summary = "x") {
  nlohmann::json j{{"id", id}, {"question", "why ?"}, {"summary", summary}};
  j["answers"] = nlohmann::json::array();
  for (const auto& [text, up] : answers) j["answers"].push_back({{"text", text}, {"upvotes", up}});
  return parse_example_line(j.dump());
}

}  // namespace

TEST(Tokenize, Rules) {
  EXPECT_EQ(tokenize("The cat."), (Tokens{"the", "cat", "."}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize("A  b"), (Tokens{"a", "b"}));
  EXPECT_EQ(tokenize("Don't\tstop!\n"), (Tokens{"don", "'", "t", "stop", "!"}));
}

TEST(Tokenize, Deterministic) {
  const std::string s = "Hello, World... (again)";
  EXPECT_EQ(tokenize(s), tokenize(s));
  EXPECT_EQ(tokenize(join(tokenize(s))), tokenize(s));
}

TEST(Vocab, FrequencyOrder) {
  Vocab v = build_vocab({tokenize("a a b")}, 10);
  ASSERT_EQ(v.size(), kNumSpecials + 2);
  EXPECT_EQ(v.token(kNumSpecials), "a");
  EXPECT_EQ(v.token(kNumSpecials + 1), "b");
  EXPECT_EQ(v.count(kNumSpecials), 2u);
}

TEST(Vocab, MaxSizeKeepsMostFrequent) {
  Vocab v = build_vocab({tokenize("a a b")}, 1);
  ASSERT_EQ(v.size(), kNumSpecials + 1);
  EXPECT_EQ(v.token(kNumSpecials), "a");
  EXPECT_EQ(v.id("b"), kUnk);
}

TEST(Vocab, TiesAreLexicographic) {
  Vocab v = build_vocab({tokenize("b a")}, 10);
  EXPECT_EQ(v.token(kNumSpecials), "a");
  EXPECT_EQ(v.token(kNumSpecials + 1), "b");
}

TEST(Vocab, SpecialsFixed) {
  Vocab v = build_vocab({tokenize("x")});
  EXPECT_EQ(v.id("<pad>"), kPad);
  EXPECT_EQ(v.id("<unk>"), kUnk);
  EXPECT_EQ(v.id("<s>"), kStart);
  EXPECT_EQ(v.id("</s>"), kStop);
  EXPECT_THROW(build_vocab({}), EmptyCorpus);
  EXPECT_THROW(build_vocab({Tokens{}}), EmptyCorpus);
}

TEST(Vocab, FileRoundTrip) {
  Vocab v = build_vocab({tokenize("c b b a a a")});
  const auto path = std::filesystem::temp_directory_path() / "structsum_vocab_test.tsv";
  v.save(path.string());
  Vocab w = Vocab::load(path.string());
  ASSERT_EQ(w.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(w.token(i), v.token(i));
  Vocab capped = Vocab::load(path.string(), 2);
  EXPECT_EQ(capped.size(), kNumSpecials + 2);
  std::filesystem::remove(path);
}

TEST(EncodeFlat, AllInVocab) {
  Vocab v = build_vocab({tokenize("the cat sat")});
  EncodedFlat e = encode_flat(flat("1", "the cat sat", "the cat"), v);
  EXPECT_EQ(e.source.ids, e.source.extended_ids);
  EXPECT_TRUE(e.oov_tokens.empty());
}

TEST(EncodeFlat, SingleOov) {
  Vocab v = build_vocab({tokenize("the cat")});
  EncodedFlat e = encode_flat(flat("1", "the zorp"), v);
  EXPECT_EQ(e.source.ids[1], kUnk);
  EXPECT_EQ(e.source.extended_ids[1], v.size());
  EXPECT_EQ(e.oov_tokens, (std::vector<std::string>{"zorp"}));
}

TEST(EncodeFlat, RepeatedOovSharesId) {
  Vocab v = build_vocab({tokenize("the cat")});
  EncodedFlat e = encode_flat(flat("1", "zorp the zorp blip"), v);
  EXPECT_EQ(e.source.extended_ids[0], e.source.extended_ids[2]);
  EXPECT_EQ(e.source.extended_ids[3], v.size() + 1);
}

TEST(EncodeFlat, TruncationAndTargets) {
  Vocab v = build_vocab({tokenize("a b c d e")});
  EncodeLimits lim;
  lim.max_source_tokens = 3;
  lim.max_decoder_steps = 100;
  EncodedFlat e = encode_flat(flat("1", "a b c d e zorp", "zorp a qq"), v, lim);
  EXPECT_EQ(e.source.length(), 3u);
  // zorp was truncated away, so it cannot be copied: the target falls back to UNK.
  EXPECT_EQ(e.target.targets, (std::vector<std::size_t>{kUnk, v.id("a"), kUnk, kStop}));
  EXPECT_EQ(e.target.inputs, (std::vector<std::size_t>{kStart, kUnk, v.id("a"), kUnk}));

  lim.max_source_tokens = 400;
  EncodedFlat f = encode_flat(flat("1", "a zorp", "zorp a"), v, lim);
  EXPECT_EQ(f.target.targets[0], v.size());

  lim.max_decoder_steps = 2;
  EncodedFlat g = encode_flat(flat("1", "a b", "a b c d"), v, lim);
  EXPECT_EQ(g.target.targets, (std::vector<std::size_t>{v.id("a"), v.id("b")}));
  EXPECT_EQ(g.target.inputs, (std::vector<std::size_t>{kStart, v.id("a")}));
}

TEST(EncodeFlat, RoundTripProperty) {
  std::mt19937_64 rng(1);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
  Vocab v = build_vocab({Tokens(words.begin(), words.begin() + 5)});
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<std::size_t> len(1, 30), w(0, words.size() - 1);
    std::string doc;
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) doc += words[w(rng)] + " ";
    EncodeLimits lim;
    lim.max_source_tokens = len(rng);
    Example ex = flat("t", doc);
    EncodedFlat e = encode_flat(ex, v, lim);
    EXPECT_EQ(render(e.source.extended_ids, v, e.oov_tokens), truncate(ex.document(), lim.max_source_tokens));
    for (std::size_t i = 0; i < e.source.length(); ++i) {
      if (e.source.ids[i] != kUnk) {
        EXPECT_EQ(e.source.ids[i], e.source.extended_ids[i]);
      }
    }
  }
}

TEST(EncodeThread, SortsByUpvotes) {
  Vocab v = build_vocab({tokenize("one two three")});
  EncodedThread t = encode_thread(thread("q", {{"one", 1}, {"two", 5}, {"three", 3}}), v);
  EXPECT_EQ(t.order, (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(t.answers[0].ids[0], v.id("two"));
  EXPECT_EQ(t.answers[2].ids[0], v.id("one"));
}

TEST(EncodeThread, TiesStable) {
  Vocab v = build_vocab({tokenize("one two three")});
  EncodedThread t = encode_thread(thread("q", {{"one", 2}, {"two", 2}, {"three", 3}}), v);
  EXPECT_EQ(t.order, (std::vector<std::size_t>{2, 0, 1}));
}

TEST(EncodeThread, SingleAnswerMatchesFlat) {
  Vocab v = build_vocab({tokenize("alpha beta")});
  Example ex = thread("q", {{"alpha zorp beta zorp gamma", 4}});
  EncodedThread t = encode_thread(ex, v);
  EncodedFlat f = encode_flat(ex, v);
  SourceRow flatrow = flatten(t);
  EXPECT_EQ(flatrow.ids, f.source.ids);
  EXPECT_EQ(flatrow.extended_ids, f.source.extended_ids);
  EXPECT_EQ(t.oov_tokens, f.oov_tokens);
  EXPECT_EQ(t.target.targets, f.target.targets);
}

TEST(EncodeThread, SharedExtendedVocabulary) {
  Vocab v = build_vocab({tokenize("common words")});
  EncodedThread t = encode_thread(thread("q", {{"zorp common", 9}, {"words", 5}, {"words zorp", 1}}), v);
  EXPECT_EQ(t.answers[0].extended_ids[0], t.answers[2].extended_ids[1]);
  EXPECT_EQ(t.answers[0].extended_ids[0], v.size());
  EXPECT_EQ(t.oov_tokens.size(), 1u);
}

TEST(EncodeThread, LimitsAndErrors) {
  Vocab v = build_vocab({tokenize("a b c")});
  EncodeLimits lim;
  lim.max_answers = 2;
  lim.max_answer_tokens = 1;
  EncodedThread t = encode_thread(thread("q", {{"a a a", 1}, {"b b", 3}, {"c", 2}}), v, lim);
  ASSERT_EQ(t.answers.size(), 2u);
  EXPECT_EQ(t.answers[0].ids, (std::vector<std::size_t>{v.id("b")}));
  EXPECT_EQ(t.answers[1].ids, (std::vector<std::size_t>{v.id("c")}));
  EXPECT_THROW(encode_thread(flat("f", "a b"), v), NoAnswers);
  Example empty;
  empty.id = "e";
  empty.source = std::vector<Answer>{};
  EXPECT_THROW(encode_thread(empty, v), NoAnswers);
}

TEST(EncodeThread, QuestionSwitch) {
  Vocab v = build_vocab({tokenize("why a")});
  EncodeLimits lim;
  lim.include_question = true;
  EncodedThread t = encode_thread(thread("q", {{"a", 1}}), v, lim);
  ASSERT_EQ(t.answers.size(), 2u);
  EXPECT_EQ(t.answers[0].ids[0], v.id("why"));
  EncodedFlat f = encode_flat(thread("q", {{"a", 1}}), v, lim);
  EXPECT_EQ(f.source.ids[0], v.id("why"));
}

TEST(Batching, PaddingAndOrder) {
  Vocab v = build_vocab({tokenize("a b c")});
  std::vector<EncodedFlat> rows = {encode_flat(flat("1", "a b c"), v), encode_flat(flat("2", "c zorp"), v)};
  TokenBatch b = make_batch(rows);
  EXPECT_EQ(b.max_len, 3u);
  EXPECT_EQ(b.lengths, (std::vector<std::size_t>{3, 2}));
  EXPECT_EQ(b.ids[1][2], kPad);
  EXPECT_EQ(b.extended_ids[1][2], kPad);
  EXPECT_FALSE(b.mask[1][2]);
  EXPECT_EQ(b.extended_ids[1][1], v.size());
  EXPECT_EQ(b.oov_tokens[1], (std::vector<std::string>{"zorp"}));
}

TEST(Dataset, ParsesBothLayoutsAndReportsBadLines) {
  std::stringstream in;
  in << R"({"id":"a","document":"The cat sat.","summary":"cat"})" << "\n";
  in << "\n";
  in << R"({"id":"b","question":"Q?","answers":[{"text":"x y","upvotes":3},{"text":"z","upvotes":7}],"summary":"z"})"
     << "\n";
  in << "{broken\n";
  in << R"({"id":"c","summary":"no source"})" << "\n";
  LoadedCorpus c = load_jsonl(in);
  ASSERT_EQ(c.examples.size(), 2u);
  EXPECT_FALSE(c.examples[0].is_thread());
  EXPECT_EQ(c.examples[0].document(), (Tokens{"the", "cat", "sat", "."}));
  EXPECT_TRUE(c.examples[1].is_thread());
  EXPECT_EQ(c.examples[1].answers()[1].upvotes, 7);
  ASSERT_EQ(c.errors.size(), 2u);
  EXPECT_EQ(c.errors[0].line, 4u);
  EXPECT_EQ(c.errors[1].line, 5u);
}

TEST(Sentences, SplitOnTerminalPunctuation) {
  auto s = split_sentences(tokenize("A b. C d! e"));
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], (Tokens{"a", "b", "."}));
  EXPECT_EQ(s[2], (Tokens{"e"}));
}
