#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "structsum/diffcore/gradcheck.hpp"
#include "structsum/hiernet/model.hpp"
#include "structsum/summnet/beam.hpp"
#include "structsum/summnet/train.hpp"

using namespace structsum;
using namespace structsum::diffcore;
using namespace structsum::hiernet;
using summnet::ModelMode;
using summnet::StepOut;
using textpipe::EncodedThread;

namespace {

ModelConfig tiny_config(std::size_t vocab = 12, bool identity = false) {
  ModelConfig c;
  c.mode = ModelMode::PgHsa;
  c.vocab_size = vocab;
  c.emb_dim = 4;
  c.hidden = 3;
  c.attn_dim = 5;
  c.tree_dim = 4;
  c.identity_answer_encoder = identity;
  c.seed = 21;
  return c;
}

textpipe::SourceRow row_of(const std::vector<std::size_t>& ext, std::size_t vocab) {
  textpipe::SourceRow r;
  for (std::size_t id : ext) {
    r.ids.push_back(id < vocab ? id : textpipe::kUnk);
    r.extended_ids.push_back(id);
  }
  return r;
}

EncodedThread make_thread(const std::vector<std::vector<std::size_t>>& answers, const std::vector<std::size_t>& summary,
                          std::size_t vocab, std::size_t n_oov = 0) {
  EncodedThread th;
  th.id = "t";
  th.vocab_size = vocab;
  for (std::size_t k = 0; k < n_oov; ++k) th.oov_tokens.push_back("oov" + std::to_string(k));
  for (std::size_t i = 0; i < answers.size(); ++i) {
    th.answers.push_back(row_of(answers[i], vocab));
    th.order.push_back(i);
  }
  th.target.inputs.push_back(textpipe::kStart);
  for (std::size_t id : summary) {
    th.target.inputs.push_back(id < vocab ? id : textpipe::kUnk);
    th.target.targets.push_back(id);
  }
  th.target.targets.push_back(textpipe::kStop);
  return th;
}

EncodedThread random_thread(std::mt19937_64& rng, std::size_t vocab, std::size_t n_answers, std::size_t n_oov) {
  std::uniform_int_distribution<std::size_t> tok(textpipe::kNumSpecials, vocab + n_oov - 1), len(1, 5);
  std::vector<std::vector<std::size_t>> answers(n_answers);
  for (auto& a : answers) {
    a.resize(len(rng));
    for (auto& t : a) t = tok(rng);
  }
  for (std::size_t k = 0; k < n_oov; ++k) answers[k % n_answers].push_back(vocab + k);
  std::vector<std::size_t> summary(3);
  for (auto& t : summary) t = tok(rng);
  return make_thread(answers, summary, vocab, n_oov);
}

void randomize(ParamStore& ps, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (double& v : ps[i].value.values()) v = d(rng);
}

// Decoder steps along the gold prefix; returns every step's output values.
std::vector<Tensor> unroll(HierModel& model, const EncodedThread& th, std::vector<Tensor>* answer_attn = nullptr) {
  Tape tape;
  summnet::Memory m = model.encode(tape, th);
  std::vector<StepOut> trace;
  summnet::sequence_loss(tape, model.dec, m, th.target, true, &trace);
  std::vector<Tensor> dists;
  for (const StepOut& s : trace) {
    dists.push_back(s.dist.value());
    if (answer_attn) answer_attn->push_back(s.gen_attn.value());
  }
  return dists;
}

}  // namespace

TEST(PoolAnswer, Modes) {
  Tape tape;
  Var one = tape.constant(Tensor::matrix(1, 2, {0.5, -1.0}));
  for (PoolMode m : {PoolMode::Sum, PoolMode::Mean, PoolMode::Max})
    EXPECT_EQ(pool_answer(one, m).value(), Tensor::vector({0.5, -1.0}));
  Var two = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  EXPECT_EQ(pool_answer(two, PoolMode::Sum).value(), Tensor::vector({4, 6}));
  EXPECT_EQ(pool_answer(two, PoolMode::Mean).value(), Tensor::vector({2, 3}));
  EXPECT_EQ(pool_answer(two, PoolMode::Max).value(), Tensor::vector({3, 4}));
  std::mt19937_64 rng(1);
  Tensor x(Shape{5, 3});
  for (double& v : x.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  Tensor s = pool_answer(tape.constant(x), PoolMode::Sum).value(), m = pool_answer(tape.constant(x), PoolMode::Mean).value();
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(m[j], s[j] / 5.0, 1e-15);
  EXPECT_THROW(pool_answer(tape.constant(Tensor(Shape{0, 3})), PoolMode::Sum), EmptyAnswer);
}

TEST(EncodeThread, SingleTokenSingleAnswer) {
  HierModel model(tiny_config());
  Tape tape;
  HierEncoderOutput out = model.encode_thread(tape, make_thread({{5}}, {5}, 12));
  ASSERT_TRUE(out.answer_tree.has_value());
  EXPECT_NEAR(out.answer_tree->root.value()[0], 1.0, 1e-15);
  EXPECT_NEAR(out.token_trees[0].root.value()[0], 1.0, 1e-15);
}

TEST(EncodeThread, IdenticalAnswersPoolIdentically) {
  HierModel model(tiny_config());
  Tape tape;
  HierEncoderOutput out = model.encode_thread(tape, make_thread({{5, 6, 7}, {5, 6, 7}, {8}}, {5}, 12));
  const Tensor& p = out.pooled.value();
  for (std::size_t j = 0; j < p.cols(); ++j) EXPECT_EQ(p.at(0, j), p.at(1, j));
  EXPECT_EQ(out.g.value().rows(), 3u);
  EXPECT_EQ(out.token_h.size(), 3u);
  EXPECT_THROW(model.encode_thread(tape, EncodedThread{}), NoAnswers);
}

TEST(HierStep, CopyOnlyFromUniformThread) {
  HierModel model(tiny_config(12));
  model.dec.pgen_b->value[0] = -1e3;  // p_gen = 0
  EncodedThread th = make_thread({{12, 12}, {12}, {12, 12, 12}}, {12}, 12, 1);
  for (const Tensor& p : unroll(model, th)) EXPECT_NEAR(p[12], 1.0, 1e-12);
}

TEST(HierStep, SingleAnswerReducesToFlatCopy) {
  HierModel model(tiny_config(12));
  EncodedThread th = make_thread({{4, 5, 13, 5}}, {13, 4}, 12, 2);
  Tape tape;
  summnet::Memory m = model.encode(tape, th);
  StepOut s = summnet::decoder_step(tape, model.dec, m, textpipe::kStart, m.init, nullptr);
  EXPECT_EQ(s.gen_attn.value(), Tensor::vector({1.0}));
  // copy mass on the OOV equals (1 - p_gen) times its attention
  EXPECT_NEAR(s.dist.value()[13], (1 - s.p_gen.item()) * s.copy_attn.value()[2], 1e-15);
  EXPECT_EQ(s.dist.value()[12], 0.0);
}

TEST(HierStep, HalfMixture) {
  HierModel model(tiny_config(12));
  model.dec.pgen_c->value.fill(0.0);
  model.dec.pgen_s->value.fill(0.0);
  model.dec.pgen_x->value.fill(0.0);
  EncodedThread th = make_thread({{6}, {7}}, {6}, 12);
  Tape tape;
  summnet::Memory m = model.encode(tape, th);
  StepOut s = summnet::decoder_step(tape, model.dec, m, textpipe::kStart, m.init, nullptr);
  EXPECT_EQ(s.p_gen.item(), 0.5);
  // p_vocab recovered from a token absent from the thread
  const Tensor& p = s.dist.value();
  const Tensor& a = s.copy_attn.value();
  double vocab_mass = 0.0;
  for (std::size_t w = 0; w < 12; ++w)
    if (w != 6 && w != 7) vocab_mass += p[w];
  EXPECT_NEAR(p[6] + p[7], 0.5 * (1.0 - 2.0 * vocab_mass) + 0.5 * (a[0] + a[1]), 1e-12);
}

TEST(HierStep, DistributionSumsToOne) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 25; ++trial) {
    ModelConfig cfg = tiny_config(10, trial % 4 == 0);
    cfg.seed = 300 + static_cast<std::uint64_t>(trial);
    HierModel model(cfg);
    randomize(model.params, rng, 0.8);
    EncodedThread th = random_thread(rng, 10, 1 + trial % 4, trial % 3);
    std::vector<Tensor> ans;
    for (const Tensor& p : unroll(model, th, &ans)) {
      EXPECT_EQ(p.size(), th.extended_size());
      EXPECT_NEAR(std::accumulate(p.values().begin(), p.values().end(), 0.0), 1.0, 1e-8);
    }
    for (const Tensor& a : ans) EXPECT_NEAR(std::accumulate(a.values().begin(), a.values().end(), 0.0), 1.0, 1e-8);
  }
}

TEST(HierStep, AnswerPermutationInvarianceWithIdentityEncoder) {
  std::mt19937_64 rng(3);
  HierModel model(tiny_config(10, true));
  randomize(model.params, rng, 0.8);
  for (int trial = 0; trial < 10; ++trial) {
    EncodedThread th = random_thread(rng, 10, 4, 2);
    std::vector<std::size_t> perm{2, 0, 3, 1};
    EncodedThread shuffled = th;
    for (std::size_t i = 0; i < 4; ++i) shuffled.answers[i] = th.answers[perm[i]];
    std::vector<Tensor> a1, a2;
    std::vector<Tensor> p1 = unroll(model, th, &a1), p2 = unroll(model, shuffled, &a2);
    for (std::size_t t = 0; t < p1.size(); ++t) {
      for (std::size_t w = 0; w < p1[t].size(); ++w) EXPECT_NEAR(p1[t][w], p2[t][w], 1e-8);
      for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a2[t][i], a1[t][perm[i]], 1e-8);
    }
  }
}

TEST(HierStep, GradientThroughOneStep) {
  HierModel model(tiny_config(8));
  std::mt19937_64 rng(4);
  randomize(model.params, rng, 1.5);
  EncodedThread th = make_thread({{4, 9, 5}, {6, 8}}, {}, 8, 2);  // one decoder step
  ASSERT_EQ(th.target.inputs.size(), 1u);
  th.target.targets = {9};
  auto loss = [&](Tape& t) {
    summnet::Memory m = model.encode(t, th);
    return summnet::sequence_loss(t, model.dec, m, th.target, false).nll;
  };
  std::vector<std::size_t> all(model.params.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  EXPECT_LE(check_param_gradients(model.params, loss, all).max_rel_error, 1e-4);
}

TEST(MemoryContract, AnswerTreesCheaperThanOneFlatTree) {
  ModelConfig cfg = tiny_config(10);
  HierModel model(cfg);
  std::mt19937_64 rng(5);
  std::vector<std::vector<std::size_t>> answers(4, std::vector<std::size_t>(20));
  for (auto& a : answers)
    for (auto& t : a) t = std::uniform_int_distribution<std::size_t>(4, 9)(rng);
  Tape tape;
  HierEncoderOutput out = model.encode_thread(tape, make_thread(answers, {4}, 10));
  Tensor f(Shape{80, 80}), r(Shape{80});
  for (double& v : f.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  Tape t2;
  reset_flop_count();
  structattn::tree_marginals(t2.constant(f), t2.constant(r));
  const std::uint64_t flat = flop_count();
  EXPECT_GT(out.marginal_flops, 0u);
  EXPECT_LT(static_cast<double>(out.marginal_flops), 0.15 * static_cast<double>(flat));
}

TEST(HierTrain, ZeroLearningRateAndDeterministicDecode) {
  HierModel model(tiny_config());
  std::vector<Tensor> before;
  for (std::size_t i = 0; i < model.params.size(); ++i) before.push_back(model.params[i].value);
  AdagradState opt;
  opt.learning_rate = 0.0;
  EncodedThread th = make_thread({{4, 5, 6}, {7, 8}}, {4, 5}, 12);
  for (int s = 0; s < 3; ++s) summnet::train_step(model, std::vector<const EncodedThread*>{&th}, opt);
  for (std::size_t i = 0; i < model.params.size(); ++i) EXPECT_EQ(model.params[i].value, before[i]);

  HierModel a(tiny_config()), b(tiny_config());
  AdagradState oa, ob;
  for (int s = 0; s < 20; ++s) {
    summnet::train_step(a, std::vector<const EncodedThread*>{&th}, oa);
    summnet::train_step(b, std::vector<const EncodedThread*>{&th}, ob);
  }
  summnet::Hypothesis ha = summnet::beam_decode(a, th, {4, 2, 10, false});
  summnet::Hypothesis hb = summnet::beam_decode(b, th, {4, 2, 10, false});
  EXPECT_EQ(ha.tokens, hb.tokens);
  EXPECT_EQ(ha.log_prob, hb.log_prob);
}

TEST(HierTrain, LossDecreasesOnOneThread) {
  ModelConfig cfg = tiny_config(16);
  cfg.hidden = 8;
  cfg.emb_dim = 8;
  HierModel model(cfg);
  AdagradState opt;
  EncodedThread th = make_thread({{4, 5, 6, 7}, {8, 9}, {10, 11, 12}}, {4, 5, 6, 7}, 16);
  std::vector<const EncodedThread*> batch{&th};
  const double first = summnet::train_step(model, batch, opt).loss;
  double last = first;
  for (int s = 0; s < 300; ++s) last = summnet::train_step(model, batch, opt).loss;
  EXPECT_LT(last, 0.5 * first);
}
