#include <gtest/gtest.h>

#include <cmath>

#include "structsum/diffcore/gradcheck.hpp"
#include "structsum/seqmodel/recurrent.hpp"

using namespace structsum;
using namespace structsum::diffcore;
using namespace structsum::seqmodel;

TEST(Embed, LookupAndErrors) {
  ParamStore ps;
  std::mt19937_64 rng(1);
  Embedding emb = Embedding::create(ps, "emb", 10, 4, rng);
  Tape tape;
  Var e = embed(tape, emb, {0, 3, 3});
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(e.value().at(0, j), emb.table->value.at(0, j));
    EXPECT_EQ(e.value().at(1, j), e.value().at(2, j));
  }
  EXPECT_THROW(embed(tape, emb, {10}), IdOutOfRange);
}

TEST(Embed, GradientMatchesFiniteDifferences) {
  ParamStore ps;
  std::mt19937_64 rng(2);
  Embedding emb = Embedding::create(ps, "emb", 6, 3, rng);
  Tensor w(Shape{3, 3});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.1 * static_cast<double>(i) - 0.3;
  auto loss = [&](Tape& t) { return sum(tanh(mul(embed(t, emb, {1, 4, 1}), t.constant(w)))); };
  auto r = check_param_gradients(ps, loss, {0});
  EXPECT_LE(r.max_rel_error, 1e-6);
}

TEST(LstmStep, ZeroParamsGiveZeroState) {
  ParamStore ps;
  std::mt19937_64 rng(3);
  LstmParams p = LstmParams::create(ps, "l", 3, 2, rng);
  p.weight->value.fill(0.0);
  Tape tape;
  LstmState z = zero_state(tape, 2);
  LstmState s = lstm_step(tape, p, tape.constant(Tensor::vector({1, 2, 3})), z.h, z.c);
  for (double v : s.h.value().values()) EXPECT_EQ(v, 0.0);
  for (double v : s.c.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(LstmStep, ScalarHandComputation) {
  ParamStore ps;
  std::mt19937_64 rng(4);
  LstmParams p = LstmParams::create(ps, "l", 1, 1, rng);
  p.weight->value.fill(0.0);
  const double big = 8.0;
  p.bias->value = Tensor::vector({big, big, std::atanh(0.5), big});
  Tape tape;
  const double c_prev = 0.25;
  LstmState s = lstm_step(tape, p, tape.constant(Tensor::vector({0.7})), tape.constant(Tensor::vector({0.1})),
                          tape.constant(Tensor::vector({c_prev})));
  const double sig = 1.0 / (1.0 + std::exp(-big));
  const double c = sig * c_prev + sig * 0.5;
  EXPECT_NEAR(s.c.value()[0], c, 1e-15);
  EXPECT_NEAR(s.h.value()[0], sig * std::tanh(c), 1e-15);
}

TEST(LstmStep, FixedPointRepeats) {
  // Forget gate shut and no recurrent weights: the step is a function of x only.
  ParamStore ps;
  std::mt19937_64 rng(5);
  const std::size_t H = 3, D = 2;
  LstmParams p = LstmParams::create(ps, "l", D, H, rng);
  for (std::size_t r = 0; r < 4 * H; ++r)
    for (std::size_t c = D; c < D + H; ++c) p.weight->value.at(r, c) = 0.0;
  for (std::size_t r = H; r < 2 * H; ++r) {
    for (std::size_t c = 0; c < D + H; ++c) p.weight->value.at(r, c) = 0.0;
    p.bias->value[r] = -1000.0;
  }
  Tape tape;
  Var x = tape.constant(Tensor::vector({0.3, -0.6}));
  LstmState s0 = zero_state(tape, H);
  LstmState s1 = lstm_step(tape, p, x, s0.h, s0.c);
  LstmState s2 = lstm_step(tape, p, x, s1.h, s1.c);
  LstmState s3 = lstm_step(tape, p, x, s2.h, s2.c);
  EXPECT_EQ(s2.h.value(), s1.h.value());
  EXPECT_EQ(s3.h.value(), s2.h.value());
  EXPECT_EQ(s3.c.value(), s2.c.value());
}

TEST(LstmStep, ShapeMismatch) {
  ParamStore ps;
  std::mt19937_64 rng(6);
  LstmParams p = LstmParams::create(ps, "l", 3, 2, rng);
  Tape tape;
  LstmState z = zero_state(tape, 2);
  EXPECT_THROW(lstm_step(tape, p, tape.constant(Tensor::vector({1, 2})), z.h, z.c), ShapeMismatch);
}

namespace {

struct BiFixture {
  ParamStore ps;
  std::mt19937_64 rng{7};
  LstmParams fwd, bwd;
  BiFixture(std::size_t D, std::size_t H, bool tied) {
    fwd = LstmParams::create(ps, "fwd", D, H, rng);
    bwd = tied ? fwd : LstmParams::create(ps, "bwd", D, H, rng);
    for (double& b : fwd.bias->value.values()) b = 0.05;
  }
};

Tensor random_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1, 1);
  Tensor t(Shape{rows, cols});
  for (double& v : t.values()) v = d(rng);
  return t;
}

}  // namespace

TEST(BiLstm, LengthOne) {
  BiFixture f(3, 4, false);
  Tape tape;
  EncoderOutput out = bilstm_encode(tape, f.fwd, f.bwd, tape.constant(random_rows(1, 3, 1)), 1);
  EXPECT_EQ(out.h.shape(), (Shape{1, 8}));
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(out.h.value().at(0, j), out.fwd_final.h.value()[j]);
    EXPECT_EQ(out.h.value().at(0, 4 + j), out.bwd_final.h.value()[j]);
  }
}

TEST(BiLstm, PalindromeWithTiedParams) {
  BiFixture f(2, 3, true);
  Tensor x = random_rows(5, 2, 2);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 2; ++j) x.at(4 - i, j) = x.at(i, j);
  Tape tape;
  EncoderOutput out = bilstm_encode(tape, f.fwd, f.bwd, tape.constant(x), 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(out.h.value().at(i, j), out.h.value().at(4 - i, 3 + j));
}

TEST(BiLstm, PaddingInvariance) {
  BiFixture f(3, 4, false);
  Tensor x = random_rows(4, 3, 3);
  Tensor padded(Shape{7, 3});
  for (std::size_t i = 0; i < x.size(); ++i) padded[i] = x[i];
  for (std::size_t i = x.size(); i < padded.size(); ++i) padded[i] = 9.0;
  Tape tape;
  EncoderOutput a = bilstm_encode(tape, f.fwd, f.bwd, tape.constant(x), 4);
  EncoderOutput b = bilstm_encode(tape, f.fwd, f.bwd, tape.constant(padded), 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(a.h.value().at(i, j), b.h.value().at(i, j));
  for (std::size_t i = 4; i < 7; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(b.h.value().at(i, j), 0.0);
}

TEST(BiLstm, GradientThroughThreeSteps) {
  BiFixture f(2, 3, false);
  BridgeParams br = BridgeParams::create(f.ps, "bridge", 6, 3, f.rng);
  const Tensor x = random_rows(3, 2, 4);
  const Tensor w = random_rows(3, 6, 5);
  auto loss = [&](Tape& t) {
    EncoderOutput out = bilstm_encode(t, f.fwd, f.bwd, t.constant(x), 3);
    LstmState s = bridge(t, br, out);
    return add(sum(mul(out.h, t.constant(w))), sum(tanh(add(s.h, s.c))));
  };
  std::vector<std::size_t> all(f.ps.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  auto r = check_param_gradients(f.ps, loss, all);
  EXPECT_LE(r.max_rel_error, 1e-4);

  auto rx = check_gradients(
      [&](Tape& t, const std::vector<Var>& in) {
        EncoderOutput out = bilstm_encode(t, f.fwd, f.bwd, in[0], 3);
        return sum(mul(out.h, t.constant(w)));
      },
      {x});
  EXPECT_LE(rx.max_rel_error, 1e-4);
}
