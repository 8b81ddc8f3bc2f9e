#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "structsum/seqmodel/recurrent.hpp"
#include "structsum/structattn/layer.hpp"
#include "structsum/summnet/attention.hpp"
#include "structsum/summnet/config.hpp"
#include "structsum/textpipe/encode.hpp"
#include "structsum/textpipe/vocab.hpp"

namespace structsum::summnet {

using seqmodel::LstmState;

inline constexpr double kProbFloor = 1e-12;

// Everything after the encoder: bridge, decoder LSTM, copy attention,
// vocabulary projection and the generation switch.
struct DecoderParams {
  seqmodel::Embedding emb;  // shared with the encoder
  seqmodel::BridgeParams bridge;
  seqmodel::LstmParams lstm;
  AttentionParams copy_attn;
  Parameter* out1_w = nullptr;  // [H x (H + 2H)]
  Parameter* out1_b = nullptr;
  Parameter* out2_w = nullptr;  // [V x H]
  Parameter* out2_b = nullptr;
  Parameter* pgen_c = nullptr;  // [2H]
  Parameter* pgen_s = nullptr;  // [H]
  Parameter* pgen_x = nullptr;  // [E]
  Parameter* pgen_b = nullptr;  // scalar

  std::size_t vocab_size() const { return out2_b->value.size(); }

  static DecoderParams create(ParamStore& ps, const ModelConfig& cfg, seqmodel::Embedding emb, std::mt19937_64& rng) {
    const std::size_t H = cfg.hidden, S = cfg.state_dim(), E = cfg.emb_dim, V = cfg.vocab_size;
    DecoderParams d;
    d.emb = emb;
    d.bridge = seqmodel::BridgeParams::create(ps, "bridge", S, H, rng);
    d.lstm = seqmodel::LstmParams::create(ps, "dec", E, H, rng);
    d.copy_attn = AttentionParams::create(ps, "attn", S, H, cfg.decoder_attn_dim(), rng);
    d.out1_w = ps.add_uniform("out1.w", {H, H + S}, rng);
    d.out1_b = ps.add_zeros("out1.b", {H});
    d.out2_w = ps.add_uniform("out2.w", {V, H}, rng);
    d.out2_b = ps.add_zeros("out2.b", {V});
    d.pgen_c = ps.add_uniform("pgen.c", {S}, rng);
    d.pgen_s = ps.add_uniform("pgen.s", {H}, rng);
    d.pgen_x = ps.add_uniform("pgen.x", {E}, rng);
    d.pgen_b = ps.add_zeros("pgen.b", {});
    return d;
  }
};

// What the decoder attends over for one example.
struct Memory {
  Var copy_keys;                      // [N x attn], positions the copy distribution ranges over
  std::vector<bool> copy_mask;        // empty = all live
  std::vector<std::size_t> copy_ids;  // extended id of each copy position
  std::size_t extended_size = 0;
  const AttentionParams* gen_attn = nullptr;  // null: generation reuses the copy distribution
  Var gen_keys;                       // [M x attn]
  std::vector<bool> gen_mask;
  Var gen_values;                     // [M x 2H], context source for p_vocab and p_gen
  LstmState init;
  std::optional<structattn::TreeMarginals> tree;  // flat structural model only
};

struct StepOut {
  Var dist;       // p(w) over the extended vocabulary
  LstmState state;
  Var copy_attn;  // a_t (token level)
  Var gen_attn;   // a_struct_t / a_ans_t; same node as copy_attn when shared
  Var context;
  Var p_gen;      // scalar
};

// p(w) = p_gen p_vocab(w) + (1 - p_gen) sum_{i: w_i = w} a_i
inline Var mix_distribution(const Var& p_vocab, const Var& p_gen, const Var& copy_attn,
                            const std::vector<std::size_t>& copy_ids, std::size_t extended_size) {
  using namespace diffcore;
  Var gen = mul_scalar(pad_to(p_vocab, extended_size), p_gen);
  Var copy = mul_scalar(scatter_add(copy_attn, copy_ids, extended_size), one_minus(p_gen));
  return add(gen, copy);
}

inline StepOut decoder_step(Tape& tape, const DecoderParams& d, const Memory& m, std::size_t prev_id,
                            const LstmState& state, const Var* coverage) {
  using namespace diffcore;
  const std::size_t in_vocab = prev_id < d.vocab_size() ? prev_id : textpipe::kUnk;
  Var x = row(seqmodel::embed(tape, d.emb, {in_vocab}), 0);
  LstmState s = seqmodel::lstm_step(tape, d.lstm, x, state.h, state.c);
  Var copy_attn = attend_keys(tape, m.copy_keys, s.h, d.copy_attn, m.copy_mask, coverage);
  Var gen_attn = m.gen_attn ? attend_keys(tape, m.gen_keys, s.h, *m.gen_attn, m.gen_mask, nullptr) : copy_attn;
  Var context = matvec(transpose(m.gen_values), gen_attn);
  Var hidden = add(matvec(tape.param(*d.out1_w), concat({s.h, context})), tape.param(*d.out1_b));
  Var p_vocab = softmax(add(matvec(tape.param(*d.out2_w), hidden), tape.param(*d.out2_b)));
  Var p_gen = sigmoid(add(add(add(dot(context, tape.param(*d.pgen_c)), dot(s.h, tape.param(*d.pgen_s))),
                              dot(x, tape.param(*d.pgen_x))),
                          tape.param(*d.pgen_b)));
  return {mix_distribution(p_vocab, p_gen, copy_attn, m.copy_ids, m.extended_size), s, copy_attn, gen_attn, context,
          p_gen};
}

// Sum of scalar nodes.
inline Var add_all(const std::vector<Var>& terms) {
  if (terms.empty()) throw Error("add_all: no terms");
  Var acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = diffcore::add(acc, terms[i]);
  return acc;
}

// -(1/T) sum_t log max(p_t(w_t*), 1e-12) over unmasked steps. Empty mask = all live.
inline Var nll_loss(Tape& tape, const std::vector<Var>& dists, const std::vector<std::size_t>& targets,
                    const std::vector<bool>& mask = {}) {
  using namespace diffcore;
  if (dists.size() != targets.size()) throw ShapeMismatch("nll_loss: step count mismatch");
  std::vector<Var> terms;
  for (std::size_t t = 0; t < dists.size(); ++t) {
    if (!mask.empty() && !mask[t]) continue;
    if (targets[t] >= dists[t].size()) {
      throw IdOutOfRange("target id " + std::to_string(targets[t]) + " outside extended vocabulary of " +
                         std::to_string(dists[t].size()));
    }
    terms.push_back(log(clamp(pick(dists[t], targets[t]), kProbFloor, 2.0)));
  }
  if (terms.empty()) return tape.constant(Tensor::scalar(0.0));
  return scale(add_all(terms), -1.0 / static_cast<double>(terms.size()));
}

// sum_t sum_i min(a_t[i], sum_{t' < t} a_t'[i])
inline Var coverage_loss(Tape& tape, const std::vector<Var>& attentions) {
  using namespace diffcore;
  if (attentions.empty()) throw Error("coverage_loss needs at least one step");
  Var cov = tape.constant(Tensor(attentions[0].shape()));
  std::vector<Var> terms;
  for (const Var& a : attentions) {
    terms.push_back(sum(minimum(a, cov)));
    cov = add(cov, a);
  }
  return add_all(terms);
}

struct SequenceLoss {
  Var nll;       // per-token NLL
  Var coverage;  // unnormalized coverage loss (zero when coverage is off)
  std::size_t steps = 0;
};

// Teacher-forced unroll over the target. With `coverage_on`, the running
// attention sum feeds the copy attention and the coverage loss is recorded.
inline SequenceLoss sequence_loss(Tape& tape, const DecoderParams& d, const Memory& m, const textpipe::TargetSeq& target,
                                  bool coverage_on, std::vector<StepOut>* trace = nullptr) {
  using namespace diffcore;
  const std::size_t T = target.inputs.size();
  if (T == 0 || target.targets.size() != T) throw DataError("empty or inconsistent target sequence");
  std::vector<Var> dists, attns;
  LstmState state = m.init;
  Var cov = tape.constant(Tensor(Shape{m.copy_ids.size()}));
  for (std::size_t t = 0; t < T; ++t) {
    StepOut out = decoder_step(tape, d, m, target.inputs[t], state, coverage_on ? &cov : nullptr);
    if (coverage_on) cov = add(cov, out.copy_attn);
    dists.push_back(out.dist);
    attns.push_back(out.copy_attn);
    state = out.state;
    if (trace) trace->push_back(out);
  }
  SequenceLoss loss;
  loss.nll = nll_loss(tape, dists, target.targets);
  loss.coverage = coverage_on ? coverage_loss(tape, attns) : tape.constant(Tensor::scalar(0.0));
  loss.steps = T;
  return loss;
}

}  // namespace structsum::summnet
