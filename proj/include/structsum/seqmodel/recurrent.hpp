#pragma once

#include <random>
#include <string>
#include <vector>

#include "structsum/diffcore/ops.hpp"

namespace structsum::seqmodel {

using diffcore::Parameter;
using diffcore::ParamStore;
using diffcore::Shape;
using diffcore::Tape;
using diffcore::Tensor;
using diffcore::Var;

struct Embedding {
  Parameter* table = nullptr;  // [vocab x dim]

  static Embedding create(ParamStore& ps, const std::string& name, std::size_t vocab, std::size_t dim,
                          std::mt19937_64& rng) {
    return Embedding{ps.add_uniform(name, {vocab, dim}, rng)};
  }
  std::size_t vocab_size() const { return table->value.rows(); }
  std::size_t dim() const { return table->value.cols(); }
};

// Rows of the embedding table for `ids` (in-vocabulary ids only).
inline Var embed(Tape& tape, const Embedding& emb, const std::vector<std::size_t>& ids) {
  for (std::size_t id : ids) {
    if (id >= emb.vocab_size()) {
      throw IdOutOfRange("token id " + std::to_string(id) + " outside vocabulary of " +
                         std::to_string(emb.vocab_size()));
    }
  }
  return diffcore::gather_rows(tape.param(*emb.table), ids);
}

// One LSTM direction. Gates are stacked as [input; forget; cell; output].
struct LstmParams {
  Parameter* weight = nullptr;  // [4H x (input_dim + H)]
  Parameter* bias = nullptr;    // [4H]
  std::size_t input_dim = 0;
  std::size_t hidden = 0;

  static LstmParams create(ParamStore& ps, const std::string& prefix, std::size_t input_dim, std::size_t hidden,
                           std::mt19937_64& rng) {
    LstmParams p;
    p.weight = ps.add_uniform(prefix + ".w", {4 * hidden, input_dim + hidden}, rng);
    p.bias = ps.add_zeros(prefix + ".b", {4 * hidden});
    p.input_dim = input_dim;
    p.hidden = hidden;
    return p;
  }
};

struct LstmState {
  Var h;
  Var c;
};

inline LstmState zero_state(Tape& tape, std::size_t hidden) {
  return {tape.constant(Tensor(Shape{hidden})), tape.constant(Tensor(Shape{hidden}))};
}

// i = σ(.), f = σ(.), g = tanh(.), o = σ(.); c' = f·c + i·g; h' = o·tanh(c').
inline LstmState lstm_step(Tape& tape, const LstmParams& p, const Var& x, const Var& h_prev, const Var& c_prev) {
  using namespace diffcore;
  const std::size_t H = p.hidden;
  if (x.size() != p.input_dim || h_prev.size() != H || c_prev.size() != H) {
    throw ShapeMismatch("lstm_step: input " + shape_string(x.shape()) + ", state " + shape_string(h_prev.shape()) +
                        "/" + shape_string(c_prev.shape()) + " for input_dim " + std::to_string(p.input_dim) +
                        ", hidden " + std::to_string(H));
  }
  Var pre = add(matvec(tape.param(*p.weight), concat({x, h_prev})), tape.param(*p.bias));
  Var i = sigmoid(slice(pre, 0, H));
  Var f = sigmoid(slice(pre, H, H));
  Var g = tanh(slice(pre, 2 * H, H));
  Var o = sigmoid(slice(pre, 3 * H, H));
  Var c = add(mul(f, c_prev), mul(i, g));
  Var h = mul(o, tanh(c));
  return {h, c};
}

struct EncoderOutput {
  Var h;               // [rows x 2H]; forward state then backward state; rows >= length are zero
  std::size_t length;  // unpadded positions
  LstmState fwd_final;  // after the last real token
  LstmState bwd_final;  // after the first real token (backward direction)
};

// Runs both directions over the first `length` rows of `inputs` [rows x dim].
inline EncoderOutput bilstm_encode(Tape& tape, const LstmParams& fwd, const LstmParams& bwd, const Var& inputs,
                                   std::size_t length) {
  using namespace diffcore;
  const std::size_t rows = inputs.value().rows();
  if (length == 0 || length > rows) throw ShapeMismatch("bilstm_encode: bad length " + std::to_string(length));
  const std::size_t H = fwd.hidden;
  std::vector<Var> xs;
  for (std::size_t t = 0; t < length; ++t) xs.push_back(row(inputs, t));

  std::vector<Var> fh(length), bh(length);
  LstmState s = zero_state(tape, H);
  for (std::size_t t = 0; t < length; ++t) {
    s = lstm_step(tape, fwd, xs[t], s.h, s.c);
    fh[t] = s.h;
  }
  const LstmState fwd_final = s;
  s = zero_state(tape, bwd.hidden);
  for (std::size_t t = length; t-- > 0;) {
    s = lstm_step(tape, bwd, xs[t], s.h, s.c);
    bh[t] = s.h;
  }
  const LstmState bwd_final = s;

  std::vector<Var> out;
  for (std::size_t t = 0; t < length; ++t) out.push_back(concat({fh[t], bh[t]}));
  if (rows > length) {
    Var zero = tape.constant(Tensor(Shape{H + bwd.hidden}));
    for (std::size_t t = length; t < rows; ++t) out.push_back(zero);
  }
  return {stack_rows(out), length, fwd_final, bwd_final};
}

// Linear reduction of the final bidirectional states to a decoder state.
struct BridgeParams {
  Parameter* w_h = nullptr;  // [H_dec x 2H]
  Parameter* b_h = nullptr;
  Parameter* w_c = nullptr;
  Parameter* b_c = nullptr;

  static BridgeParams create(ParamStore& ps, const std::string& prefix, std::size_t in_dim, std::size_t out_dim,
                             std::mt19937_64& rng) {
    BridgeParams p;
    p.w_h = ps.add_uniform(prefix + ".w_h", {out_dim, in_dim}, rng);
    p.b_h = ps.add_zeros(prefix + ".b_h", {out_dim});
    p.w_c = ps.add_uniform(prefix + ".w_c", {out_dim, in_dim}, rng);
    p.b_c = ps.add_zeros(prefix + ".b_c", {out_dim});
    return p;
  }
};

inline LstmState bridge(Tape& tape, const BridgeParams& p, const Var& h_in, const Var& c_in) {
  using namespace diffcore;
  return {add(matvec(tape.param(*p.w_h), h_in), tape.param(*p.b_h)),
          add(matvec(tape.param(*p.w_c), c_in), tape.param(*p.b_c))};
}

inline LstmState bridge(Tape& tape, const BridgeParams& p, const EncoderOutput& enc) {
  using namespace diffcore;
  return bridge(tape, p, concat({enc.fwd_final.h, enc.bwd_final.h}), concat({enc.fwd_final.c, enc.bwd_final.c}));
}

}  // namespace structsum::seqmodel
