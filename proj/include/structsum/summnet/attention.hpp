#pragma once

#include <random>
#include <string>
#include <vector>

#include "structsum/diffcore/ops.hpp"

namespace structsum::summnet {

using diffcore::Parameter;
using diffcore::ParamStore;
using diffcore::Shape;
using diffcore::Tape;
using diffcore::Tensor;
using diffcore::Var;

// score_i = vᵀ tanh(W_feat feat_i + W_s s + w_cov cov_i + b)
struct AttentionParams {
  Parameter* w_feat = nullptr;  // [attn x feat]
  Parameter* w_state = nullptr;  // [attn x state]
  Parameter* w_cov = nullptr;   // [attn]
  Parameter* bias = nullptr;    // [attn]
  Parameter* v = nullptr;       // [attn]

  static AttentionParams create(ParamStore& ps, const std::string& prefix, std::size_t feat_dim, std::size_t state_dim,
                                std::size_t attn_dim, std::mt19937_64& rng) {
    AttentionParams p;
    p.w_feat = ps.add_uniform(prefix + ".w_feat", {attn_dim, feat_dim}, rng);
    p.w_state = ps.add_uniform(prefix + ".w_state", {attn_dim, state_dim}, rng);
    p.w_cov = ps.add_uniform(prefix + ".w_cov", {attn_dim}, rng);
    p.bias = ps.add_zeros(prefix + ".b", {attn_dim});
    p.v = ps.add_uniform(prefix + ".v", {attn_dim}, rng);
    return p;
  }
  std::size_t feat_dim() const { return w_feat->value.cols(); }
  std::size_t attn_dim() const { return v->value.size(); }
};

// W_feat feat_i for every position; constant across decoder steps.
inline Var attention_keys(Tape& tape, const Var& features, const AttentionParams& p) {
  if (features.value().rank() != 2 || features.value().cols() != p.feat_dim()) {
    throw ShapeMismatch("attention features " + diffcore::shape_string(features.shape()) + " for feature dim " +
                        std::to_string(p.feat_dim()));
  }
  return diffcore::matmul(features, diffcore::transpose(tape.param(*p.w_feat)));
}

// Distribution over positions. `mask` may be empty (all positions live);
// `coverage` may be null.
inline Var attend_keys(Tape& tape, const Var& keys, const Var& state, const AttentionParams& p,
                       const std::vector<bool>& mask, const Var* coverage) {
  using namespace diffcore;
  Var query = add(matvec(tape.param(*p.w_state), state), tape.param(*p.bias));
  Var pre = add_rowvec(keys, query);
  if (coverage != nullptr) pre = add(pre, outer(*coverage, tape.param(*p.w_cov)));
  Var scores = matvec(tanh(pre), tape.param(*p.v));
  return mask.empty() ? softmax(scores) : masked_softmax(scores, mask);
}

inline Var attend(Tape& tape, const Var& features, const Var& state, const AttentionParams& p,
                  const std::vector<bool>& mask = {}, const Var* coverage = nullptr) {
  return attend_keys(tape, attention_keys(tape, features, p), state, p, mask, coverage);
}

}  // namespace structsum::summnet
