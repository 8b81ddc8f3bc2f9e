#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "structsum/summnet/decoder.hpp"

namespace structsum::hiernet {

using diffcore::ParamStore;
using diffcore::Shape;
using diffcore::Tape;
using diffcore::Tensor;
using diffcore::Var;
using summnet::Memory;
using summnet::ModelConfig;
using summnet::PoolMode;

// One vector per answer from its token representations [K x D].
inline Var pool_answer(const Var& reps, PoolMode mode) {
  using namespace diffcore;
  if (reps.value().rank() != 2 || reps.value().rows() == 0) throw EmptyAnswer("cannot pool an answer without tokens");
  switch (mode) {
    case PoolMode::Sum: return sum_axis(reps, 0);
    case PoolMode::Mean: return scale(sum_axis(reps, 0), 1.0 / static_cast<double>(reps.value().rows()));
    case PoolMode::Max: return max_rows(reps);
  }
  throw Error("unknown pooling mode");
}

struct HierEncoderOutput {
  std::vector<Var> token_h;  // per answer [K_i x 2H]
  std::vector<Var> token_r;  // per answer [K_i x 2H]
  std::vector<structattn::TreeMarginals> token_trees;
  Var pooled;    // [N x 2H]
  Var answer_h;  // [N x 2H]
  Var g;         // [N x 2H] structure infused answer embeddings
  std::optional<structattn::TreeMarginals> answer_tree;  // absent with the identity answer encoder
  summnet::LstmState init;
  std::uint64_t marginal_flops = 0;  // operations spent on tree marginals
};

// Hierarchical pointer-generator: token trees inside each answer, an answer
// tree over pooled answers, generation from answers and copying from tokens.
class HierModel {
 public:
  explicit HierModel(const ModelConfig& cfg) : config(cfg) {
    std::mt19937_64 rng(cfg.seed);
    const std::size_t S = cfg.state_dim();
    emb = seqmodel::Embedding::create(params, "emb", cfg.vocab_size, cfg.emb_dim, rng);
    tok_fwd = seqmodel::LstmParams::create(params, "tok.fwd", cfg.emb_dim, cfg.hidden, rng);
    tok_bwd = seqmodel::LstmParams::create(params, "tok.bwd", cfg.emb_dim, cfg.hidden, rng);
    dec = summnet::DecoderParams::create(params, cfg, emb, rng);
    tok_tree = structattn::StructAttnParams::create(params, "tok.tree", S, cfg.struct_attn_dim(), S, rng);
    tok_tree.literal_ci = cfg.literal_ci;
    if (!cfg.identity_answer_encoder) {
      ans_fwd = seqmodel::LstmParams::create(params, "ans.fwd", S, cfg.hidden, rng);
      ans_bwd = seqmodel::LstmParams::create(params, "ans.bwd", S, cfg.hidden, rng);
      ans_tree = structattn::StructAttnParams::create(params, "ans.tree", S, cfg.struct_attn_dim(), S, rng);
      ans_tree.literal_ci = cfg.literal_ci;
    }
    ans_attn = summnet::AttentionParams::create(params, "ans.attn", S, cfg.hidden, cfg.decoder_attn_dim(), rng);
  }
  HierModel(const HierModel&) = delete;
  HierModel& operator=(const HierModel&) = delete;

  HierEncoderOutput encode_thread(Tape& tape, const textpipe::EncodedThread& th) {
    using namespace diffcore;
    if (th.answers.empty()) throw NoAnswers("thread " + th.id + " has no answers");
    HierEncoderOutput out;
    std::vector<Var> pooled;
    for (const textpipe::SourceRow& ans : th.answers) {
      if (ans.ids.empty()) throw EmptyAnswer("thread " + th.id + " has an answer without tokens");
      const std::size_t K = ans.ids.size();
      seqmodel::EncoderOutput enc = seqmodel::bilstm_encode(tape, tok_fwd, tok_bwd, seqmodel::embed(tape, emb, ans.ids), K);
      structattn::StructAttnOutput sa = structattn::structural_attention(tape, enc.h, K, tok_tree, &out.marginal_flops);
      out.token_h.push_back(enc.h);
      out.token_r.push_back(sa.r);
      out.token_trees.push_back(sa.marginals);
      pooled.push_back(pool_answer(sa.r, config.pool));
    }
    out.pooled = stack_rows(pooled);
    const std::size_t N = pooled.size();
    if (config.identity_answer_encoder) {
      out.answer_h = out.pooled;
      out.g = out.pooled;
      Var mean = scale(sum_axis(out.g, 0), 1.0 / static_cast<double>(N));
      out.init = seqmodel::bridge(tape, dec.bridge, mean, mean);
    } else {
      seqmodel::EncoderOutput enc = seqmodel::bilstm_encode(tape, ans_fwd, ans_bwd, out.pooled, N);
      structattn::StructAttnOutput sa = structattn::structural_attention(tape, enc.h, N, ans_tree, &out.marginal_flops);
      out.answer_h = enc.h;
      out.g = sa.r;
      out.answer_tree = sa.marginals;
      out.init = seqmodel::bridge(tape, dec.bridge, enc);
    }
    return out;
  }

  Memory memory(Tape& tape, const HierEncoderOutput& enc, const textpipe::EncodedThread& th) {
    Memory m;
    m.copy_keys = summnet::attention_keys(tape, diffcore::concat_rows(enc.token_h), dec.copy_attn);
    for (const textpipe::SourceRow& ans : th.answers) {
      m.copy_ids.insert(m.copy_ids.end(), ans.extended_ids.begin(), ans.extended_ids.end());
    }
    m.extended_size = th.extended_size();
    m.gen_attn = &ans_attn;
    m.gen_keys = summnet::attention_keys(tape, enc.g, ans_attn);
    m.gen_values = enc.g;
    m.init = enc.init;
    return m;
  }

  Memory encode(Tape& tape, const textpipe::EncodedThread& th) { return memory(tape, encode_thread(tape, th), th); }

  ModelConfig config;
  ParamStore params;
  seqmodel::Embedding emb;
  seqmodel::LstmParams tok_fwd, tok_bwd;
  summnet::DecoderParams dec;
  structattn::StructAttnParams tok_tree;
  seqmodel::LstmParams ans_fwd, ans_bwd;
  structattn::StructAttnParams ans_tree;
  summnet::AttentionParams ans_attn;
};

}  // namespace structsum::hiernet
