#pragma once

#include <random>
#include <vector>

#include "structsum/summnet/decoder.hpp"

namespace structsum::summnet {

// Flat pointer-generator, optionally with structural attention over the
// encoder states (PG+SA).
class FlatModel {
 public:
  explicit FlatModel(const ModelConfig& cfg) : config(cfg) {
    if (cfg.mode == ModelMode::PgHsa) throw Error("flat model cannot run in pg-hsa mode");
    std::mt19937_64 rng(cfg.seed);
    emb = seqmodel::Embedding::create(params, "emb", cfg.vocab_size, cfg.emb_dim, rng);
    enc_fwd = seqmodel::LstmParams::create(params, "enc.fwd", cfg.emb_dim, cfg.hidden, rng);
    enc_bwd = seqmodel::LstmParams::create(params, "enc.bwd", cfg.emb_dim, cfg.hidden, rng);
    dec = DecoderParams::create(params, cfg, emb, rng);
    // Structural parameters come last so a bypassed PG+SA draws the same
    // initial values as PG.
    if (structural()) {
      tree = structattn::StructAttnParams::create(params, "tree", cfg.state_dim(), cfg.struct_attn_dim(),
                                                  cfg.state_dim(), rng);
      tree.literal_ci = cfg.literal_ci;
      struct_attn = AttentionParams::create(params, "sattn", cfg.state_dim(), cfg.hidden, cfg.decoder_attn_dim(), rng);
    }
  }
  FlatModel(const FlatModel&) = delete;
  FlatModel& operator=(const FlatModel&) = delete;

  bool structural() const { return config.mode == ModelMode::PgSa && !config.bypass_structure; }

  // `ids` may carry padding past `length`.
  Memory encode_source(Tape& tape, const std::vector<std::size_t>& ids, const std::vector<std::size_t>& extended_ids,
                       std::size_t extended_size, std::size_t length) {
    if (length == 0 || length > ids.size() || extended_ids.size() < length) {
      throw DataError("source must have between 1 and " + std::to_string(ids.size()) + " tokens");
    }
    seqmodel::EncoderOutput enc =
        seqmodel::bilstm_encode(tape, enc_fwd, enc_bwd, seqmodel::embed(tape, emb, ids), length);
    Var h = length == ids.size() ? enc.h : diffcore::slice_rows(enc.h, 0, length);
    Memory m;
    m.copy_keys = attention_keys(tape, h, dec.copy_attn);
    m.copy_ids.assign(extended_ids.begin(), extended_ids.begin() + static_cast<std::ptrdiff_t>(length));
    m.extended_size = extended_size;
    m.gen_values = h;
    m.init = seqmodel::bridge(tape, dec.bridge, enc);
    if (structural()) {
      structattn::StructAttnOutput sa = structattn::structural_attention(tape, h, length, tree);
      m.gen_attn = &struct_attn;
      m.gen_keys = attention_keys(tape, sa.r, struct_attn);
      m.tree = sa.marginals;
    }
    return m;
  }

  Memory encode(Tape& tape, const textpipe::EncodedFlat& ex) {
    return encode_source(tape, ex.source.ids, ex.source.extended_ids, ex.extended_size(), ex.source.ids.size());
  }

  ModelConfig config;
  ParamStore params;
  seqmodel::Embedding emb;
  seqmodel::LstmParams enc_fwd, enc_bwd;
  DecoderParams dec;
  structattn::StructAttnParams tree;
  AttentionParams struct_attn;
};

}  // namespace structsum::summnet
