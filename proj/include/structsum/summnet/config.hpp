#pragma once

#include <cstdint>
#include <string>

#include "structsum/error.hpp"

namespace structsum::summnet {

enum class ModelMode { Pg, PgSa, PgHsa };
enum class PoolMode { Sum, Mean, Max };

inline std::string to_string(ModelMode m) {
  switch (m) {
    case ModelMode::Pg: return "pg";
    case ModelMode::PgSa: return "pg-sa";
    case ModelMode::PgHsa: return "pg-hsa";
  }
  return "?";
}

inline ModelMode parse_mode(const std::string& s) {
  if (s == "pg") return ModelMode::Pg;
  if (s == "pg-sa") return ModelMode::PgSa;
  if (s == "pg-hsa") return ModelMode::PgHsa;
  throw Error("unknown model mode '" + s + "' (expected pg, pg-sa or pg-hsa)");
}

inline std::string to_string(PoolMode m) {
  switch (m) {
    case PoolMode::Sum: return "sum";
    case PoolMode::Mean: return "mean";
    case PoolMode::Max: return "max";
  }
  return "?";
}

inline PoolMode parse_pool(const std::string& s) {
  if (s == "sum") return PoolMode::Sum;
  if (s == "mean") return PoolMode::Mean;
  if (s == "max") return PoolMode::Max;
  throw Error("unknown pooling mode '" + s + "' (expected sum, mean or max)");
}

struct ModelConfig {
  ModelMode mode = ModelMode::PgSa;
  std::size_t vocab_size = 50000;  // including the special tokens
  std::size_t emb_dim = 128;
  std::size_t hidden = 256;    // per LSTM direction; encoder states are 2*hidden wide
  std::size_t attn_dim = 0;    // decoder attention width, 0 = 2*hidden
  std::size_t tree_dim = 0;    // structural attention width, 0 = hidden
  bool literal_ci = false;
  bool bypass_structure = false;          // r = h and structural attention reuses the plain one
  PoolMode pool = PoolMode::Sum;
  bool identity_answer_encoder = false;  // answer level: no recurrence, no tree
  std::uint64_t seed = 1;

  std::size_t state_dim() const { return 2 * hidden; }
  std::size_t decoder_attn_dim() const { return attn_dim ? attn_dim : 2 * hidden; }
  std::size_t struct_attn_dim() const { return tree_dim ? tree_dim : hidden; }
};

}  // namespace structsum::summnet
