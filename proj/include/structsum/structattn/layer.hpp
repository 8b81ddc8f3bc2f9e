#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "structsum/diffcore/ops.hpp"

// Structural attention: a soft non-projective dependency tree over the
// tokens of one sequence, computed with the Matrix-Tree theorem.
//
// With A[j][k] = exp(f[j][k]) the weight of edge j -> k (j is the parent),
// L = diag(column sums of A) - A and L̄ = L with row 0 replaced by the root
// weights exp(root[k]):
//
//   P(j -> k)   = [k != 0] A[j][k] L̄⁻¹[k][k] - [j != 0] A[j][k] L̄⁻¹[k][j]
//   P(root = j) = exp(root[j]) L̄⁻¹[j][0]
//
// These are the exact marginals of the distribution over single-rooted
// spanning arborescences, so every token has exactly one parent in
// expectation: P(root = k) + sum_j P(j -> k) = 1.
namespace structsum::structattn {

using diffcore::Parameter;
using diffcore::ParamStore;
using diffcore::Shape;
using diffcore::Tape;
using diffcore::Tensor;
using diffcore::Var;

inline constexpr double kScoreClamp = 20.0;

struct StructAttnParams {
  Parameter* w_parent = nullptr;    // [attn x struct]
  Parameter* w_child = nullptr;     // [attn x struct]
  Parameter* w_bilinear = nullptr;  // [attn x attn]
  Parameter* w_root = nullptr;      // [struct]
  Parameter* w_comb = nullptr;      // [out x 3*sem]
  Parameter* e_root = nullptr;      // [sem]
  bool literal_ci = false;          // c_i = (sum_k a[i][k]) e_i instead of sum_k a[i][k] e_k

  std::size_t sem_dim() const { return e_root->value.size(); }
  std::size_t struct_dim() const { return w_root->value.size(); }
  std::size_t out_dim() const { return w_comb->value.rows(); }

  // `hidden` is the encoder state width 2H; it is split into equal halves.
  static StructAttnParams create(ParamStore& ps, const std::string& prefix, std::size_t hidden, std::size_t attn,
                                 std::size_t out, std::mt19937_64& rng) {
    if (hidden % 2 != 0) throw OddHiddenSize("structural attention needs an even state width, got " + std::to_string(hidden));
    const std::size_t half = hidden / 2;
    StructAttnParams p;
    p.w_parent = ps.add_uniform(prefix + ".w_parent", {attn, half}, rng);
    p.w_child = ps.add_uniform(prefix + ".w_child", {attn, half}, rng);
    p.w_bilinear = ps.add_uniform(prefix + ".w_bilinear", {attn, attn}, rng);
    p.w_root = ps.add_uniform(prefix + ".w_root", {half}, rng);
    p.w_comb = ps.add_uniform(prefix + ".w_comb", {out, 3 * half}, rng);
    p.e_root = ps.add_uniform(prefix + ".e_root", {half}, rng);
    return p;
  }
};

struct SplitHidden {
  Var semantic;    // e: first half of each row
  Var structural;  // d: second half of each row
};

inline SplitHidden split_hidden(const Var& h) {
  const std::size_t width = h.value().cols();
  if (width % 2 != 0) throw OddHiddenSize("cannot split hidden width " + std::to_string(width));
  return {diffcore::slice_cols(h, 0, width / 2), diffcore::slice_cols(h, width / 2, width / 2)};
}

// f[j][k] = tanh(W_c d_k)ᵀ W_a tanh(W_p d_j), clamped.
inline Var pair_scores(Tape& tape, const Var& d, const StructAttnParams& p) {
  using namespace diffcore;
  Var parent = tanh(matmul(d, transpose(tape.param(*p.w_parent))));  // [K x attn]
  Var child = tanh(matmul(d, transpose(tape.param(*p.w_child))));    // [K x attn]
  Var f = matmul(matmul(parent, transpose(tape.param(*p.w_bilinear))), transpose(child));
  return clamp(f, -kScoreClamp, kScoreClamp);
}

// f^r_j = w_root · d_j, clamped.
inline Var root_scores(Tape& tape, const Var& d, const StructAttnParams& p) {
  return diffcore::clamp(diffcore::matvec(d, tape.param(*p.w_root)), -kScoreClamp, kScoreClamp);
}

struct TreeMarginals {
  Var edge;  // [K x K], edge[j][k] = P(j is the parent of k)
  Var root;  // [K], root[k] = P(k is the root)
};

inline TreeMarginals tree_marginals(const Var& scores, const Var& roots) {
  using namespace diffcore;
  Tape& tape = scores.tape();
  const std::size_t K = scores.value().rows();
  if (K == 0 || scores.value().cols() != K || roots.size() != K) {
    throw ShapeMismatch("tree_marginals: scores " + shape_string(scores.shape()) + ", roots " +
                        shape_string(roots.shape()));
  }
  Tensor off_diag(Shape{K, K}, 1.0), not_first_row(Shape{K, K}, 1.0), not_first(Shape{K}, 1.0), first(Shape{K});
  for (std::size_t i = 0; i < K; ++i) off_diag.at(i, i) = 0.0;
  for (std::size_t j = 0; j < K; ++j) not_first_row.at(0, j) = 0.0;
  not_first[0] = 0.0;
  first[0] = 1.0;

  Var weights = mul(exp(clamp(scores, -kScoreClamp, kScoreClamp)), tape.constant(off_diag));
  Var root_weights = exp(clamp(roots, -kScoreClamp, kScoreClamp));
  Var laplacian = sub(diag_embed(sum_axis(weights, 0)), weights);
  Var lbar = add(mul(laplacian, tape.constant(not_first_row)), outer(tape.constant(first), root_weights));
  Var inv;
  try {
    inv = matinv(lbar);
  } catch (const SingularMatrix& e) {
    throw SingularLaplacian(std::string("degenerate tree scores: ") + e.what());
  }
  Var term_diag = scale_by(weights, mul(diag(inv), tape.constant(not_first)), 1);
  Var term_cross = mul(mul(weights, transpose(inv)), tape.constant(not_first_row));
  return {sub(term_diag, term_cross), mul(root_weights, col(inv, 0))};
}

// s_i = a^r_i e_root + sum_k a[k][i] e_k   (expected parent)
// c_i = sum_k a[i][k] e_k                  (expected children)
// r_i = tanh(W_comb [e_i, s_i, c_i])
inline Var structure_infuse(Tape& tape, const Var& semantic, const TreeMarginals& m, const StructAttnParams& p) {
  using namespace diffcore;
  Var parents = add(outer(m.root, tape.param(*p.e_root)), matmul(transpose(m.edge), semantic));
  Var children = p.literal_ci ? scale_by(semantic, sum_axis(m.edge, 1), 0) : matmul(m.edge, semantic);
  Var combined = concat_cols({semantic, parents, children});
  return tanh(matmul(combined, transpose(tape.param(*p.w_comb))));
}

struct StructAttnOutput {
  TreeMarginals marginals;
  Var semantic;
  Var structural;
  Var r;  // [K x out]
};

// Full layer over the first `length` rows of encoder states h. When
// `marginal_flops` is set, the operations spent inside tree_marginals are
// added to it.
inline StructAttnOutput structural_attention(Tape& tape, const Var& h, std::size_t length, const StructAttnParams& p,
                                             std::uint64_t* marginal_flops = nullptr) {
  Var states = length == h.value().rows() ? h : diffcore::slice_rows(h, 0, length);
  SplitHidden parts = split_hidden(states);
  Var f = pair_scores(tape, parts.structural, p);
  Var roots = root_scores(tape, parts.structural, p);
  const std::uint64_t before = diffcore::flop_count();
  TreeMarginals m = tree_marginals(f, roots);
  if (marginal_flops) *marginal_flops += diffcore::flop_count() - before;
  Var r = structure_infuse(tape, parts.semantic, m, p);
  return {m, parts.semantic, parts.structural, r};
}

}  // namespace structsum::structattn
