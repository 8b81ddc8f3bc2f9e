#pragma once

#include <cmath>
#include <vector>

#include "structsum/diffcore/tape.hpp"

namespace structsum::diffcore {

struct AdagradState {
  double learning_rate = 0.15;
  double init_accumulator = 0.1;
  std::vector<Tensor> accumulators;  // one per parameter, in store order

  AdagradState() = default;
  AdagradState(double lr, double init_acc) : learning_rate(lr), init_accumulator(init_acc) {}

  void ensure(const ParamStore& params) {
    if (accumulators.size() == params.size()) return;
    accumulators.clear();
    for (std::size_t i = 0; i < params.size(); ++i) {
      accumulators.emplace_back(params[i].value.shape(), init_accumulator);
    }
  }
};

// acc += g^2, then p -= lr * g / sqrt(acc).
inline void adagrad_step(ParamStore& params, AdagradState& state) {
  state.ensure(params);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params[k];
    Tensor& acc = state.accumulators[k];
    if (acc.shape() != p.value.shape() || p.grad.shape() != p.value.shape()) {
      throw ShapeMismatch("adagrad: shape mismatch for " + p.name);
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      if (g == 0.0) continue;
      acc[i] += g * g;
      p.value[i] -= state.learning_rate * g / std::sqrt(acc[i]);
    }
  }
}

inline double global_grad_norm(const ParamStore& params) {
  double sq = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k)
    for (double g : params[k].grad.values()) sq += g * g;
  return std::sqrt(sq);
}

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
inline double clip_global_norm(ParamStore& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (std::size_t k = 0; k < params.size(); ++k)
      for (double& g : params[k].grad.values()) g *= s;
  }
  return norm;
}

}  // namespace structsum::diffcore
