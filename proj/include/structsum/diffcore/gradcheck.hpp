#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "structsum/diffcore/ops.hpp"

namespace structsum::diffcore {

struct GradCheckResult {
  double max_rel_error = 0.0;  // worst per-input relative error
  std::size_t evaluations = 0;
};

// Builds a scalar from input leaves recorded on a fresh tape.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Relative error ||a - n|| / max(||a||, ||n||, floor) between the analytic
// gradient and central finite differences, per input tensor.
inline GradCheckResult check_gradients(const ScalarFn& fn, const std::vector<Tensor>& inputs, double step = 1e-6,
                                       double floor = 1e-8) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
    Var out = fn(tape, vars);
    tape.backward(out);
    for (const Var& v : vars) analytic.push_back(tape.has_grad(v.id()) ? tape.grad(v.id()) : Tensor(v.shape()));
  }

  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : xs) vars.push_back(tape.constant(t));
    return fn(tape, vars).item();
  };

  GradCheckResult result;
  std::vector<Tensor> work = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = work[k][i];
      work[k][i] = orig + step;
      const double up = eval(work);
      work[k][i] = orig - step;
      const double down = eval(work);
      work[k][i] = orig;
      result.evaluations += 2;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      diff_sq += (a - numeric) * (a - numeric);
      a_sq += a * a;
      n_sq += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a_sq), std::sqrt(n_sq), floor});
    result.max_rel_error = std::max(result.max_rel_error, std::sqrt(diff_sq) / denom);
  }
  return result;
}

// Same check for parameters of a model: perturbs each parameter in place.
// `loss` must rebuild the forward pass on the tape it is given.
inline GradCheckResult check_param_gradients(ParamStore& params, const std::function<Var(Tape&)>& loss,
                                             const std::vector<std::size_t>& which, double step = 1e-6,
                                             double floor = 1e-8) {
  params.zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  GradCheckResult result;
  for (std::size_t k : which) {
    Parameter& p = params[k];
    const Tensor analytic = p.grad;
    double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + step;
      double up, down;
      {
        Tape tape;
        up = loss(tape).item();
      }
      p.value[i] = orig - step;
      {
        Tape tape;
        down = loss(tape).item();
      }
      p.value[i] = orig;
      result.evaluations += 2;
      const double numeric = (up - down) / (2.0 * step);
      diff_sq += (analytic[i] - numeric) * (analytic[i] - numeric);
      a_sq += analytic[i] * analytic[i];
      n_sq += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a_sq), std::sqrt(n_sq), floor});
    result.max_rel_error = std::max(result.max_rel_error, std::sqrt(diff_sq) / denom);
  }
  params.zero_grad();
  return result;
}

}  // namespace structsum::diffcore
