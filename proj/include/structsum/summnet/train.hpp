#pragma once

#include <string>
#include <vector>

#include "structsum/diffcore/optim.hpp"
#include "structsum/summnet/decoder.hpp"

namespace structsum::summnet {

struct TrainOptions {
  double clip_norm = 2.0;
  bool coverage = false;  // coverage phase
  double coverage_weight = 1.0;
};

struct StepReport {
  double loss = 0.0;      // pre-update objective
  double nll = 0.0;       // per-token NLL
  double coverage = 0.0;  // per-step coverage loss
  double grad_norm = 0.0;
  bool skipped = false;
  std::string skip_reason;
};

namespace detail {

// Batch objective: mean over examples of nll + weight * coverage / T.
template <typename Model, typename Example>
Var batch_objective(Tape& tape, Model& model, const std::vector<const Example*>& batch, const TrainOptions& opt,
                    StepReport& report) {
  using namespace diffcore;
  std::vector<Var> per_example;
  double nll = 0.0, cov = 0.0;
  for (const Example* ex : batch) {
    Memory m = model.encode(tape, *ex);
    SequenceLoss l = sequence_loss(tape, model.dec, m, ex->target, opt.coverage);
    Var cov_term = scale(l.coverage, opt.coverage_weight / static_cast<double>(l.steps));
    per_example.push_back(opt.coverage ? add(l.nll, cov_term) : l.nll);
    nll += l.nll.item();
    cov += l.coverage.item() / static_cast<double>(l.steps);
  }
  const double n = static_cast<double>(batch.size());
  report.nll = nll / n;
  report.coverage = cov / n;
  Var total = scale(add_all(per_example), 1.0 / n);
  report.loss = total.item();
  return total;
}

}  // namespace detail

// Forward, backward, clip, Adagrad. A singular Laplacian anywhere in the
// batch aborts the step before any parameter changes.
template <typename Model, typename Example>
StepReport train_step(Model& model, const std::vector<const Example*>& batch, diffcore::AdagradState& optimizer,
                      const TrainOptions& opt = {}) {
  StepReport report;
  if (batch.empty()) throw Error("train_step: empty batch");
  Tape tape;
  Var total;
  try {
    total = detail::batch_objective(tape, model, batch, opt, report);
  } catch (const SingularLaplacian& e) {
    report.skipped = true;
    report.skip_reason = e.what();
    return report;
  }
  model.params.zero_grad();
  tape.backward(total);
  report.grad_norm = diffcore::clip_global_norm(model.params, opt.clip_norm);
  diffcore::adagrad_step(model.params, optimizer);
  return report;
}

// Objective without an update. Examples with a singular Laplacian are left
// out of the mean.
template <typename Model, typename Example>
StepReport evaluate_loss(Model& model, const std::vector<const Example*>& examples, const TrainOptions& opt = {}) {
  StepReport total;
  std::size_t used = 0;
  for (const Example* ex : examples) {
    Tape tape;
    StepReport r;
    try {
      detail::batch_objective(tape, model, std::vector<const Example*>{ex}, opt, r);
    } catch (const SingularLaplacian&) {
      continue;
    }
    total.loss += r.loss;
    total.nll += r.nll;
    total.coverage += r.coverage;
    ++used;
  }
  if (used) {
    total.loss /= static_cast<double>(used);
    total.nll /= static_cast<double>(used);
    total.coverage /= static_cast<double>(used);
  }
  total.skipped = used == 0;
  return total;
}

// Decides when the NLL phase has converged: three consecutive validation
// evaluations each improving on the previous one by less than 0.5%
// (relative). Getting worse counts as a small improvement.
struct CoverageSwitch {
  double threshold = 0.005;
  std::size_t patience = 3;
  double previous = 0.0;
  bool has_previous = false;
  std::size_t stalled = 0;
  bool switched = false;

  // Feeds one validation loss; returns true once the coverage phase is on.
  bool observe(double val_loss) {
    if (switched) return true;
    if (has_previous) {
      const double gain = previous > 0 ? (previous - val_loss) / previous : 0.0;
      stalled = gain < threshold ? stalled + 1 : 0;
    }
    previous = val_loss;
    has_previous = true;
    if (stalled >= patience) switched = true;
    return switched;
  }
};

}  // namespace structsum::summnet
