#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "structsum/summnet/decoder.hpp"

namespace structsum::summnet {

struct BeamOptions {
  std::size_t width = 4;
  std::size_t min_steps = 35;   // tokens that must precede STOP
  std::size_t max_steps = 120;
  bool coverage = false;
};

struct Hypothesis {
  std::vector<std::size_t> tokens;  // extended ids, STOP excluded
  double log_prob = 0.0;
  bool finished = false;  // ended with STOP

  std::size_t steps() const { return tokens.size() + (finished ? 1 : 0); }
  // average log-probability per decoding step
  double score() const { return steps() ? log_prob / static_cast<double>(steps()) : 0.0; }
};

namespace detail {

struct BeamEntry {
  Hypothesis hyp;
  Tensor h, c, coverage;
};

struct Candidate {
  double log_prob;
  std::size_t token;
  std::size_t parent;
};

}  // namespace detail

// Length-normalized beam search. Each live hypothesis proposes its 2*width
// best tokens; the beam keeps the best `width` unfinished ones by total
// log-probability, finished ones are collected until `width` of them exist.
template <typename Model, typename Example>
Hypothesis beam_decode(Model& model, const Example& ex, const BeamOptions& opt = {}) {
  using namespace diffcore;
  if (opt.width == 0) throw Error("beam width must be positive");
  Tape tape;
  Memory mem = model.encode(tape, ex);
  const std::size_t mark = tape.size();

  std::vector<detail::BeamEntry> beam(1);
  beam[0].h = mem.init.h.value();
  beam[0].c = mem.init.c.value();
  beam[0].coverage = Tensor(Shape{mem.copy_ids.size()});
  std::vector<Hypothesis> done;

  for (std::size_t step = 0; step < opt.max_steps && done.size() < opt.width; ++step) {
    std::vector<detail::Candidate> cands;
    std::vector<detail::BeamEntry> next_state(beam.size());
    for (std::size_t b = 0; b < beam.size(); ++b) {
      tape.rewind(mark);
      const detail::BeamEntry& e = beam[b];
      const std::size_t prev = e.hyp.tokens.empty() ? textpipe::kStart : e.hyp.tokens.back();
      Var cov = tape.constant(e.coverage);
      StepOut out = decoder_step(tape, model.dec, mem, prev, {tape.constant(e.h), tape.constant(e.c)},
                                 opt.coverage ? &cov : nullptr);
      next_state[b].h = out.state.h.value();
      next_state[b].c = out.state.c.value();
      next_state[b].coverage = e.coverage;
      next_state[b].coverage += out.copy_attn.value();
      const Tensor& p = out.dist.value();
      std::vector<detail::Candidate> local;
      for (std::size_t w = 0; w < p.size(); ++w) {
        if (w == textpipe::kStop && e.hyp.tokens.size() < opt.min_steps) continue;
        if (w == textpipe::kPad || w == textpipe::kStart) continue;
        local.push_back({e.hyp.log_prob + std::log(std::max(p[w], kProbFloor)), w, b});
      }
      const std::size_t keep = std::min(local.size(), 2 * opt.width);
      std::partial_sort(local.begin(), local.begin() + static_cast<std::ptrdiff_t>(keep), local.end(),
                        [](const detail::Candidate& a, const detail::Candidate& b) {
                          return a.log_prob != b.log_prob ? a.log_prob > b.log_prob : a.token < b.token;
                        });
      cands.insert(cands.end(), local.begin(), local.begin() + static_cast<std::ptrdiff_t>(keep));
    }
    std::stable_sort(cands.begin(), cands.end(), [](const detail::Candidate& a, const detail::Candidate& b) {
      return a.log_prob != b.log_prob ? a.log_prob > b.log_prob : a.token < b.token;
    });
    std::vector<detail::BeamEntry> fresh;
    for (const detail::Candidate& c : cands) {
      if (fresh.size() >= opt.width || done.size() >= opt.width) break;
      Hypothesis h = beam[c.parent].hyp;
      h.log_prob = c.log_prob;
      if (c.token == textpipe::kStop) {
        h.finished = true;
        done.push_back(h);
        continue;
      }
      h.tokens.push_back(c.token);
      fresh.push_back({h, next_state[c.parent].h, next_state[c.parent].c, next_state[c.parent].coverage});
    }
    if (fresh.empty()) break;
    beam = std::move(fresh);
  }
  if (done.empty()) {
    for (const auto& e : beam) done.push_back(e.hyp);
  }
  return *std::min_element(done.begin(), done.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return a.score() != b.score() ? a.score() > b.score() : a.tokens < b.tokens;
  });
}

// Argmax at every step, same STOP rules as the beam.
template <typename Model, typename Example>
Hypothesis greedy_decode(Model& model, const Example& ex, std::size_t min_steps = 35, std::size_t max_steps = 120) {
  using namespace diffcore;
  Tape tape;
  Memory mem = model.encode(tape, ex);
  const std::size_t mark = tape.size();
  Tensor h = mem.init.h.value(), c = mem.init.c.value();
  Hypothesis hyp;
  for (std::size_t step = 0; step < max_steps; ++step) {
    tape.rewind(mark);
    const std::size_t prev = hyp.tokens.empty() ? textpipe::kStart : hyp.tokens.back();
    StepOut out = decoder_step(tape, model.dec, mem, prev, {tape.constant(h), tape.constant(c)}, nullptr);
    const Tensor& p = out.dist.value();
    std::size_t best = p.size();
    for (std::size_t w = 0; w < p.size(); ++w) {
      if (w == textpipe::kStop && hyp.tokens.size() < min_steps) continue;
      if (w == textpipe::kPad || w == textpipe::kStart) continue;
      if (best == p.size() || p[w] > p[best]) best = w;
    }
    hyp.log_prob += std::log(std::max(p[best], kProbFloor));
    if (best == textpipe::kStop) {
      hyp.finished = true;
      break;
    }
    hyp.tokens.push_back(best);
    h = out.state.h.value();
    c = out.state.c.value();
  }
  return hyp;
}

}  // namespace structsum::summnet
