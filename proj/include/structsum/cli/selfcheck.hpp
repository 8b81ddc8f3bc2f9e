#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "structsum/cli/synthetic.hpp"
#include "structsum/diffcore/gradcheck.hpp"
#include "structsum/evalkit/rouge.hpp"
#include "structsum/hiernet/model.hpp"
#include "structsum/structattn/layer.hpp"
#include "structsum/structattn/tree.hpp"
#include "structsum/summnet/model.hpp"

// End-to-end property checks run by `structsum selfcheck`: tree marginals
// against enumeration, parent normalization, gradients, distribution sums
// and ROUGE against naive references.
namespace structsum::selfcheck {

using diffcore::Shape;
using diffcore::Tape;
using diffcore::Tensor;
using diffcore::Var;

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

namespace detail {

inline std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

// Runs fn; a positive time limit turns into an additional pass condition.
template <class Fn>
CheckResult timed(const std::string& name, double limit_seconds, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r = fn();
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (limit_seconds > 0 && r.seconds >= limit_seconds) {
    r.passed = false;
    r.detail += ", over the " + std::to_string(static_cast<int>(limit_seconds)) + " s limit";
  }
  return r;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

inline structattn::DenseMarginals marginals(const Tensor& f, const Tensor& r) {
  Tape tape;
  structattn::TreeMarginals m = structattn::tree_marginals(tape.constant(f), tape.constant(r));
  return {m.edge.value(), m.root.value()};
}

inline summnet::ModelConfig tiny(summnet::ModelMode mode, std::size_t vocab, std::uint64_t seed) {
  summnet::ModelConfig c;
  c.mode = mode;
  c.vocab_size = vocab;
  c.emb_dim = 4;
  c.hidden = 3;
  c.attn_dim = 5;
  c.tree_dim = 4;
  c.seed = seed;
  return c;
}

}  // namespace detail

// Matrix-Tree marginals equal brute-force enumeration: 200 random instances
// for each K in 2..6, max abs error <= 1e-8, under 5 s.
inline CheckResult matrix_tree_oracle(std::uint64_t seed = 1) {
  return detail::timed("matrix-tree oracle", 5.0, [&] {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (std::size_t K = 2; K <= 6; ++K) {
      for (int trial = 0; trial < 200; ++trial) {
        const Tensor f = synthetic::random_tensor({K, K}, rng, 3.0), r = synthetic::random_tensor({K}, rng, 3.0);
        structattn::DenseMarginals a = detail::marginals(f, r), b = structattn::brute_marginals(f, r);
        for (std::size_t i = 0; i < a.edge.size(); ++i) worst = std::max(worst, std::abs(a.edge[i] - b.edge[i]));
        for (std::size_t i = 0; i < a.root.size(); ++i) worst = std::max(worst, std::abs(a.root[i] - b.root[i]));
      }
    }
    CheckResult r;
    r.passed = worst <= 1e-8;
    r.detail = "1000 instances, max abs error " + detail::sci(worst);
    return r;
  });
}

// a^r[k] + sum_j a[j][k] = 1 for 100 random K=50 instances.
inline CheckResult parent_normalization(std::uint64_t seed = 2) {
  return detail::timed("parent normalization", 0.0, [&] {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    const std::size_t K = 50;
    for (int trial = 0; trial < 100; ++trial) {
      structattn::DenseMarginals m =
          detail::marginals(synthetic::random_tensor({K, K}, rng, 4.0), synthetic::random_tensor({K}, rng, 4.0));
      for (std::size_t k = 0; k < K; ++k) {
        double total = m.root[k];
        for (std::size_t j = 0; j < K; ++j) total += m.edge.at(j, k);
        worst = std::max(worst, std::abs(total - 1.0));
      }
    }
    CheckResult r;
    r.passed = worst <= 1e-8;
    r.detail = "100 instances of K=50, max deviation " + detail::sci(worst);
    return r;
  });
}

// Central-difference gradient checks: tree marginals (K <= 5), a two-step
// PG+SA unroll over four tokens, and one hierarchical decoder step.
inline CheckResult gradients(std::uint64_t seed = 3) {
  return detail::timed("gradient checks", 60.0, [&] {
    std::mt19937_64 rng(seed);
    double tree = 0.0;
    for (std::size_t K = 2; K <= 5; ++K) {
      const Tensor f = synthetic::random_tensor({K, K}, rng, 2.0), roots = synthetic::random_tensor({K}, rng, 2.0);
      const Tensor we = synthetic::random_tensor({K, K}, rng), wr = synthetic::random_tensor({K}, rng);
      auto res = diffcore::check_gradients(
          [&](Tape& t, const std::vector<Var>& in) {
            structattn::TreeMarginals m = structattn::tree_marginals(in[0], in[1]);
            return diffcore::add(diffcore::sum(diffcore::mul(m.edge, t.constant(we))),
                                 diffcore::sum(diffcore::mul(m.root, t.constant(wr))));
          },
          {f, roots});
      tree = std::max(tree, res.max_rel_error);
    }

    // Weights are drawn at scale 1.5 so tree-parameter gradients stand well
    // above finite-difference noise.
    summnet::FlatModel flat(detail::tiny(summnet::ModelMode::PgSa, 8, 11));
    synthetic::randomize(flat.params, rng, 1.5);
    textpipe::EncodedFlat ex = synthetic::flat({4, 9, 5, 8}, {9}, 8, 2);
    auto flat_loss = [&](Tape& t) {
      summnet::Memory m = flat.encode(t, ex);
      summnet::SequenceLoss l = summnet::sequence_loss(t, flat.dec, m, ex.target, true);
      return diffcore::add(l.nll, l.coverage);
    };
    const double unroll =
        diffcore::check_param_gradients(flat.params, flat_loss, detail::all_indices(flat.params.size())).max_rel_error;

    hiernet::HierModel hier(detail::tiny(summnet::ModelMode::PgHsa, 8, 21));
    synthetic::randomize(hier.params, rng, 1.5);
    textpipe::EncodedThread th = synthetic::thread({{4, 9, 5}, {6, 8}}, {}, 8, 2);
    th.target.targets = {9};  // a single step that must copy an OOV
    auto hier_loss = [&](Tape& t) {
      summnet::Memory m = hier.encode(t, th);
      return summnet::sequence_loss(t, hier.dec, m, th.target, false).nll;
    };
    const double step =
        diffcore::check_param_gradients(hier.params, hier_loss, detail::all_indices(hier.params.size())).max_rel_error;

    CheckResult r;
    r.passed = tree <= 1e-4 && unroll <= 1e-4 && step <= 1e-4;
    r.detail = "rel err: tree " + detail::sci(tree) + ", pg-sa unroll " + detail::sci(unroll) + ", hier step " +
               detail::sci(step);
    return r;
  });
}

// p(w) over the extended vocabulary sums to one at every decoder step, for
// 50 random flat configurations (PG and PG+SA) and 50 hierarchical ones,
// most of them carrying OOVs.
inline CheckResult distribution_validity(std::uint64_t seed = 4) {
  return detail::timed("distribution validity", 0.0, [&] {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    std::size_t steps = 0;
    auto track = [&](const std::vector<summnet::StepOut>& trace) {
      for (const auto& s : trace) {
        double total = 0.0;
        for (double v : s.dist.value().values()) total += v;
        worst = std::max(worst, std::abs(total - 1.0));
        ++steps;
      }
    };
    for (std::size_t trial = 0; trial < 50; ++trial) {
      const std::size_t V = 8 + trial % 5, n_oov = trial % 4, K = 3 + trial % 6;
      const auto mode = trial % 2 ? summnet::ModelMode::PgSa : summnet::ModelMode::Pg;
      summnet::FlatModel model(detail::tiny(mode, V, 100 + trial));
      synthetic::randomize(model.params, rng, 1.0);
      textpipe::EncodedFlat ex = synthetic::random_flat(rng, V, K, 1 + trial % 5, n_oov);
      Tape tape;
      summnet::Memory m = model.encode(tape, ex);
      std::vector<summnet::StepOut> trace;
      summnet::sequence_loss(tape, model.dec, m, ex.target, trial % 3 == 0, &trace);
      track(trace);
    }
    for (std::size_t trial = 0; trial < 50; ++trial) {
      const std::size_t V = 8 + trial % 5, n_oov = trial % 4, N = 1 + trial % 4;
      summnet::ModelConfig cfg = detail::tiny(summnet::ModelMode::PgHsa, V, 200 + trial);
      cfg.identity_answer_encoder = trial % 5 == 4;
      cfg.pool = static_cast<summnet::PoolMode>(trial % 3);
      hiernet::HierModel model(cfg);
      synthetic::randomize(model.params, rng, 1.0);
      textpipe::EncodedThread th = synthetic::random_thread(rng, V, N, 5, 1 + trial % 5, n_oov);
      Tape tape;
      summnet::Memory m = model.encode(tape, th);
      std::vector<summnet::StepOut> trace;
      summnet::sequence_loss(tape, model.dec, m, th.target, trial % 3 == 0, &trace);
      track(trace);
    }
    CheckResult r;
    r.passed = worst <= 1e-8;
    r.detail = "100 configurations, " + std::to_string(steps) + " steps, max |sum - 1| " + detail::sci(worst);
    return r;
  });
}

namespace detail {

// Reference n-gram overlap: each candidate n-gram claims one unused equal
// reference n-gram.
inline evalkit::RougeScore naive_rouge_n(const evalkit::Tokens& c, const evalkit::Tokens& r, std::size_t n) {
  auto grams = [n](const evalkit::Tokens& t) {
    std::vector<evalkit::Tokens> g;
    for (std::size_t i = 0; i + n <= t.size(); ++i) g.emplace_back(t.begin() + i, t.begin() + i + n);
    return g;
  };
  auto cg = grams(c), rg = grams(r);
  std::vector<bool> used(rg.size(), false);
  double hits = 0;
  for (const auto& x : cg) {
    for (std::size_t j = 0; j < rg.size(); ++j) {
      if (!used[j] && rg[j] == x) {
        used[j] = true;
        hits += 1;
        break;
      }
    }
  }
  return evalkit::make_score(hits, cg.size(), rg.size());
}

// Full-table LCS.
inline std::size_t table_lcs(const evalkit::Tokens& a, const evalkit::Tokens& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
  return t[a.size()][b.size()];
}

inline double score_gap(const evalkit::RougeScore& a, const evalkit::RougeScore& b) {
  return std::max({std::abs(a.precision - b.precision), std::abs(a.recall - b.recall), std::abs(a.f1 - b.f1)});
}

}  // namespace detail

// The three hand-derived ROUGE values plus 100 random pairs against the
// naive counter and the table LCS, exact to 1e-12.
inline CheckResult rouge_correctness(std::uint64_t seed = 7) {
  return detail::timed("rouge correctness", 0.0, [&] {
    using textpipe::tokenize;
    double worst = 0.0;
    const auto c = tokenize("the cat sat"), ref = tokenize("the cat ran");
    worst = std::max(worst, std::abs(evalkit::rouge_n(c, ref, 1).f1 - 2.0 / 3.0));
    worst = std::max(worst, std::abs(evalkit::rouge_n(c, ref, 2).f1 - 0.5));
    worst = std::max(worst, std::abs(evalkit::rouge_l(c, ref).f1 - 2.0 / 3.0));
    std::mt19937_64 rng(seed);
    auto random_tokens = [&] {
      evalkit::Tokens t(std::uniform_int_distribution<std::size_t>(0, 25)(rng));
      for (auto& x : t) x = "w" + std::to_string(std::uniform_int_distribution<int>(0, 7)(rng));
      return t;
    };
    for (int trial = 0; trial < 100; ++trial) {
      const auto a = random_tokens(), b = random_tokens();
      for (std::size_t n : {1, 2}) worst = std::max(worst, detail::score_gap(evalkit::rouge_n(a, b, n), detail::naive_rouge_n(a, b, n)));
      const auto lcs = evalkit::make_score(static_cast<double>(detail::table_lcs(a, b)), a.size(), b.size());
      worst = std::max(worst, detail::score_gap(evalkit::rouge_l(a, b), lcs));
    }
    CheckResult r;
    r.passed = worst <= 1e-12;
    r.detail = "3 hand examples + 100 random pairs, max error " + detail::sci(worst);
    return r;
  });
}

inline std::vector<std::function<CheckResult()>> all_checks() {
  return {[] { return matrix_tree_oracle(); }, [] { return parent_normalization(); }, [] { return gradients(); },
          [] { return distribution_validity(); }, [] { return rouge_correctness(); }};
}

// One "PASS|FAIL name: detail (seconds)" line per check; true when all pass.
inline bool run_all(std::ostream& os) {
  bool ok = true;
  for (const auto& check : all_checks()) {
    CheckResult r = check();
    ok = ok && r.passed;
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.2fs", r.seconds);
    os << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << " (" << secs << ")\n";
    os.flush();
  }
  return ok;
}

}  // namespace structsum::selfcheck
