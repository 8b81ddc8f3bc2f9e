// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "evalkit_oracles.hpp"
#include "structsum/cli/commands.hpp"
#include "structsum/cli/selfcheck.hpp"
#include "structsum/cli/synthetic.hpp"
#include "structsum/evalkit/extractive.hpp"
#include "structsum/hiernet/model.hpp"
#include "structsum/structattn/tree.hpp"
#include "structsum/summnet/beam.hpp"
#include "structsum/summnet/model.hpp"
#include "structsum/summnet/train.hpp"

using namespace structsum;
using diffcore::Tape;

namespace {

struct Verdict {
  bool passed = false;
  std::string detail;
};

std::string num(double v, const char* f = "%.4g") {
  char b[64];
  std::snprintf(b, sizeof b, f, v);
  return b;
}

Verdict from(const selfcheck::CheckResult& r) { return {r.passed, r.detail + ", " + num(r.seconds, "%.2f") + " s"}; }

template <class Enc>
double corpus_nll(auto& model, const std::vector<Enc>& data) {
  std::vector<const Enc*> all;
  for (const auto& e : data) all.push_back(&e);
  return summnet::evaluate_loss(model, all).nll;
}

// 50 copy examples: sources of 12-20 tokens over 30 words, summary = first 10.
Verdict flat_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t words = 30, vocab = textpipe::kNumSpecials + words;
  summnet::ModelConfig c;
  c.mode = summnet::ModelMode::PgSa;
  c.vocab_size = vocab;
  c.emb_dim = 32;
  c.hidden = 32;
  c.attn_dim = 64;
  c.tree_dim = 32;
  summnet::FlatModel model(c);

  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> tok(textpipe::kNumSpecials, vocab - 1), len(12, 20);
  std::vector<textpipe::EncodedFlat> data;
  for (std::size_t n = 0; n < 50; ++n) {
    std::vector<std::size_t> src(len(rng));
    for (auto& t : src) t = tok(rng);
    data.push_back(synthetic::flat(src, {src.begin(), src.begin() + 10}, vocab, 0, "c" + std::to_string(n)));
  }

  diffcore::AdagradState opt(0.15, 0.1);
  double nll = corpus_nll(model, data);
  std::size_t reached = 0;
  for (std::size_t step = 0; step < 2000; ++step) {
    const auto idx = cli::batch_indices(step, 1, data.size(), 1);
    summnet::train_step(model, std::vector<const textpipe::EncodedFlat*>{&data[idx[0]]}, opt);
    if ((step + 1) % 250 == 0) {
      nll = corpus_nll(model, data);
      if (!reached && nll < 0.1) reached = step + 1;
    }
  }

  summnet::BeamOptions bo;
  bo.width = 4;
  bo.min_steps = 1;
  bo.max_steps = 30;
  std::size_t exact = 0;
  for (const auto& ex : data) {
    summnet::Hypothesis h = summnet::beam_decode(model, ex, bo);
    std::vector<std::size_t> gold(ex.target.targets.begin(), ex.target.targets.end() - 1);
    exact += h.finished && h.tokens == gold;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = reached > 0 && exact * 10 >= data.size() * 9 && secs < 900;
  return {ok, "train NLL " + num(nll) + " at step 2000 (< 0.1 " +
                  (reached ? "from step " + std::to_string(reached) : std::string("never")) + "), beam-4 exact " +
                  std::to_string(exact) + "/50, " + num(secs, "%.1f") + " s"};
}

// 20 threads of 3-5 answers; the summary is the top-upvote answer, which the
// encoder places first.
Verdict hier_overfit() {
  const std::size_t words = 40, vocab = textpipe::kNumSpecials + words;
  summnet::ModelConfig c;
  c.mode = summnet::ModelMode::PgHsa;
  c.vocab_size = vocab;
  c.emb_dim = 32;
  c.hidden = 32;
  c.attn_dim = 64;
  c.tree_dim = 32;
  hiernet::HierModel model(c);

  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> tok(textpipe::kNumSpecials, vocab - 1), len(6, 10), count(3, 5);
  std::vector<textpipe::EncodedThread> data;
  for (std::size_t n = 0; n < 20; ++n) {
    std::vector<std::vector<std::size_t>> answers(count(rng));
    for (auto& a : answers) {
      a.resize(len(rng));
      for (auto& t : a) t = tok(rng);
    }
    data.push_back(synthetic::thread(answers, answers[0], vocab, 0, "t" + std::to_string(n)));
  }

  diffcore::AdagradState opt(0.15, 0.1);
  double nll = corpus_nll(model, data);
  std::size_t step = 0, reached = 0;
  for (; step < 3000; ++step) {
    const auto idx = cli::batch_indices(step, 1, data.size(), 1);
    summnet::train_step(model, std::vector<const textpipe::EncodedThread*>{&data[idx[0]]}, opt);
    if ((step + 1) % 250 == 0) {
      nll = corpus_nll(model, data);
      if (!reached && nll < 0.1) reached = step + 1;
    }
  }

  // teacher-forced answer-level attention on the first (top-upvote) answer
  double mass = 0, p_gen = 0;
  std::size_t steps = 0;
  for (const auto& th : data) {
    Tape tape;
    summnet::Memory m = model.encode(tape, th);
    std::vector<summnet::StepOut> trace;
    summnet::sequence_loss(tape, model.dec, m, th.target, false, &trace);
    for (const auto& s : trace) {
      mass += s.gen_attn.value()[0];
      p_gen += s.p_gen.value()[0];
      ++steps;
    }
  }
  mass /= static_cast<double>(steps);
  p_gen /= static_cast<double>(steps);
  const bool ok = reached > 0 && mass > 0.6;
  return {ok, "NLL " + num(nll) + " at step 3000 (< 0.1 " + (reached ? "from step " + std::to_string(reached) : std::string("never")) +
                  "), top-answer attention mass " + num(mass, "%.3f") + " (needs > 0.6), mean p_gen " +
                  num(p_gen, "%.3f")};
}

Verdict extractive() {
  using namespace oracles;
  std::size_t lex_ok = 0, text_ok = 0, kl_ok = 0;
  for (const auto& text : crafted_corpora()) {
    const auto s = sentences_of(text);
    lex_ok += ranking(evalkit::lexrank_scores(s)) == ranking(oracle_stationary(oracle_tfidf_graph(s, 0.1), 0.85));
    text_ok += ranking(evalkit::textrank_scores(s)) == ranking(oracle_stationary(oracle_overlap_graph(s), 0.85));
  }
  for (const auto& kc : kl_cases()) {
    const auto s = sentences_of(kc.text);
    evalkit::ExtractOptions o;
    o.budget = kc.budget;
    double best = 0;
    kl_ok += evalkit::kl_summ(s, o).picked == exhaustive_kl(s, kc.budget, best);
  }

  std::string doc;
  textpipe::Tokens expected;
  for (int w = 0; w < 150; ++w) {
    const std::string t = w % 15 == 14 ? "." : "w" + std::to_string(w);
    doc += t + " ";
    if (expected.size() < 100) expected.push_back(t);
  }
  textpipe::Example ex = textpipe::parse_example(nlohmann::json{{"id", "lead"}, {"document", doc}, {"summary", "w0"}});
  const bool lead_ok = evalkit::lead3(ex) == expected;

  const std::size_t nc = crafted_corpora().size(), nk = kl_cases().size();
  const bool ok = lex_ok == nc && text_ok == nc && kl_ok == nk && lead_ok;
  return {ok, "lexrank " + std::to_string(lex_ok) + "/" + std::to_string(nc) + ", textrank " + std::to_string(text_ok) +
                  "/" + std::to_string(nc) + ", kl-summ exhaustive " + std::to_string(kl_ok) + "/" +
                  std::to_string(nk) + ", lead3 first 100 tokens " + (lead_ok ? "yes" : "no")};
}

// 12 answers of 65 tokens against one 780-token tree.
Verdict memory_contract() {
  const std::size_t vocab = textpipe::kNumSpecials + 50;
  summnet::ModelConfig c;
  c.mode = summnet::ModelMode::PgHsa;
  c.vocab_size = vocab;
  c.emb_dim = 8;
  c.hidden = 8;
  hiernet::HierModel model(c);
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> tok(textpipe::kNumSpecials, vocab - 1);
  std::vector<std::vector<std::size_t>> answers(12, std::vector<std::size_t>(65));
  for (auto& a : answers)
    for (auto& t : a) t = tok(rng);
  Tape tape;
  const std::uint64_t hier = model.encode_thread(tape, synthetic::thread(answers, {4}, vocab)).marginal_flops;

  Tape t2;
  const std::size_t K = 780;
  diffcore::reset_flop_count();
  structattn::tree_marginals(t2.constant(synthetic::random_tensor({K, K}, rng)),
                             t2.constant(synthetic::random_tensor({K}, rng)));
  const std::uint64_t flat = diffcore::flop_count();
  const double ratio = static_cast<double>(hier) / static_cast<double>(flat);
  return {hier > 0 && ratio < 0.15, "hierarchical " + std::to_string(hier) + " vs flat " + std::to_string(flat) +
                                        " operations, ratio " + num(100 * ratio, "%.2f") + "%"};
}

Verdict selfcheck_binary() {
  const std::string cmd = std::string("\"") + STRUCTSUM_CLI + "\" selfcheck >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return {code == 0, "structsum selfcheck exit status " + std::to_string(code)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"matrix-tree marginals match enumeration", [] { return from(selfcheck::matrix_tree_oracle()); }},
      {"parent normalization", [] { return from(selfcheck::parent_normalization()); }},
      {"gradient checks", [] { return from(selfcheck::gradients()); }},
      {"output distributions sum to one", [] { return from(selfcheck::distribution_validity()); }},
      {"flat overfit", flat_overfit},
      {"hierarchical overfit", hier_overfit},
      {"rouge correctness", [] { return from(selfcheck::rouge_correctness()); }},
      {"extractive baselines", extractive},
      {"hierarchical marginal cost", memory_contract},
      {"selfcheck command", selfcheck_binary},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    all = all && v.passed;
    std::cout << (v.passed ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
              << "): " << v.detail << std::endl;
  }
  return all ? 0 : 1;
}
