#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "structsum/cli/config.hpp"
#include "structsum/diffcore/checkpoint.hpp"
#include "structsum/evalkit/extractive.hpp"
#include "structsum/evalkit/parallel.hpp"
#include "structsum/evalkit/report.hpp"
#include "structsum/hiernet/model.hpp"
#include "structsum/structattn/tree.hpp"
#include "structsum/summnet/beam.hpp"
#include "structsum/summnet/io.hpp"
#include "structsum/summnet/model.hpp"
#include "structsum/summnet/train.hpp"
#include "structsum/textpipe/dataset.hpp"
#include "structsum/textpipe/vocab.hpp"

namespace structsum::cli {

namespace fs = std::filesystem;
using textpipe::Example;
using textpipe::Vocab;

// ---------------------------------------------------------------- data files

inline std::vector<Example> read_examples(const std::string& path) {
  textpipe::LoadedCorpus c = textpipe::load_jsonl(path);
  if (!c.errors.empty()) {
    std::string msg = path + ": " + std::to_string(c.errors.size()) + " malformed line(s)";
    for (const auto& e : c.errors) msg += "\n  line " + std::to_string(e.line) + ": " + e.message;
    throw DataError(msg);
  }
  return std::move(c.examples);
}

inline void write_examples(const std::string& path, const std::vector<const Example*>& exs) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path);
  for (const Example* ex : exs) os << textpipe::to_json(*ex).dump() << '\n';
}

inline std::vector<summnet::SummaryRecord> read_summaries(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  std::vector<summnet::SummaryRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(summnet::parse_summary_line(line));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// Opens `path` for writing, or stdout for "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
    if (!*file_) throw DataError("cannot write " + path);
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

// ------------------------------------------------------------------ prepare

// Fisher-Yates over 0..n-1 driven by mt19937_64; swap partner rng() % (i+1).
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng() % i]);
  return p;
}

// Examples without a "split" field are shuffled with the seed; the first
// tenth goes to val, the next tenth to test, the rest to train.
inline void assign_splits(std::vector<Example>& exs, std::uint64_t seed) {
  std::vector<std::size_t> open;
  for (std::size_t i = 0; i < exs.size(); ++i) {
    const std::string& s = exs[i].split;
    if (s.empty()) {
      open.push_back(i);
    } else if (s != "train" && s != "val" && s != "test") {
      throw DataError("example " + exs[i].id + ": unknown split '" + s + "'");
    }
  }
  const std::vector<std::size_t> perm = seeded_permutation(open.size(), seed);
  const std::size_t tenth = open.size() / 10;
  for (std::size_t r = 0; r < perm.size(); ++r) {
    exs[open[perm[r]]].split = r < tenth ? "val" : r < 2 * tenth ? "test" : "train";
  }
}

inline std::vector<textpipe::Tokens> vocab_corpus(const std::vector<const Example*>& exs) {
  std::vector<textpipe::Tokens> out;
  for (const Example* ex : exs) {
    if (ex->is_thread()) {
      out.push_back(ex->question);
      for (const auto& a : ex->answers()) out.push_back(a.tokens);
    } else {
      out.push_back(ex->document());
    }
    out.push_back(ex->summary);
  }
  return out;
}

struct PrepareReport {
  std::size_t train = 0, val = 0, test = 0, vocab = 0;
};

// Writes train/val/test.jsonl, vocab.tsv (train split only) and
// manifest.json into cfg.data_dir.
inline PrepareReport cmd_prepare(const std::string& input, const RunConfig& cfg) {
  std::vector<Example> exs = read_examples(input);
  if (exs.empty()) throw DataError(input + ": no examples");
  std::set<std::string> ids;
  for (const auto& ex : exs)
    if (!ids.insert(ex.id).second) throw DataError(input + ": duplicate id '" + ex.id + "'");
  assign_splits(exs, cfg.seed);
  std::map<std::string, std::vector<const Example*>> by_split;
  for (const auto& ex : exs) by_split[ex.split].push_back(&ex);
  if (by_split["train"].empty()) throw DataError(input + ": the train split is empty");
  fs::create_directories(cfg.data_dir);
  for (const char* s : {"train", "val", "test"}) write_examples((fs::path(cfg.data_dir) / (std::string(s) + ".jsonl")).string(), by_split[s]);
  Vocab vocab = textpipe::build_vocab(vocab_corpus(by_split["train"]), cfg.vocab_size);
  vocab.save((fs::path(cfg.data_dir) / "vocab.tsv").string());
  PrepareReport rep{by_split["train"].size(), by_split["val"].size(), by_split["test"].size(), vocab.size()};
  nlohmann::ordered_json m;
  m["seed"] = cfg.seed;
  m["train"] = rep.train;
  m["val"] = rep.val;
  m["test"] = rep.test;
  m["vocab_size"] = rep.vocab;
  std::ofstream((fs::path(cfg.data_dir) / "manifest.json").string(), std::ios::binary | std::ios::trunc) << m.dump(2) << '\n';
  return rep;
}

// ------------------------------------------------------------ model helpers

inline textpipe::EncodedFlat encode_for(const summnet::FlatModel&, const Example& ex, const Vocab& v,
                                        const textpipe::EncodeLimits& lim) {
  return textpipe::encode_flat(ex, v, lim);
}

inline textpipe::EncodedThread encode_for(const hiernet::HierModel&, const Example& ex, const Vocab& v,
                                          const textpipe::EncodeLimits& lim) {
  if (!ex.is_thread()) throw DataError("example " + ex.id + ": pg-hsa needs answer threads, got a flat document");
  try {
    return textpipe::encode_thread(ex, v, lim);
  } catch (const NoAnswers& e) {
    throw DataError(e.what());
  }
}

template <class Model>
auto encode_all(const Model& model, const std::vector<Example>& exs, const Vocab& v, const textpipe::EncodeLimits& lim) {
  std::vector<decltype(encode_for(model, exs.front(), v, lim))> out;
  for (const auto& ex : exs) out.push_back(encode_for(model, ex, v, lim));
  return out;
}

// Builds the model named by cfg.mode and hands it to fn.
template <class Fn>
void with_model(const RunConfig& cfg, std::size_t vocab_with_specials, Fn&& fn) {
  summnet::ModelConfig mc = cfg.model(vocab_with_specials);
  if (mc.mode == summnet::ModelMode::PgHsa) {
    hiernet::HierModel m(mc);
    fn(m);
  } else {
    summnet::FlatModel m(mc);
    fn(m);
  }
}

inline std::string vocab_text(const Vocab& v) {
  std::ostringstream os;
  v.write(os);
  return os.str();
}

inline std::map<std::string, std::string> stored_config(const diffcore::Checkpoint& ck) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : ck.meta)
    if (k.rfind("cfg.", 0) == 0) out[k.substr(4)] = v;
  return out;
}

// Model settings from the checkpoint; decoding and runtime settings from `runtime`.
inline RunConfig checkpoint_config(const diffcore::Checkpoint& ck, const RunConfig& runtime) {
  if (!ck.meta.count("vocab")) throw DataError("checkpoint carries no vocabulary");
  RunConfig c = runtime;
  for (const auto& [k, v] : stored_config(ck)) {
    const Field& f = field(k);
    if (f.locked) f.set(c, v);
  }
  validate(c);
  return c;
}

template <class Fn>
void with_checkpoint_model(const std::string& path, const RunConfig& runtime, Fn&& fn) {
  diffcore::Checkpoint ck = diffcore::load_checkpoint(path);
  RunConfig cfg = checkpoint_config(ck, runtime);
  std::istringstream vs(ck.meta.at("vocab"));
  Vocab vocab = Vocab::read(vs, static_cast<std::size_t>(-1), path + " vocabulary");
  with_model(cfg, vocab.size(), [&](auto& model) {
    diffcore::restore_checkpoint(ck, model.params, nullptr);
    fn(model, cfg, vocab);
  });
}

// -------------------------------------------------------------------- train

// Example index for every slot of the batch at `step`; each epoch is a fresh
// seeded permutation, independent of the model mode.
inline std::vector<std::size_t> batch_indices(std::uint64_t step, std::size_t batch, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> out;
  std::uint64_t cached_epoch = std::numeric_limits<std::uint64_t>::max();
  std::vector<std::size_t> perm;
  for (std::size_t j = 0; j < batch; ++j) {
    const std::uint64_t pos = step * batch + j, epoch = pos / n;
    if (epoch != cached_epoch) {
      perm = seeded_permutation(n, seed * 1000003ULL + epoch);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % n]);
  }
  return out;
}

struct TrainResult {
  std::uint64_t step = 0;
  double last_loss = 0.0;
  double best_val = std::numeric_limits<double>::infinity();
  bool coverage = false;
  std::size_t skipped = 0;
  std::size_t validations = 0;
};

namespace detail {

inline std::string fmt(double v) { return show(v); }

// Keeps the header and the rows up to `step` of an existing log.
inline void truncate_log(const fs::path& path, std::uint64_t step) {
  std::ifstream is(path);
  if (!is) return;
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(is, line)) {
    if (keep.empty()) {
      keep.push_back(line);
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    if (std::stoull(line.substr(0, comma)) <= step) keep.push_back(line);
  }
  is.close();
  std::ofstream os(path, std::ios::trunc);
  for (const auto& l : keep) os << l << '\n';
}

}  // namespace detail

template <class Model, class Enc>
TrainResult train_loop(Model& model, const std::vector<Enc>& train, const std::vector<Enc>& val, const RunConfig& cfg,
                       const Vocab& vocab, bool resume, std::ostream& info) {
  const fs::path dir(cfg.checkpoint_dir);
  fs::create_directories(dir);
  const fs::path last = dir / "last.ckpt", best = dir / "best.ckpt", log_path = dir / "train_log.csv";
  const std::string vtext = vocab_text(vocab);

  diffcore::AdagradState opt(cfg.learning_rate, cfg.accumulator_init);
  summnet::CoverageSwitch sw;
  TrainResult res;

  if (resume && fs::exists(last)) {
    diffcore::Checkpoint ck = diffcore::load_checkpoint(last.string());
    std::vector<std::string> diff = locked_differences(stored_config(ck), cfg);
    if (ck.meta.count("vocab") && ck.meta.at("vocab") != vtext) diff.push_back("vocabulary");
    if (!diff.empty()) {
      std::string msg = "cannot resume from " + last.string() + ", settings differ:";
      for (const auto& d : diff) msg += "\n  " + d;
      throw ResumeMismatch(msg);
    }
    diffcore::restore_checkpoint(ck, model.params, &opt);
    res.step = ck.global_step;
    sw.previous = std::stod(ck.meta.at("switch.previous"));
    sw.has_previous = ck.meta.at("switch.has_previous") == "1";
    sw.stalled = std::stoull(ck.meta.at("switch.stalled"));
    sw.switched = ck.meta.at("switch.switched") == "1";
    res.best_val = std::stod(ck.meta.at("best_val"));
    res.coverage = sw.switched;
    detail::truncate_log(log_path, res.step);
    info << "resumed at step " << res.step << (res.coverage ? " (coverage phase)" : "") << '\n';
  } else if (resume) {
    info << "no checkpoint in " << dir.string() << ", starting fresh\n";
  }

  if (res.step == 0) fs::remove(best);  // stale model from an earlier run
  const bool fresh_log = res.step == 0 || !fs::exists(log_path);
  std::ofstream log_file(log_path, fresh_log ? std::ios::trunc : std::ios::app);
  if (!log_file) throw DataError("cannot write " + log_path.string());
  summnet::TrainLog log(log_file, fresh_log);

  auto save = [&](const fs::path& path) {
    diffcore::Checkpoint ck = diffcore::make_checkpoint(model.params, &opt, res.step);
    for (const auto& [k, v] : to_map(cfg)) ck.meta["cfg." + k] = v;
    ck.meta["vocab"] = vtext;
    ck.meta["switch.previous"] = detail::fmt(sw.previous);
    ck.meta["switch.has_previous"] = sw.has_previous ? "1" : "0";
    ck.meta["switch.stalled"] = std::to_string(sw.stalled);
    ck.meta["switch.switched"] = sw.switched ? "1" : "0";
    ck.meta["best_val"] = detail::fmt(res.best_val);
    const fs::path tmp = path.string() + ".tmp";
    diffcore::save_checkpoint(tmp.string(), ck);
    fs::rename(tmp, path);
  };

  std::vector<const Enc*> val_set;
  const std::size_t n_val = cfg.val_limit ? std::min(cfg.val_limit, val.size()) : val.size();
  for (std::size_t i = 0; i < n_val; ++i) val_set.push_back(&val[i]);

  const auto t0 = std::chrono::steady_clock::now();
  while (res.step < cfg.steps) {
    std::vector<const Enc*> batch;
    for (std::size_t i : batch_indices(res.step, cfg.batch_size, train.size(), cfg.seed)) batch.push_back(&train[i]);
    summnet::TrainOptions to;
    to.clip_norm = cfg.clip_norm;
    to.coverage = res.coverage;
    to.coverage_weight = cfg.coverage_weight;
    summnet::StepReport r = summnet::train_step(model, batch, opt, to);
    ++res.step;
    if (r.skipped) {
      ++res.skipped;
      info << "step " << res.step << " skipped: " << r.skip_reason << '\n';
    } else {
      res.last_loss = r.loss;
      log.record(res.step, r.loss, res.coverage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    if (res.step % cfg.val_every == 0 || res.step == cfg.steps) {
      if (!val_set.empty() && res.step % cfg.val_every == 0) {
        summnet::StepReport v = summnet::evaluate_loss(model, val_set, to);
        ++res.validations;
        const bool was = res.coverage;
        res.coverage = sw.observe(v.nll);
        info << "step " << res.step << " val loss " << v.loss << " nll " << v.nll << '\n';
        if (v.loss < res.best_val) {
          res.best_val = v.loss;
          save(best);
        }
        if (res.coverage && !was) {
          info << "step " << res.step << ": nll converged, coverage phase on\n";
          res.best_val = std::numeric_limits<double>::infinity();  // new objective
        }
      }
      save(last);
    }
  }
  // no validation has produced a best model yet (no val set, or steps < val_every)
  if (!fs::exists(best)) fs::copy_file(last, best);
  return res;
}

inline TrainResult cmd_train(const RunConfig& cfg, bool resume, std::ostream& info) {
  const fs::path dir(cfg.data_dir);
  Vocab vocab = Vocab::load((dir / "vocab.tsv").string(), cfg.vocab_size);
  std::vector<Example> train = read_examples((dir / "train.jsonl").string());
  std::vector<Example> val = fs::exists(dir / "val.jsonl") ? read_examples((dir / "val.jsonl").string()) : std::vector<Example>{};
  if (train.empty()) throw DataError((dir / "train.jsonl").string() + ": no training examples");
  TrainResult res;
  with_model(cfg, vocab.size(), [&](auto& model) {
    auto tr = encode_all(model, train, vocab, cfg.limits());
    auto va = encode_all(model, val, vocab, cfg.limits());
    res = train_loop(model, tr, va, cfg, vocab, resume, info);
  });
  return res;
}

// ---------------------------------------------------------------- summarize

inline std::vector<summnet::SummaryRecord> cmd_summarize(const std::string& checkpoint, const std::string& input,
                                                         const RunConfig& runtime) {
  std::vector<Example> exs = read_examples(input);
  std::vector<summnet::SummaryRecord> out(exs.size());
  with_checkpoint_model(checkpoint, runtime, [&](auto& model, const RunConfig& cfg, const Vocab& vocab) {
    auto enc = encode_all(model, exs, vocab, cfg.limits());
    const summnet::BeamOptions bo = runtime.beam();
    evalkit::parallel_for(enc.size(), runtime.jobs, [&](std::size_t i) {
      summnet::Hypothesis h = summnet::beam_decode(model, enc[i], bo);
      out[i] = {exs[i].id, textpipe::render(h.tokens, vocab, enc[i].oov_tokens), h.log_prob};
    });
  });
  return out;
}

// ----------------------------------------------------------- eval, baseline

inline evalkit::EvalReport cmd_eval(const std::string& candidates, const std::string& references, std::size_t jobs) {
  std::vector<summnet::SummaryRecord> cands = read_summaries(candidates);
  std::map<std::string, textpipe::Tokens> refs;
  for (auto& r : read_summaries(references)) {
    if (!refs.emplace(r.id, std::move(r.summary)).second) throw DataError(references + ": duplicate id '" + r.id + "'");
  }
  return evalkit::evaluate_corpus(cands, refs, jobs);
}

inline std::vector<summnet::SummaryRecord> cmd_baseline(const std::string& name, const std::string& input,
                                                        const RunConfig& cfg) {
  evalkit::Baseline b;
  try {
    b = evalkit::parse_baseline(name);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  std::vector<Example> exs = read_examples(input);
  std::vector<summnet::SummaryRecord> out(exs.size());
  const evalkit::ExtractOptions o = cfg.extract();
  evalkit::parallel_for(exs.size(), cfg.jobs, [&](std::size_t i) {
    out[i] = {exs[i].id, evalkit::run_baseline(b, exs[i], o), 0.0};
  });
  return out;
}

// ------------------------------------------------------------------ inspect

inline nlohmann::ordered_json tree_json(const structattn::TreeMarginals& m, const textpipe::Tokens& tokens) {
  const diffcore::Tensor edge = m.edge.value(), root = m.root.value();
  structattn::ParentArray parent = structattn::extract_tree(edge, root);
  structattn::TreeStats st = structattn::tree_stats(parent);
  nlohmann::ordered_json j;
  j["tokens"] = tokens;
  j["parent"] = parent;
  std::size_t r = 0;
  for (std::size_t k = 0; k < parent.size(); ++k)
    if (parent[k] == -1) r = k;
  j["root"] = r;
  j["stats"] = {{"depth", st.depth}, {"max_branching", st.max_branching}, {"root_fanout", st.root_fanout}};
  return j;
}

inline textpipe::Tokens row_tokens(const textpipe::SourceRow& row, const Vocab& v, const std::vector<std::string>& oov) {
  return textpipe::render(row.extended_ids, v, oov);
}

inline nlohmann::ordered_json inspect_one(summnet::FlatModel& model, const textpipe::EncodedFlat& ex, const Vocab& v) {
  if (!model.structural()) throw UsageError("mode " + summnet::to_string(model.config.mode) + " has no tree to inspect");
  diffcore::Tape tape;
  summnet::Memory m = model.encode(tape, ex);
  nlohmann::ordered_json j;
  j["id"] = ex.id;
  j["mode"] = summnet::to_string(model.config.mode);
  j["tree"] = tree_json(*m.tree, row_tokens(ex.source, v, ex.oov_tokens));
  return j;
}

inline nlohmann::ordered_json inspect_one(hiernet::HierModel& model, const textpipe::EncodedThread& th, const Vocab& v) {
  diffcore::Tape tape;
  hiernet::HierEncoderOutput enc = model.encode_thread(tape, th);
  nlohmann::ordered_json j;
  j["id"] = th.id;
  j["mode"] = summnet::to_string(model.config.mode);
  j["answer_trees"] = nlohmann::ordered_json::array();
  for (std::size_t a = 0; a < th.answers.size(); ++a) {
    nlohmann::ordered_json t = tree_json(enc.token_trees[a], row_tokens(th.answers[a], v, th.oov_tokens));
    t["answer"] = th.order[a];
    j["answer_trees"].push_back(t);
  }
  if (enc.answer_tree) {
    textpipe::Tokens labels;
    for (std::size_t a = 0; a < th.answers.size(); ++a) labels.push_back("answer" + std::to_string(th.order[a]));
    j["answer_tree"] = tree_json(*enc.answer_tree, labels);
  }
  return j;
}

// Tree diagnostics for the example with `id`, or the first one.
inline nlohmann::ordered_json cmd_inspect(const std::string& checkpoint, const std::string& input, const std::string& id,
                                          const RunConfig& runtime) {
  std::vector<Example> exs = read_examples(input);
  const Example* pick = nullptr;
  for (const auto& ex : exs)
    if (id.empty() || ex.id == id) {
      pick = &ex;
      break;
    }
  if (!pick) throw DataError(id.empty() ? input + ": no examples" : input + ": no example with id '" + id + "'");
  nlohmann::ordered_json out;
  with_checkpoint_model(checkpoint, runtime, [&](auto& model, const RunConfig& cfg, const Vocab& vocab) {
    out = inspect_one(model, encode_for(model, *pick, vocab, cfg.limits()), vocab);
  });
  return out;
}

}  // namespace structsum::cli
