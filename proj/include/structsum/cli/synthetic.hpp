#pragma once

#include <random>
#include <string>
#include <vector>

#include "structsum/diffcore/tape.hpp"
#include "structsum/textpipe/encode.hpp"

// Hand-built encoded examples for self checks and end-to-end probes. Ids at
// or above `vocab` are OOVs living in the example's extended vocabulary.
namespace structsum::synthetic {

inline textpipe::SourceRow row(const std::vector<std::size_t>& ext, std::size_t vocab) {
  textpipe::SourceRow r;
  for (std::size_t id : ext) {
    r.ids.push_back(id < vocab ? id : textpipe::kUnk);
    r.extended_ids.push_back(id);
  }
  return r;
}

// inputs START, w_1 .. w_T; targets w_1 .. w_T, STOP
inline textpipe::TargetSeq target(const std::vector<std::size_t>& summary, std::size_t vocab) {
  textpipe::TargetSeq t;
  t.inputs.push_back(textpipe::kStart);
  for (std::size_t id : summary) {
    t.inputs.push_back(id < vocab ? id : textpipe::kUnk);
    t.targets.push_back(id);
  }
  t.targets.push_back(textpipe::kStop);
  return t;
}

inline std::vector<std::string> oov_names(std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t k = 0; k < n; ++k) v.push_back("oov" + std::to_string(k));
  return v;
}

inline textpipe::EncodedFlat flat(const std::vector<std::size_t>& source, const std::vector<std::size_t>& summary,
                                  std::size_t vocab, std::size_t n_oov = 0, std::string id = "ex") {
  textpipe::EncodedFlat ex;
  ex.id = std::move(id);
  ex.vocab_size = vocab;
  ex.oov_tokens = oov_names(n_oov);
  ex.source = row(source, vocab);
  ex.target = target(summary, vocab);
  return ex;
}

inline textpipe::EncodedThread thread(const std::vector<std::vector<std::size_t>>& answers,
                                      const std::vector<std::size_t>& summary, std::size_t vocab,
                                      std::size_t n_oov = 0, std::string id = "t") {
  textpipe::EncodedThread th;
  th.id = std::move(id);
  th.vocab_size = vocab;
  th.oov_tokens = oov_names(n_oov);
  for (std::size_t i = 0; i < answers.size(); ++i) {
    th.answers.push_back(row(answers[i], vocab));
    th.order.push_back(i);
  }
  th.target = target(summary, vocab);
  return th;
}

// Every OOV id occurs at least once in the source, so n_oov <= len.
inline textpipe::EncodedFlat random_flat(std::mt19937_64& rng, std::size_t vocab, std::size_t len,
                                         std::size_t summary_len, std::size_t n_oov) {
  if (n_oov > len) throw Error("random_flat: more OOVs than source tokens");
  std::uniform_int_distribution<std::size_t> tok(textpipe::kNumSpecials, vocab + n_oov - 1);
  std::vector<std::size_t> src(len), sum(summary_len);
  for (auto& t : src) t = tok(rng);
  for (std::size_t k = 0; k < n_oov; ++k) src[k] = vocab + k;
  for (auto& t : sum) t = tok(rng);
  return flat(src, sum, vocab, n_oov);
}

inline textpipe::EncodedThread random_thread(std::mt19937_64& rng, std::size_t vocab, std::size_t n_answers,
                                             std::size_t max_len, std::size_t summary_len, std::size_t n_oov) {
  std::uniform_int_distribution<std::size_t> tok(textpipe::kNumSpecials, vocab + n_oov - 1), len(1, max_len);
  std::vector<std::vector<std::size_t>> answers(n_answers);
  for (auto& a : answers) {
    a.resize(len(rng));
    for (auto& t : a) t = tok(rng);
  }
  for (std::size_t k = 0; k < n_oov; ++k) answers[k % n_answers].push_back(vocab + k);
  std::vector<std::size_t> sum(summary_len);
  for (auto& t : sum) t = tok(rng);
  return thread(answers, sum, vocab, n_oov);
}

inline void randomize(diffcore::ParamStore& ps, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (double& v : ps[i].value.values()) v = d(rng);
}

inline diffcore::Tensor random_tensor(diffcore::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  diffcore::Tensor t(std::move(shape));
  for (double& v : t.values()) v = d(rng);
  return t;
}

}  // namespace structsum::synthetic
