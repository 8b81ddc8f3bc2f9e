#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "structsum/error.hpp"
#include "structsum/textpipe/dataset.hpp"
#include "structsum/textpipe/encode.hpp"

// Extractive baselines: Lead, LexRank, TextRank and KL-Sum. Sentences are
// token vectors; summaries are whole source sentences kept in source order.
namespace structsum::evalkit {

using textpipe::Tokens;

struct ExtractOptions {
  std::size_t budget = 100;   // tokens
  double threshold = 0.1;     // LexRank cosine cutoff
  double damping = 0.85;
  double tolerance = 1e-6;    // L1 change between power iterations
  std::size_t max_iterations = 100;
};

struct Extract {
  std::vector<std::size_t> picked;  // ascending sentence indices
  Tokens tokens;
};

// Similarity and KL only look at tokens carrying a letter or digit, so shared
// punctuation does not link sentences. Budgets count every token.
inline bool is_content(const std::string& t) {
  return std::any_of(t.begin(), t.end(), [](unsigned char c) { return std::isalnum(c) || c >= 128; });
}

inline Tokens lead(const Tokens& source, std::size_t budget = 100) {
  return Tokens(source.begin(), source.begin() + static_cast<std::ptrdiff_t>(std::min(budget, source.size())));
}

// Threads read as answers in decreasing-upvote order.
inline Tokens lead3(const textpipe::Example& ex, std::size_t budget = 100) {
  return lead(textpipe::flat_source(ex), budget);
}

// Sentences of a document, or of each answer in upvote order. Answers are
// split independently so no sentence spans two answers.
inline std::vector<Tokens> example_sentences(const textpipe::Example& ex) {
  if (!ex.is_thread()) return textpipe::split_sentences(ex.document());
  std::vector<Tokens> out;
  for (std::size_t i : textpipe::upvote_order(ex.answers())) {
    for (Tokens& s : textpipe::split_sentences(ex.answers()[i].tokens)) out.push_back(std::move(s));
  }
  return out;
}

using Graph = std::vector<std::vector<double>>;

// Binary graph: edge when the TF-IDF cosine exceeds the threshold. Inverse
// document frequency treats sentences as documents, idf = 1 + ln(N/df).
inline Graph tfidf_graph(const std::vector<Tokens>& sentences, double threshold) {
  const std::size_t N = sentences.size();
  std::map<std::string, double> df;
  std::vector<std::map<std::string, double>> vec(N);
  for (std::size_t i = 0; i < N; ++i) {
    for (const auto& t : sentences[i])
      if (is_content(t)) vec[i][t] += 1.0;
    for (const auto& kv : vec[i]) df[kv.first] += 1.0;
  }
  std::vector<double> norm(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    for (auto& [w, x] : vec[i]) {
      x *= 1.0 + std::log(static_cast<double>(N) / df[w]);
      norm[i] += x * x;
    }
    norm[i] = std::sqrt(norm[i]);
  }
  Graph g(N, std::vector<double>(N, 0.0));
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = i + 1; j < N; ++j) {
      if (norm[i] == 0 || norm[j] == 0) continue;
      double dot = 0;
      for (const auto& [w, x] : vec[i]) {
        auto it = vec[j].find(w);
        if (it != vec[j].end()) dot += x * it->second;
      }
      g[i][j] = g[j][i] = dot / (norm[i] * norm[j]) > threshold ? 1.0 : 0.0;
    }
  }
  return g;
}

// Weighted graph: shared distinct words / (ln|s_i| + ln|s_j|), zero when the
// denominator is not positive.
inline Graph overlap_graph(const std::vector<Tokens>& sentences) {
  const std::size_t N = sentences.size();
  std::vector<std::set<std::string>> words(N);
  std::vector<double> len(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    for (const auto& t : sentences[i])
      if (is_content(t)) words[i].insert(t), len[i] += 1.0;
  }
  Graph g(N, std::vector<double>(N, 0.0));
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = i + 1; j < N; ++j) {
      if (len[i] == 0 || len[j] == 0) continue;
      const double denom = std::log(len[i]) + std::log(len[j]);
      if (denom <= 0) continue;
      double shared = 0;
      for (const auto& w : words[i]) shared += static_cast<double>(words[j].count(w));
      g[i][j] = g[j][i] = shared / denom;
    }
  }
  return g;
}

// Damped random walk, p ← (1-d)/N + d Mᵀ p with rows of M normalized and
// empty rows spread uniformly. Starts uniform.
inline std::vector<double> stationary(const Graph& g, const ExtractOptions& o) {
  const std::size_t N = g.size();
  if (N == 0) return {};
  std::vector<double> rowsum(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) rowsum[i] = std::accumulate(g[i].begin(), g[i].end(), 0.0);
  const double n = static_cast<double>(N);
  std::vector<double> p(N, 1.0 / n), next(N);
  for (std::size_t it = 0; it < o.max_iterations; ++it) {
    double dangling = 0;
    for (std::size_t i = 0; i < N; ++i)
      if (rowsum[i] == 0) dangling += p[i];
    for (std::size_t j = 0; j < N; ++j) {
      double in = dangling / n;
      for (std::size_t i = 0; i < N; ++i)
        if (rowsum[i] != 0 && g[i][j] != 0) in += p[i] * g[i][j] / rowsum[i];
      next[j] = (1.0 - o.damping) / n + o.damping * in;
    }
    double change = 0;
    for (std::size_t j = 0; j < N; ++j) change += std::abs(next[j] - p[j]);
    std::swap(p, next);
    if (change < o.tolerance) break;
  }
  return p;
}

inline std::vector<double> lexrank_scores(const std::vector<Tokens>& sentences, const ExtractOptions& o = {}) {
  return stationary(tfidf_graph(sentences, o.threshold), o);
}

inline std::vector<double> textrank_scores(const std::vector<Tokens>& sentences, const ExtractOptions& o = {}) {
  return stationary(overlap_graph(sentences), o);
}

inline Extract assemble(const std::vector<Tokens>& sentences, std::vector<std::size_t> picked) {
  std::sort(picked.begin(), picked.end());
  Extract e;
  for (std::size_t i : picked) e.tokens.insert(e.tokens.end(), sentences[i].begin(), sentences[i].end());
  e.picked = std::move(picked);
  return e;
}

// Highest scores first, earlier sentence on ties (scores compared on a 1e-9
// grid so rounding noise cannot reorder equal scores). Sentences that would
// overflow the budget are skipped.
inline Extract select_by_score(const std::vector<Tokens>& sentences, const std::vector<double>& scores,
                               std::size_t budget) {
  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto key = [&](std::size_t i) { return std::llround(scores[i] * 1e9); };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
  std::vector<std::size_t> picked;
  std::size_t used = 0;
  for (std::size_t i : order) {
    if (used + sentences[i].size() > budget) continue;
    used += sentences[i].size();
    picked.push_back(i);
  }
  return assemble(sentences, std::move(picked));
}

inline Extract lexrank(const std::vector<Tokens>& sentences, const ExtractOptions& o = {}) {
  return select_by_score(sentences, lexrank_scores(sentences, o), o.budget);
}

inline Extract textrank(const std::vector<Tokens>& sentences, const ExtractOptions& o = {}) {
  return select_by_score(sentences, textrank_scores(sentences, o), o.budget);
}

// KL(source unigrams ‖ summary unigrams) with add-one smoothing over the
// source vocabulary.
inline double kl_divergence(const std::vector<Tokens>& sentences, const std::vector<std::size_t>& picked) {
  std::map<std::string, double> src, sum;
  double ns = 0, nq = 0;
  for (const auto& s : sentences)
    for (const auto& t : s)
      if (is_content(t)) src[t] += 1, ns += 1;
  for (std::size_t i : picked)
    for (const auto& t : sentences[i])
      if (is_content(t)) sum[t] += 1, nq += 1;
  const double v = static_cast<double>(src.size());
  double kl = 0;
  for (const auto& [w, c] : src) {
    const double p = c / ns;
    auto it = sum.find(w);
    const double q = ((it == sum.end() ? 0.0 : it->second) + 1.0) / (nq + v);
    kl += p * std::log(p / q);
  }
  return kl;
}

// Greedy: add the sentence giving the lowest divergence while one still fits
// and the divergence does not grow. Ties go to the earlier sentence.
inline Extract kl_summ(const std::vector<Tokens>& sentences, const ExtractOptions& o = {}) {
  std::vector<std::size_t> picked;
  std::vector<bool> used(sentences.size(), false);
  std::size_t words = 0;
  double current = std::numeric_limits<double>::infinity();
  for (;;) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = sentences.size();
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      if (used[i] || words + sentences[i].size() > o.budget) continue;
      picked.push_back(i);
      const double kl = kl_divergence(sentences, picked);
      picked.pop_back();
      if (kl < best - 1e-12) best = kl, arg = i;
    }
    if (arg == sentences.size() || best > current + 1e-12) break;
    used[arg] = true;
    words += sentences[arg].size();
    picked.push_back(arg);
    current = best;
  }
  return assemble(sentences, std::move(picked));
}

enum class Baseline { Lead3, LexRank, TextRank, KlSumm };

inline Baseline parse_baseline(const std::string& s) {
  if (s == "lead3") return Baseline::Lead3;
  if (s == "lexrank") return Baseline::LexRank;
  if (s == "textrank") return Baseline::TextRank;
  if (s == "kl-summ" || s == "klsumm") return Baseline::KlSumm;
  throw Error("unknown baseline '" + s + "' (lead3, lexrank, textrank, kl-summ)");
}

inline Tokens run_baseline(Baseline b, const textpipe::Example& ex, const ExtractOptions& o = {}) {
  switch (b) {
    case Baseline::Lead3: return lead3(ex, o.budget);
    case Baseline::LexRank: return lexrank(example_sentences(ex), o).tokens;
    case Baseline::TextRank: return textrank(example_sentences(ex), o).tokens;
    case Baseline::KlSumm: return kl_summ(example_sentences(ex), o).tokens;
  }
  throw Error("unknown baseline");
}

}  // namespace structsum::evalkit
