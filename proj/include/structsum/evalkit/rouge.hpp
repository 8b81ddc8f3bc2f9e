#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "structsum/textpipe/tokenize.hpp"

// ROUGE-N and ROUGE-L F1, computed natively on token sequences. No
// stemming, no stopword removal.
namespace structsum::evalkit {

using textpipe::Tokens;

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline RougeScore make_score(double hits, std::size_t cand_total, std::size_t ref_total) {
  RougeScore s;
  if (ref_total == 0) return s;
  s.precision = cand_total ? hits / static_cast<double>(cand_total) : 0.0;
  s.recall = hits / static_cast<double>(ref_total);
  const double pr = s.precision + s.recall;
  s.f1 = pr > 0 ? 2.0 * s.precision * s.recall / pr : 0.0;
  return s;
}

namespace detail {
inline std::map<std::vector<std::string>, std::size_t> ngram_counts(const Tokens& t, std::size_t n, std::size_t& total) {
  std::map<std::vector<std::string>, std::size_t> counts;
  total = 0;
  if (n == 0) return counts;
  for (std::size_t i = 0; i + n <= t.size(); ++i, ++total) ++counts[Tokens(t.begin() + i, t.begin() + i + n)];
  return counts;
}
}  // namespace detail

// Clipped n-gram overlap. An empty reference (no n-grams) scores zero.
inline RougeScore rouge_n(const Tokens& candidate, const Tokens& reference, std::size_t n) {
  std::size_t nc = 0, nr = 0;
  auto cand = detail::ngram_counts(candidate, n, nc);
  auto ref = detail::ngram_counts(reference, n, nr);
  std::size_t hits = 0;
  for (const auto& [gram, c] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) hits += std::min(c, it->second);
  }
  return make_score(static_cast<double>(hits), nc, nr);
}

// Longest common subsequence length with two rolling rows.
inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline RougeScore rouge_l(const Tokens& candidate, const Tokens& reference) {
  return make_score(static_cast<double>(lcs_length(candidate, reference)), candidate.size(), reference.size());
}

struct RougeF1 {
  double r1 = 0.0, r2 = 0.0, rl = 0.0;
};

inline RougeF1 rouge_f1(const Tokens& candidate, const Tokens& reference) {
  return {rouge_n(candidate, reference, 1).f1, rouge_n(candidate, reference, 2).f1, rouge_l(candidate, reference).f1};
}

}  // namespace structsum::evalkit
