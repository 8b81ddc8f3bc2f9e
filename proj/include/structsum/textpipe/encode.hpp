#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "structsum/textpipe/dataset.hpp"
#include "structsum/textpipe/vocab.hpp"

namespace structsum::textpipe {

// Per-example source OOVs. The k-th distinct OOV gets extended id vocab_size + k.
class OovTable {
 public:
  explicit OovTable(std::size_t vocab_size = 0) : vocab_size_(vocab_size) {}

  std::size_t extend(const std::string& tok) {
    auto it = index_.find(tok);
    if (it != index_.end()) return vocab_size_ + it->second;
    index_[tok] = tokens_.size();
    tokens_.push_back(tok);
    return vocab_size_ + tokens_.size() - 1;
  }

  // Extended id if `tok` is a known OOV, UNK otherwise.
  std::size_t lookup(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? kUnk : vocab_size_ + it->second;
  }

  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t extended_size() const { return vocab_size_ + tokens_.size(); }

 private:
  std::size_t vocab_size_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// One encoded source sequence (a TokenBatch row before padding).
struct SourceRow {
  std::vector<std::size_t> ids;           // OOVs mapped to UNK
  std::vector<std::size_t> extended_ids;  // OOVs mapped into the extended vocabulary
  std::size_t length() const { return ids.size(); }
};

// Teacher-forcing sequences for the decoder.
struct TargetSeq {
  std::vector<std::size_t> inputs;   // START, w_1 .. w_{T-1}, in-vocab ids
  std::vector<std::size_t> targets;  // w_1 .. w_T (+ STOP unless truncated), extended ids
  std::size_t length() const { return targets.size(); }
};

struct EncodedFlat {
  std::string id;
  SourceRow source;
  std::vector<std::string> oov_tokens;
  TargetSeq target;
  Tokens reference;  // truncated reference summary
  std::size_t vocab_size = 0;
  std::size_t extended_size() const { return vocab_size + oov_tokens.size(); }
};

struct EncodedThread {
  std::string id;
  std::vector<SourceRow> answers;       // in decreasing-upvote order
  std::vector<std::size_t> order;       // original index of each kept answer
  std::vector<std::string> oov_tokens;  // shared by all answers
  TargetSeq target;
  Tokens reference;
  std::size_t vocab_size = 0;
  std::size_t extended_size() const { return vocab_size + oov_tokens.size(); }
};

struct EncodeLimits {
  std::size_t max_source_tokens = 400;
  std::size_t max_answers = 12;
  std::size_t max_answer_tokens = 65;
  std::size_t max_summary_tokens = 100;
  std::size_t max_decoder_steps = 100;
  bool include_question = false;
};

inline SourceRow encode_tokens(const Tokens& toks, const Vocab& vocab, OovTable& oov) {
  SourceRow row;
  for (const auto& t : toks) {
    const std::size_t id = vocab.id(t);
    row.ids.push_back(id);
    row.extended_ids.push_back(id == kUnk && t != Vocab::kSpecialTokens[kUnk] ? oov.extend(t) : id);
  }
  return row;
}

inline TargetSeq encode_target(const Tokens& summary, const Vocab& vocab, const OovTable& oov, std::size_t max_steps) {
  TargetSeq seq;
  seq.inputs.push_back(kStart);
  for (const auto& t : summary) {
    const std::size_t id = vocab.id(t);
    seq.inputs.push_back(id);
    seq.targets.push_back(id == kUnk ? oov.lookup(t) : id);
  }
  seq.targets.push_back(kStop);
  // Past the step budget the sequence is cut and loses its STOP.
  if (seq.targets.size() > max_steps) {
    seq.inputs.resize(max_steps);
    seq.targets.resize(max_steps);
  }
  return seq;
}

// Answer order by decreasing upvotes, stable on ties.
inline std::vector<std::size_t> upvote_order(const std::vector<Answer>& answers) {
  std::vector<std::size_t> order(answers.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return answers[a].upvotes > answers[b].upvotes; });
  return order;
}

// Source text of an example as one sequence: the document, or the answers
// concatenated in upvote order (optionally after the question).
inline Tokens flat_source(const Example& ex, bool include_question = false) {
  if (!ex.is_thread()) return ex.document();
  Tokens out;
  if (include_question) out = ex.question;
  for (std::size_t i : upvote_order(ex.answers())) {
    const auto& a = ex.answers()[i].tokens;
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

inline Tokens truncate(const Tokens& toks, std::size_t n) {
  return Tokens(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(std::min(n, toks.size())));
}

inline EncodedFlat encode_flat(const Example& ex, const Vocab& vocab, const EncodeLimits& lim = {}) {
  EncodedFlat out;
  out.id = ex.id;
  out.vocab_size = vocab.size();
  OovTable oov(vocab.size());
  out.source = encode_tokens(truncate(flat_source(ex, lim.include_question), lim.max_source_tokens), vocab, oov);
  out.oov_tokens = oov.tokens();
  out.reference = truncate(ex.summary, lim.max_summary_tokens);
  out.target = encode_target(out.reference, vocab, oov, lim.max_decoder_steps);
  return out;
}

inline EncodedThread encode_thread(const Example& ex, const Vocab& vocab, const EncodeLimits& lim = {}) {
  if (!ex.is_thread() || ex.answers().empty()) throw NoAnswers("example " + ex.id + " has no answers");
  EncodedThread out;
  out.id = ex.id;
  out.vocab_size = vocab.size();
  OovTable oov(vocab.size());
  if (lim.include_question && !ex.question.empty()) {
    out.answers.push_back(encode_tokens(truncate(ex.question, lim.max_answer_tokens), vocab, oov));
    out.order.push_back(static_cast<std::size_t>(-1));
  }
  for (std::size_t i : upvote_order(ex.answers())) {
    if (out.answers.size() >= lim.max_answers) break;
    const auto& toks = ex.answers()[i].tokens;
    if (toks.empty()) continue;
    out.answers.push_back(encode_tokens(truncate(toks, lim.max_answer_tokens), vocab, oov));
    out.order.push_back(i);
  }
  if (out.answers.empty()) throw NoAnswers("example " + ex.id + " has only empty answers");
  out.oov_tokens = oov.tokens();
  out.reference = truncate(ex.summary, lim.max_summary_tokens);
  out.target = encode_target(out.reference, vocab, oov, lim.max_decoder_steps);
  return out;
}

// All answers of a thread as one row, in thread order.
inline SourceRow flatten(const EncodedThread& th) {
  SourceRow row;
  for (const auto& a : th.answers) {
    row.ids.insert(row.ids.end(), a.ids.begin(), a.ids.end());
    row.extended_ids.insert(row.extended_ids.end(), a.extended_ids.begin(), a.extended_ids.end());
  }
  return row;
}

// Renders an extended id back to its token.
inline std::string render_token(std::size_t id, const Vocab& vocab, const std::vector<std::string>& oov_tokens) {
  if (id < vocab.size()) return vocab.token(id);
  const std::size_t k = id - vocab.size();
  if (k >= oov_tokens.size()) throw IdOutOfRange("extended id " + std::to_string(id) + " outside example vocabulary");
  return oov_tokens[k];
}

inline Tokens render(const std::vector<std::size_t>& ids, const Vocab& vocab, const std::vector<std::string>& oov) {
  Tokens out;
  for (std::size_t id : ids) out.push_back(render_token(id, vocab, oov));
  return out;
}

// Padded rectangular batch of flat rows.
struct TokenBatch {
  std::size_t max_len = 0;
  std::vector<std::vector<std::size_t>> ids;
  std::vector<std::vector<std::size_t>> extended_ids;
  std::vector<std::vector<std::string>> oov_tokens;
  std::vector<std::size_t> lengths;
  std::vector<std::vector<bool>> mask;  // true on real tokens
};

inline TokenBatch make_batch(const std::vector<EncodedFlat>& rows) {
  TokenBatch b;
  for (const auto& r : rows) b.max_len = std::max(b.max_len, r.source.length());
  for (const auto& r : rows) {
    auto ids = r.source.ids, ext = r.source.extended_ids;
    std::vector<bool> mask(b.max_len, false);
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(ids.size()), true);
    ids.resize(b.max_len, kPad);
    ext.resize(b.max_len, kPad);
    b.ids.push_back(std::move(ids));
    b.extended_ids.push_back(std::move(ext));
    b.oov_tokens.push_back(r.oov_tokens);
    b.lengths.push_back(r.source.length());
    b.mask.push_back(std::move(mask));
  }
  return b;
}

// Per-example answer blocks; every block of one example shares its OOV table.
struct ThreadBatch {
  std::vector<std::vector<SourceRow>> answers;
  std::vector<std::vector<std::string>> oov_tokens;
  std::vector<std::size_t> answer_counts;
  std::vector<std::vector<std::size_t>> order;
};

inline ThreadBatch make_thread_batch(const std::vector<EncodedThread>& threads) {
  ThreadBatch b;
  for (const auto& t : threads) {
    b.answers.push_back(t.answers);
    b.oov_tokens.push_back(t.oov_tokens);
    b.answer_counts.push_back(t.answers.size());
    b.order.push_back(t.order);
  }
  return b;
}

}  // namespace structsum::textpipe
