#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "structsum/error.hpp"
#include "structsum/textpipe/tokenize.hpp"

namespace structsum::textpipe {

inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kUnk = 1;
inline constexpr std::size_t kStart = 2;
inline constexpr std::size_t kStop = 3;
inline constexpr std::size_t kNumSpecials = 4;

class Vocab {
 public:
  static constexpr const char* kSpecialTokens[kNumSpecials] = {"<pad>", "<unk>", "<s>", "</s>"};

  Vocab() {
    for (const char* s : kSpecialTokens) append(s, 0);
  }

  // Corpus tokens in rank order; specials are added implicitly.
  static Vocab from_ranked(const std::vector<std::pair<std::string, std::size_t>>& ranked) {
    Vocab v;
    for (const auto& [tok, count] : ranked) {
      if (v.id_of_.count(tok)) throw DataError("duplicate vocabulary token: " + tok);
      v.append(tok, count);
    }
    return v;
  }

  std::size_t size() const { return token_of_.size(); }
  std::size_t id(const std::string& tok) const {
    auto it = id_of_.find(tok);
    return it == id_of_.end() ? kUnk : it->second;
  }
  bool contains(const std::string& tok) const { return id_of_.count(tok) > 0; }
  const std::string& token(std::size_t id) const { return token_of_.at(id); }
  std::size_t count(std::size_t id) const { return counts_.at(id); }

  // "token<TAB>count" per corpus token, in id order (frequency-sorted).
  void write(std::ostream& os) const {
    for (std::size_t i = kNumSpecials; i < size(); ++i) os << token_of_[i] << '\t' << counts_[i] << '\n';
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write vocabulary " + path);
    write(os);
  }

  // Reads at most max_size corpus tokens.
  static Vocab read(std::istream& is, std::size_t max_size = static_cast<std::size_t>(-1),
                    const std::string& origin = "vocabulary") {
    std::vector<std::pair<std::string, std::size_t>> ranked;
    std::string line;
    std::size_t lineno = 0;
    while (ranked.size() < max_size && std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw DataError(origin + ":" + std::to_string(lineno) + ": missing tab");
      try {
        ranked.emplace_back(line.substr(0, tab), std::stoull(line.substr(tab + 1)));
      } catch (const std::logic_error&) {
        throw DataError(origin + ":" + std::to_string(lineno) + ": bad count");
      }
    }
    return from_ranked(ranked);
  }

  static Vocab load(const std::string& path, std::size_t max_size = static_cast<std::size_t>(-1)) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open vocabulary " + path);
    return read(is, max_size, path);
  }

 private:
  void append(const std::string& tok, std::size_t count) {
    id_of_[tok] = token_of_.size();
    token_of_.push_back(tok);
    counts_.push_back(count);
  }

  std::unordered_map<std::string, std::size_t> id_of_;
  std::vector<std::string> token_of_;
  std::vector<std::size_t> counts_;
};

// Keeps the max_size most frequent corpus tokens; ties broken lexicographically.
// max_size counts corpus tokens only, the four specials come on top.
inline Vocab build_vocab(const std::vector<Tokens>& corpus, std::size_t max_size = 50000) {
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpus)
    for (const auto& t : doc) ++counts[t];
  for (const char* s : Vocab::kSpecialTokens) counts.erase(s);
  if (counts.empty()) throw EmptyCorpus("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_size) ranked.resize(max_size);
  return Vocab::from_ranked(ranked);
}

}  // namespace structsum::textpipe
