#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace structsum::textpipe {

using Tokens = std::vector<std::string>;

// Lowercases ASCII letters, splits every ASCII punctuation character into
// its own token and splits on whitespace. Non-ASCII bytes pass through.
inline Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 128 && std::isspace(c)) {
      flush();
    } else if (c < 128 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

inline std::string join(const Tokens& toks, std::string_view sep = " ") {
  std::string s;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) s += sep;
    s += toks[i];
  }
  return s;
}

// Splits a token stream into sentences after '.', '!' or '?'.
inline std::vector<Tokens> split_sentences(const Tokens& toks) {
  std::vector<Tokens> out;
  Tokens cur;
  for (const auto& t : toks) {
    cur.push_back(t);
    if (t == "." || t == "!" || t == "?") out.push_back(std::move(cur)), cur.clear();
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace structsum::textpipe
