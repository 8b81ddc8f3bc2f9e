#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "structsum/error.hpp"
#include "structsum/textpipe/tokenize.hpp"

namespace structsum::textpipe {

struct Answer {
  Tokens tokens;
  long long upvotes = 0;
};

struct Example {
  std::string id;
  std::variant<Tokens, std::vector<Answer>> source;  // flat document or answer list
  Tokens question;
  Tokens summary;
  std::string split;  // "train" / "val" / "test", empty when unassigned

  bool is_thread() const { return std::holds_alternative<std::vector<Answer>>(source); }
  const Tokens& document() const { return std::get<Tokens>(source); }
  const std::vector<Answer>& answers() const { return std::get<std::vector<Answer>>(source); }

  bool has_content() const {
    if (!is_thread()) return !document().empty();
    for (const auto& a : answers())
      if (!a.tokens.empty()) return true;
    return false;
  }
};

// Parses one JSON-lines record:
//   flat:   {"id", "document", "summary"}
//   thread: {"id", "question", "answers": [{"text", "upvotes"}], "summary"}
// An optional "split" field pins the example to a split.
inline Example parse_example(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  Example ex;
  if (!j.contains("id") || !(j["id"].is_string() || j["id"].is_number())) throw DataError("missing \"id\"");
  ex.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  if (j.contains("answers")) {
    if (!j["answers"].is_array()) throw DataError("\"answers\" is not an array");
    std::vector<Answer> answers;
    for (const auto& a : j["answers"]) {
      if (!a.is_object() || !a.contains("text") || !a["text"].is_string()) throw DataError("answer lacks \"text\"");
      Answer ans;
      ans.tokens = tokenize(a["text"].get<std::string>());
      if (a.contains("upvotes")) {
        if (!a["upvotes"].is_number_integer()) throw DataError("\"upvotes\" is not an integer");
        ans.upvotes = a["upvotes"].get<long long>();
      }
      answers.push_back(std::move(ans));
    }
    ex.source = std::move(answers);
    if (j.contains("question") && j["question"].is_string()) ex.question = tokenize(j["question"].get<std::string>());
  } else if (j.contains("document") && j["document"].is_string()) {
    ex.source = tokenize(j["document"].get<std::string>());
  } else {
    throw DataError("record has neither \"document\" nor \"answers\"");
  }
  if (!ex.has_content()) throw DataError("record " + ex.id + " has no source tokens");
  if (j.contains("summary")) {
    if (!j["summary"].is_string()) throw DataError("\"summary\" is not a string");
    ex.summary = tokenize(j["summary"].get<std::string>());
  }
  if (j.contains("split") && j["split"].is_string()) ex.split = j["split"].get<std::string>();
  return ex;
}

inline Example parse_example_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("invalid JSON: ") + e.what());
  }
  return parse_example(j);
}

struct LineError {
  std::size_t line;
  std::string message;
};

struct LoadedCorpus {
  std::vector<Example> examples;
  std::vector<LineError> errors;
};

// Reads a JSON-lines file. Blank lines are skipped; malformed lines are
// collected with their 1-based line numbers instead of aborting the read.
inline LoadedCorpus load_jsonl(std::istream& is) {
  LoadedCorpus out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.examples.push_back(parse_example_line(line));
    } catch (const DataError& e) {
      out.errors.push_back({lineno, e.what()});
    }
  }
  return out;
}

inline LoadedCorpus load_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  return load_jsonl(is);
}

inline nlohmann::json to_json(const Example& ex) {
  nlohmann::json j;
  j["id"] = ex.id;
  if (ex.is_thread()) {
    j["question"] = join(ex.question);
    j["answers"] = nlohmann::json::array();
    for (const auto& a : ex.answers()) j["answers"].push_back({{"text", join(a.tokens)}, {"upvotes", a.upvotes}});
  } else {
    j["document"] = join(ex.document());
  }
  j["summary"] = join(ex.summary);
  if (!ex.split.empty()) j["split"] = ex.split;
  return j;
}

}  // namespace structsum::textpipe
