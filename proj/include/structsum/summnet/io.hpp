#pragma once

#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "structsum/textpipe/tokenize.hpp"

namespace structsum::summnet {

struct SummaryRecord {
  std::string id;
  textpipe::Tokens summary;
  double log_prob = 0.0;
};

inline std::string to_jsonl(const SummaryRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["summary"] = textpipe::join(r.summary);
  j["log_prob"] = r.log_prob;
  return j.dump();
}

inline SummaryRecord parse_summary_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad summary line: ") + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j.contains("summary") || !j["summary"].is_string()) {
    throw DataError("summary line needs string fields \"id\" and \"summary\"");
  }
  SummaryRecord r;
  r.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  r.summary = textpipe::tokenize(j["summary"].get<std::string>());
  if (j.contains("log_prob") && j["log_prob"].is_number()) r.log_prob = j["log_prob"].get<double>();
  return r;
}

// step,loss,coverage,wall_seconds
class TrainLog {
 public:
  explicit TrainLog(std::ostream& os, bool header = true) : os_(os) {
    if (header) os_ << "step,loss,coverage,wall_seconds\n";
  }
  void record(std::size_t step, double loss, bool coverage_phase, double wall_seconds) {
    std::ostringstream line;
    line << step << ',' << std::setprecision(10) << loss << ',' << (coverage_phase ? 1 : 0) << ','
         << std::setprecision(6) << wall_seconds << '\n';
    os_ << line.str();
    os_.flush();
  }

 private:
  std::ostream& os_;
};

}  // namespace structsum::summnet
