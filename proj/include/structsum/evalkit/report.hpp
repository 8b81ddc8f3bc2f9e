#pragma once

#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "structsum/error.hpp"
#include "structsum/evalkit/parallel.hpp"
#include "structsum/evalkit/rouge.hpp"
#include "structsum/summnet/io.hpp"

namespace structsum::evalkit {

struct EvalRow {
  std::string id;
  RougeF1 f1;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // candidate order
  RougeF1 mean;
};

// Scores every candidate against the reference with the same id. The mean is
// summed in row order, so it does not depend on `jobs`.
inline EvalReport evaluate_corpus(const std::vector<summnet::SummaryRecord>& candidates,
                                  const std::map<std::string, Tokens>& references, std::size_t jobs = 1) {
  for (const auto& c : candidates) {
    if (!references.count(c.id)) throw DataError("no reference for id '" + c.id + "'");
  }
  EvalReport rep;
  rep.rows.resize(candidates.size());
  parallel_for(candidates.size(), jobs, [&](std::size_t i) {
    rep.rows[i] = {candidates[i].id, rouge_f1(candidates[i].summary, references.at(candidates[i].id))};
  });
  for (const auto& r : rep.rows) {
    rep.mean.r1 += r.f1.r1;
    rep.mean.r2 += r.f1.r2;
    rep.mean.rl += r.f1.rl;
  }
  if (!rep.rows.empty()) {
    const double n = static_cast<double>(rep.rows.size());
    rep.mean.r1 /= n;
    rep.mean.r2 /= n;
    rep.mean.rl /= n;
  }
  return rep;
}

// id,r1_f,r2_f,rl_f with six decimals, then a "mean" row.
inline void write_csv(std::ostream& os, const EvalReport& rep) {
  auto line = [&](const std::string& id, const RougeF1& f) {
    char buf[96];
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f\n", f.r1, f.r2, f.rl);
    os << id << buf;
  };
  os << "id,r1_f,r2_f,rl_f\n";
  for (const auto& r : rep.rows) line(r.id, r.f1);
  line("mean", rep.mean);
}

}  // namespace structsum::evalkit
