#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "structsum/error.hpp"
#include "structsum/evalkit/extractive.hpp"
#include "structsum/summnet/beam.hpp"
#include "structsum/summnet/config.hpp"
#include "structsum/summnet/train.hpp"
#include "structsum/textpipe/encode.hpp"

namespace structsum::cli {

// Bad flags, config keys or values: exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Checkpoint written under a different configuration than the resumed run.
class ResumeMismatch : public UsageError {
 public:
  using UsageError::UsageError;
};

// Every run setting. Defaults follow the common pointer-generator settings;
// the rest are desk-scale choices.
struct RunConfig {
  std::string mode = "pg-sa";
  std::string data_dir = "data";
  std::string checkpoint_dir = "checkpoints";

  std::size_t vocab_size = 50000;  // corpus tokens, specials on top
  std::size_t emb_dim = 128;
  std::size_t hidden = 256;
  std::size_t attn_dim = 0;  // 0 = 2 * hidden
  std::size_t tree_dim = 0;  // 0 = hidden
  std::string pool = "sum";
  bool literal_ci = false;
  bool bypass_structure = false;
  bool identity_answer_encoder = false;
  bool include_question = false;

  std::size_t max_source_tokens = 400;
  std::size_t max_answers = 12;
  std::size_t max_answer_tokens = 65;
  std::size_t max_summary_tokens = 100;
  std::size_t train_decoder_steps = 100;

  double learning_rate = 0.15;
  double accumulator_init = 0.1;
  double clip_norm = 2.0;
  double coverage_weight = 1.0;
  std::size_t batch_size = 16;
  std::size_t steps = 10000;
  std::size_t val_every = 200;
  std::size_t val_limit = 0;  // 0 = whole validation split
  std::uint64_t seed = 1;

  std::size_t beam_width = 4;
  std::size_t min_decode_steps = 35;
  std::size_t max_decode_steps = 120;

  std::size_t budget = 100;
  double lexrank_threshold = 0.1;
  double damping = 0.85;

  std::size_t jobs = 1;

  summnet::ModelConfig model(std::size_t vocab_with_specials) const {
    summnet::ModelConfig c;
    c.mode = summnet::parse_mode(mode);
    c.vocab_size = vocab_with_specials;
    c.emb_dim = emb_dim;
    c.hidden = hidden;
    c.attn_dim = attn_dim;
    c.tree_dim = tree_dim;
    c.literal_ci = literal_ci;
    c.bypass_structure = bypass_structure;
    c.pool = summnet::parse_pool(pool);
    c.identity_answer_encoder = identity_answer_encoder;
    c.seed = seed;
    return c;
  }

  textpipe::EncodeLimits limits() const {
    textpipe::EncodeLimits l;
    l.max_source_tokens = max_source_tokens;
    l.max_answers = max_answers;
    l.max_answer_tokens = max_answer_tokens;
    l.max_summary_tokens = max_summary_tokens;
    l.max_decoder_steps = train_decoder_steps;
    l.include_question = include_question;
    return l;
  }

  summnet::BeamOptions beam() const {
    summnet::BeamOptions b;
    b.width = beam_width;
    b.min_steps = min_decode_steps;
    b.max_steps = max_decode_steps;
    return b;
  }

  evalkit::ExtractOptions extract() const {
    evalkit::ExtractOptions o;
    o.budget = budget;
    o.threshold = lexrank_threshold;
    o.damping = damping;
    return o;
  }

  bool hierarchical() const { return mode == "pg-hsa"; }
};

struct Field {
  std::string name;
  std::string help;
  bool locked;  // must match when resuming training
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

namespace detail {

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw UsageError(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw UsageError(key + ": expected a number, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError(key + ": expected true or false, got '" + v + "'");
}

inline std::string show(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
Field make(const std::string& name, T RunConfig::*member, bool locked, const std::string& help) {
  Field f{name, help, locked, {}, {}};
  f.get = [member](const RunConfig& c) {
    if constexpr (std::is_same_v<T, bool>) return std::string(c.*member ? "true" : "false");
    else if constexpr (std::is_same_v<T, double>) return show(c.*member);
    else if constexpr (std::is_same_v<T, std::string>) return c.*member;
    else return std::to_string(c.*member);
  };
  f.set = [member, name](RunConfig& c, const std::string& v) {
    if constexpr (std::is_same_v<T, bool>) c.*member = parse_bool(name, v);
    else if constexpr (std::is_same_v<T, double>) c.*member = parse_double(name, v);
    else if constexpr (std::is_same_v<T, std::string>) c.*member = v;
    else c.*member = static_cast<T>(parse_size(name, v));
  };
  return f;
}

}  // namespace detail

inline const std::vector<Field>& fields() {
  using detail::make;
  static const std::vector<Field> all = [] {
    std::vector<Field> f = {
        make("mode", &RunConfig::mode, true, "model: pg, pg-sa or pg-hsa"),
        make("data_dir", &RunConfig::data_dir, false, "prepared data directory"),
        make("checkpoint_dir", &RunConfig::checkpoint_dir, false, "checkpoint and log directory"),
        make("vocab_size", &RunConfig::vocab_size, true, "corpus vocabulary size"),
        make("emb_dim", &RunConfig::emb_dim, true, "input embedding width"),
        make("hidden", &RunConfig::hidden, true, "LSTM width per direction"),
        make("attn_dim", &RunConfig::attn_dim, true, "decoder attention width, 0 = 2*hidden"),
        make("tree_dim", &RunConfig::tree_dim, true, "tree attention width, 0 = hidden"),
        make("pool", &RunConfig::pool, true, "answer pooling: sum, mean or max"),
        make("literal_ci", &RunConfig::literal_ci, true, "children term scales the token's own embedding"),
        make("bypass_structure", &RunConfig::bypass_structure, true, "pg-sa without the tree path"),
        make("identity_answer_encoder", &RunConfig::identity_answer_encoder, true, "no answer-level LSTM or tree"),
        make("include_question", &RunConfig::include_question, true, "encode the thread question"),
        make("max_source_tokens", &RunConfig::max_source_tokens, true, "flat source truncation"),
        make("max_answers", &RunConfig::max_answers, true, "answers kept per thread"),
        make("max_answer_tokens", &RunConfig::max_answer_tokens, true, "tokens kept per answer"),
        make("max_summary_tokens", &RunConfig::max_summary_tokens, true, "reference truncation"),
        make("train_decoder_steps", &RunConfig::train_decoder_steps, true, "decoder steps in training"),
        make("learning_rate", &RunConfig::learning_rate, true, "Adagrad learning rate"),
        make("accumulator_init", &RunConfig::accumulator_init, true, "Adagrad initial accumulator"),
        make("clip_norm", &RunConfig::clip_norm, true, "global gradient norm clip"),
        make("coverage_weight", &RunConfig::coverage_weight, true, "coverage loss weight"),
        make("batch_size", &RunConfig::batch_size, true, "examples per update"),
        make("steps", &RunConfig::steps, false, "total training steps"),
        make("val_every", &RunConfig::val_every, true, "steps between validations"),
        make("val_limit", &RunConfig::val_limit, true, "validation examples used, 0 = all"),
        make("seed", &RunConfig::seed, true, "initialization and data order seed"),
        make("beam_width", &RunConfig::beam_width, false, "beam width"),
        make("min_decode_steps", &RunConfig::min_decode_steps, false, "tokens before STOP is allowed"),
        make("max_decode_steps", &RunConfig::max_decode_steps, false, "decoding length cap"),
        make("budget", &RunConfig::budget, false, "extractive word budget"),
        make("lexrank_threshold", &RunConfig::lexrank_threshold, false, "LexRank cosine threshold"),
        make("damping", &RunConfig::damping, false, "LexRank/TextRank damping"),
        make("jobs", &RunConfig::jobs, false, "worker threads for decoding, baselines and eval"),
    };
    return f;
  }();
  return all;
}

inline const Field& field(const std::string& name) {
  for (const auto& f : fields())
    if (f.name == name) return f;
  throw UsageError("unknown config key '" + name + "'");
}

inline std::string kebab(std::string s) {
  for (char& c : s)
    if (c == '_') c = '-';
  return s;
}

// Checks cross-field constraints.
inline void validate(const RunConfig& c) {
  try {
    summnet::parse_mode(c.mode);
    summnet::parse_pool(c.pool);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (c.hidden == 0 || c.emb_dim == 0) throw UsageError("hidden and emb_dim must be positive");
  if (c.batch_size == 0) throw UsageError("batch_size must be positive");
  if (c.val_every == 0) throw UsageError("val_every must be positive");
  if (c.beam_width == 0) throw UsageError("beam_width must be positive");
  if (c.min_decode_steps > c.max_decode_steps) throw UsageError("min_decode_steps exceeds max_decode_steps");
  if (c.jobs == 0) throw UsageError("jobs must be positive");
}

// Flat "key = value" lines; '#' starts a comment. Later keys win.
inline std::map<std::string, std::string> parse_config_text(std::istream& is, const std::string& origin = "config") {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    for (char& c : key)
      if (c == '-') c = '_';
    field(key);  // unknown keys are errors
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

inline std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config file " + path);
  return parse_config_text(is, path);
}

// Defaults, then the config file, then flags.
inline RunConfig resolve(const std::map<std::string, std::string>& file, const std::map<std::string, std::string>& flags) {
  RunConfig c;
  for (const auto* layer : {&file, &flags})
    for (const auto& [k, v] : *layer) field(k).set(c, v);
  validate(c);
  return c;
}

inline std::map<std::string, std::string> to_map(const RunConfig& c) {
  std::map<std::string, std::string> m;
  for (const auto& f : fields()) m[f.name] = f.get(c);
  return m;
}

inline std::string to_text(const RunConfig& c) {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.name << " = " << f.get(c) << '\n';
  return os.str();
}

// Locked keys whose value differs between a stored and a requested config.
inline std::vector<std::string> locked_differences(const std::map<std::string, std::string>& stored, const RunConfig& c) {
  std::vector<std::string> diff;
  for (const auto& f : fields()) {
    if (!f.locked) continue;
    auto it = stored.find(f.name);
    const std::string now = f.get(c);
    if (it == stored.end() || it->second != now) {
      diff.push_back(f.name + " (checkpoint " + (it == stored.end() ? "<missing>" : it->second) + ", now " + now + ")");
    }
  }
  return diff;
}

}  // namespace structsum::cli
