// structsum: prepare, train, summarize, eval, baseline, inspect, selfcheck.
// Exit codes: 0 ok, 1 usage, 2 data, 3 selfcheck failure.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "structsum/cli/commands.hpp"
#include "structsum/cli/config.hpp"
#include "structsum/cli/selfcheck.hpp"

namespace {

using namespace structsum;
using namespace structsum::cli;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kSelfcheck = 3 };

// --config plus one --kebab-case flag per config key.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* sub) {
    sub->add_option("--config", file, "flat key = value config file");
    for (const Field& f : fields()) {
      const std::string name = f.name;
      sub->add_option_function<std::string>(
             "--" + kebab(name), [this, name](const std::string& v) { values[name] = v; }, f.help)
          ->type_name(f.get(RunConfig{}) == "true" || f.get(RunConfig{}) == "false" ? "BOOL" : "VALUE");
    }
  }

  RunConfig resolve() const {
    return cli::resolve(file.empty() ? std::map<std::string, std::string>{} : load_config_file(file), values);
  }
};

void write_records(const std::string& path, const std::vector<summnet::SummaryRecord>& recs) {
  Output out(path);
  for (const auto& r : recs) out.stream() << summnet::to_jsonl(r) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured-attention summarization toolkit"};
  app.require_subcommand(1);

  ConfigFlags flags;
  std::string input, output = "-", checkpoint, name, candidates, references, id;
  bool resume = false;

  auto* prepare = app.add_subcommand("prepare", "split a raw JSON-lines corpus and build the vocabulary");
  prepare->add_option("--input", input, "raw JSON-lines corpus")->required();
  flags.attach(prepare);

  auto* train = app.add_subcommand("train", "train a model on prepared data");
  train->add_flag("--resume", resume, "continue from <checkpoint-dir>/last.ckpt");
  flags.attach(train);

  auto* summarize = app.add_subcommand("summarize", "beam-decode summaries with a checkpoint");
  summarize->add_option("--checkpoint", checkpoint, "checkpoint file (default <checkpoint-dir>/best.ckpt)");
  summarize->add_option("--input", input, "JSON-lines examples")->required();
  summarize->add_option("--output", output, "JSON-lines summaries, - for stdout");
  flags.attach(summarize);

  auto* eval = app.add_subcommand("eval", "ROUGE-1/2/L F1 of summaries against references");
  eval->add_option("--candidates", candidates, "JSON-lines summaries")->required();
  eval->add_option("--references", references, "JSON-lines with id and summary")->required();
  eval->add_option("--output", output, "CSV output, - for stdout");
  flags.attach(eval);

  auto* baseline = app.add_subcommand("baseline", "extractive baseline summaries");
  baseline->add_option("--name", name, "lead3, lexrank, textrank or kl-summ")->required();
  baseline->add_option("--input", input, "JSON-lines examples")->required();
  baseline->add_option("--output", output, "JSON-lines summaries, - for stdout");
  flags.attach(baseline);

  auto* inspect = app.add_subcommand("inspect", "dump the induced trees of one example as JSON");
  inspect->add_option("--checkpoint", checkpoint, "checkpoint file (default <checkpoint-dir>/best.ckpt)");
  inspect->add_option("--input", input, "JSON-lines examples")->required();
  inspect->add_option("--id", id, "example id (default: first example)");
  inspect->add_option("--output", output, "JSON output, - for stdout");
  flags.attach(inspect);

  auto* selfcheck = app.add_subcommand("selfcheck", "run the built-in oracle and invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (selfcheck->parsed()) return selfcheck::run_all(std::cout) ? kOk : kSelfcheck;

    const RunConfig cfg = flags.resolve();
    const std::string ckpt = checkpoint.empty() ? (fs::path(cfg.checkpoint_dir) / "best.ckpt").string() : checkpoint;

    if (prepare->parsed()) {
      PrepareReport r = cmd_prepare(input, cfg);
      std::cout << "train " << r.train << ", val " << r.val << ", test " << r.test << ", vocabulary " << r.vocab
                << " -> " << cfg.data_dir << '\n';
    } else if (train->parsed()) {
      TrainResult r = cmd_train(cfg, resume, std::cerr);
      std::cout << "finished at step " << r.step << ", last loss " << r.last_loss << ", best validation "
                << r.best_val << (r.coverage ? ", coverage phase" : "") << '\n';
    } else if (summarize->parsed()) {
      write_records(output, cmd_summarize(ckpt, input, cfg));
    } else if (eval->parsed()) {
      Output out(output);
      evalkit::write_csv(out.stream(), cmd_eval(candidates, references, cfg.jobs));
    } else if (baseline->parsed()) {
      write_records(output, cmd_baseline(name, input, cfg));
    } else if (inspect->parsed()) {
      Output out(output);
      out.stream() << cmd_inspect(ckpt, input, id, cfg).dump(2) << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
