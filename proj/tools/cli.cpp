#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "hail/config.hpp"
#include "hail/experiments.hpp"
#include "hail/metrics.hpp"
#include "hail/task_service.hpp"
#include "json.hpp"

namespace hail::cli {
namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
  cmd->add_option("-c,--config", c.config_path, "JSON config file (flat dotted keys)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "master seed")->required();
  cmd->add_option("-s,--set", c.overrides, "override, key=value (repeatable)");
  if (needs_out) cmd->add_option("-o,--out", c.out, "output directory")->required();
}

Config resolve(const Common& c) {
  Config cfg = c.config_path.empty() ? Config{} : load_config(c.config_path);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  apply_seed(cfg, *c.seed);
  return cfg;
}

// Corpus, vocabulary and (when generated) planted truth for a command.
struct Data {
  Corpus corpus;
  Vocabulary vocab;
  std::optional<PlantedTruth> truth;
};

Data load_data_dir(const std::filesystem::path& dir) {
  Data d;
  d.corpus = load_corpus(dir / "corpus.jsonl");
  d.vocab = load_vocabulary(dir / "vocab.tsv");
  vectorize_corpus(d.corpus, d.vocab);
  if (std::filesystem::exists(dir / "truth")) d.truth = load_planted_truth(dir / "truth");
  return d;
}

Corpus test_only(const Corpus& c) {
  Corpus t;
  t.test = c.test;
  return t;
}

void write_loop_extras(const std::filesystem::path& out, const Config& cfg, const PreparedData& p) {
  save_config(cfg, out / "config.json");
  save_vocabulary(p.vocab, out / "vocab.tsv");
  save_corpus(test_only(p.data.corpus), out / "test.jsonl");
}

int cmd_gen_data(const Common& c, std::ostream& out) {
  const Config cfg = resolve(c);
  const auto p = prepare_data(cfg);
  const std::filesystem::path dir = c.out;
  std::filesystem::create_directories(dir);
  save_corpus(p.data.corpus, dir / "corpus.jsonl");
  save_vocabulary(p.vocab, dir / "vocab.tsv");
  save_planted_truth(p.data.truth, dir / "truth");
  save_config(cfg, dir / "config.json");
  out << "wrote " << p.data.corpus.positives.size() << " positive, " << p.data.corpus.unlabeled.size()
      << " unlabeled, " << p.data.corpus.test.size() << " test microposts and " << p.vocab.size()
      << " vocabulary tokens to " << dir.string() << '\n';
  return 0;
}

void print_metrics(const LoopState& s, std::ostream& out) {
  char buf[128];
  for (const auto& m : s.metrics) {
    std::snprintf(buf, sizeof buf, "iteration %d  auc %.2f  accuracy %.2f  keywords", m.iteration, 100.0 * m.auc,
                  100.0 * m.accuracy);
    out << buf;
    for (const auto& k : m.keywords) out << ' ' << k;
    out << '\n';
  }
  if (!s.stop_reason.empty()) out << "stopped: " << s.stop_reason << '\n';
}

int cmd_train(const Common& c, std::ostream& out) {
  Config cfg = resolve(c);
  cfg.loop.max_iterations = 1;
  const auto p = prepare_data(cfg);
  std::filesystem::create_directories(c.out);
  const auto state = run_planted_loop(cfg, p, c.out);
  write_loop_extras(c.out, cfg, p);
  print_metrics(state, out);
  return 0;
}

int cmd_run_loop(const Common& c, std::ostream& out) {
  const Config cfg = resolve(c);
  const auto p = prepare_data(cfg);
  std::filesystem::create_directories(c.out);
  const auto state = run_planted_loop(cfg, p, c.out);
  write_loop_extras(c.out, cfg, p);
  print_metrics(state, out);
  return 0;
}

int cmd_experiment(const Common& c, const std::string& which, std::ostream& out) {
  const Config cfg = resolve(c);
  const auto report = run_experiment(which, cfg);
  report.write(c.out);
  report.write_summary(out);
  return 0;
}

struct ServeOptions {
  std::string state_dir;
  std::string data_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  bool sync = false;
};

int cmd_serve(const Common& c, const ServeOptions& s, std::ostream& out) {
  Config cfg = resolve(c);
  Data d;
  if (s.data_dir.empty()) {
    auto p = prepare_data(cfg);
    d.corpus = std::move(p.data.corpus);
    d.vocab = std::move(p.vocab);
    d.truth = std::move(p.data.truth);
  } else {
    d = load_data_dir(s.data_dir);
  }
  if (cfg.initial_keywords.empty()) {
    if (!d.truth) throw ConfigError("serve needs loop.initial_keywords when the data has no planted truth");
    cfg.initial_keywords = initial_keywords(cfg, *d.truth);
  }
  TaskService service(cfg, std::move(d.corpus), std::move(d.vocab), s.state_dir,
                      ServiceOptions{.async_inference = !s.sync});
  HttpFrontEnd http(service);
  const int port = http.bind(s.host, s.port);
  out << "serving on http://" << s.host << ':' << port << "  state " << s.state_dir << std::endl;
  http.listen();
  return 0;
}

struct EvaluateOptions {
  std::string checkpoint;
  std::string vocab;
  std::string test;
  std::string format = "jsonl";
  double threshold = 0.5;
};

int cmd_evaluate(const EvaluateOptions& e, std::ostream& out) {
  const auto model = load_checkpoint(e.checkpoint);
  const auto vocab = load_vocabulary(e.vocab);
  if (model.vocab_fingerprint != 0 && model.vocab_fingerprint != vocab.fingerprint())
    throw std::runtime_error("checkpoint was trained on a different vocabulary than " + e.vocab);
  const auto corpus = load_test_set(e.test, parse_corpus_format(e.format));
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& t : corpus.test) {
    scores.push_back(predict(model, vectorize(t.post.tokens, vocab)));
    labels.push_back(t.label);
  }
  if (scores.empty()) throw std::runtime_error(e.test + " has no labeled test microposts");
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  nlohmann::json j = {{"items", scores.size()},
                      {"positives", positives},
                      {"threshold", e.threshold},
                      {"accuracy", accuracy(scores, labels, e.threshold)}};
  j["auc_pr"] = positives > 0 ? nlohmann::json(auc_pr(scores, labels)) : nlohmann::json(nullptr);
  out << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"hail: human-AI loop for event-related micropost classification"};
  app.name("hail");
  app.require_subcommand(1);

  Common common;
  auto* gen = app.add_subcommand("gen-data", "generate a planted synthetic corpus");
  add_common(gen, common, true);
  auto* train = app.add_subcommand("train", "single-keyword baseline (one loop iteration)");
  add_common(train, common, true);
  auto* run = app.add_subcommand("run-loop", "run the loop with simulated annotators");
  add_common(run, common, true);
  std::string backend = "simulated";
  run->add_option("--backend", backend, "simulated | service")->check(CLI::IsMember({"simulated", "service"}));

  auto* exp = app.add_subcommand("experiment", "run an experiment report");
  add_common(exp, common, true);
  std::string which;
  exp->add_option("--which", which, "q1 | q2 | q3 | q4")->required()->check(CLI::IsMember({"q1", "q2", "q3", "q4"}));

  auto* serve = app.add_subcommand("serve", "start the task service");
  add_common(serve, common, false);
  ServeOptions so;
  serve->add_option("--state", so.state_dir, "state directory (journal, snapshot, run)")->required();
  serve->add_option("--data", so.data_dir, "directory written by gen-data; generated from the config if absent");
  serve->add_option("--host", so.host, "bind address");
  serve->add_option("--port", so.port, "port, 0 for any free port");
  serve->add_flag("--sync", so.sync, "run inference on the request thread");

  auto* eval = app.add_subcommand("evaluate", "score a checkpoint on a labeled test file");
  EvaluateOptions eo;
  eval->add_option("--checkpoint", eo.checkpoint, "model.ckpt")->required()->check(CLI::ExistingFile);
  eval->add_option("--vocab", eo.vocab, "vocab.tsv")->required()->check(CLI::ExistingFile);
  eval->add_option("--test", eo.test, "corpus file; its test split is scored")->required()->check(CLI::ExistingFile);
  eval->add_option("--format", eo.format, "jsonl | tsv")->check(CLI::IsMember({"jsonl", "tsv"}));
  eval->add_option("--threshold", eo.threshold, "accuracy threshold");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, out);
    if (train->parsed()) return cmd_train(common, out);
    if (run->parsed()) {
      if (backend == "service") {
        ServeOptions s;
        s.state_dir = common.out;
        return cmd_serve(common, s, out);
      }
      return cmd_run_loop(common, out);
    }
    if (exp->parsed()) return cmd_experiment(common, which, out);
    if (serve->parsed()) return cmd_serve(common, so, out);
    if (eval->parsed()) return cmd_evaluate(eo, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace hail::cli
