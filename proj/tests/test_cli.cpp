#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

using namespace hail;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run hail_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::filesystem::path small_config_file(const std::string& name) {
  const auto dir = testing::scratch_dir(name);
  save_config(testing::small_config(), dir / "small.json");
  return dir / "small.json";
}

}  // namespace

TEST_CASE("bad invocations print usage and fail") {
  auto r = hail_cli({"run-loop", "--seed", "1", "--no-such-flag"});
  CHECK(r.code == 2);
  CHECK(r.err.find("Usage") != std::string::npos);
  r = hail_cli({"frobnicate"});
  CHECK(r.code != 0);
  r = hail_cli({"gen-data", "-o", testing::scratch_dir("cli_noseed").string()});
  CHECK(r.code == 2);
  r = hail_cli({"gen-data", "--seed", "1", "-s", "loop.nonexistent=3", "-o", testing::scratch_dir("cli_badkey").string()});
  CHECK(r.code != 0);
  r = hail_cli({"experiment", "--seed", "1", "--which", "q7", "-o", testing::scratch_dir("cli_badq").string()});
  CHECK(r.code != 0);
}

TEST_CASE("gen-data writes corpus, vocabulary, truth and config") {
  const auto cfg = small_config_file("cli_gen_cfg");
  const auto out = testing::scratch_dir("cli_gen");
  const auto r = hail_cli({"gen-data", "-c", cfg.string(), "--seed", "4", "-o", out.string()});
  REQUIRE(r.code == 0);
  CHECK(std::filesystem::exists(out / "corpus.jsonl"));
  CHECK(std::filesystem::exists(out / "vocab.tsv"));
  CHECK(std::filesystem::exists(out / "truth" / "truth.jsonl"));
  CHECK(std::filesystem::exists(out / "config.json"));
  const auto stored = load_config(out / "config.json");
  CHECK(stored.seed == 4);
  CHECK(stored.data.n_unlabeled == 2000);
}

TEST_CASE("run-loop output is a function of config and seed") {
  const auto cfg = small_config_file("cli_loop_cfg");
  const auto a = testing::scratch_dir("cli_loop_a");
  const auto b = testing::scratch_dir("cli_loop_b");
  for (const auto& dir : {a, b}) {
    const auto r = hail_cli({"run-loop", "-c", cfg.string(), "--seed", "8", "-s", "loop.max_iterations=2", "-o",
                             dir.string()});
    REQUIRE(r.code == 0);
  }
  const auto ta = testing::read_tree(a);
  CHECK(ta == testing::read_tree(b));
  CHECK(ta.contains("iter_002/model.ckpt"));
  CHECK_FALSE(ta.contains("iter_003/model.ckpt"));
}

TEST_CASE("train then evaluate a checkpoint") {
  const auto cfg = small_config_file("cli_train_cfg");
  const auto out = testing::scratch_dir("cli_train");
  REQUIRE(hail_cli({"train", "-c", cfg.string(), "--seed", "3", "-o", out.string()}).code == 0);
  const auto r = hail_cli({"evaluate", "--checkpoint", (out / "iter_001" / "model.ckpt").string(), "--vocab",
                           (out / "vocab.tsv").string(), "--test", (out / "test.jsonl").string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["items"] == 200);
  CHECK(j["auc_pr"].get<double>() > 0.0);
  CHECK(j["accuracy"].get<double>() >= 0.0);
}

TEST_CASE("experiment writes its report") {
  const auto cfg = small_config_file("cli_exp_cfg");
  const auto out = testing::scratch_dir("cli_exp");
  const auto r = hail_cli({"experiment", "-c", cfg.string(), "--seed", "2", "--which", "q4", "-o", out.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("majority-vote") != std::string::npos);
  std::size_t csv = 0;
  for (const auto& e : std::filesystem::directory_iterator(out)) csv += e.path().extension() == ".csv";
  CHECK(csv == 1);
}
