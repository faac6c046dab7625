#include <fstream>

#include "doctest.h"
#include "hail/config.hpp"
#include "support.hpp"

using namespace hail;

TEST_CASE("defaults and the experiment profile") {
  const Config c;
  CHECK(c.loop.redundancy == 3);
  CHECK(c.loop.classify_batch == 50);
  CHECK(c.loop.discovery_batch == 50);
  CHECK(c.loop.pick_redundancy == 1);
  CHECK(c.loop.lambda_per_labeled == 10.0);
  CHECK(c.loop.max_iterations == 9);
  CHECK(c.loop.joint.alpha == 1.0);
  // Library defaults stay at the documented values.
  const TrainingConfig t;
  CHECK(t.learning_rate == 1e-3);
  CHECK(1.0 / (2.0 * t.prior_sigma * t.prior_sigma) == doctest::Approx(1e-4).epsilon(1e-12));
  const JointFitConfig j;
  CHECK(j.max_rounds == 50);
  CHECK(j.gradient_steps == 25);
}

TEST_CASE("overrides") {
  Config c;
  apply_override(c, "training.learning_rate=0.05");
  CHECK(c.loop.training.learning_rate == 0.05);
  apply_override(c, "model.kind=lr");
  CHECK(c.loop.model_kind == ModelKind::kLogistic);
  apply_override(c, "model.hidden=[8,4]");
  CHECK(c.loop.hidden == std::vector<std::size_t>{8, 4});
  apply_override(c, "joint.fusion=crowd-only");
  CHECK(c.loop.joint.fusion == FusionSource::kCrowdOnly);
  apply_override(c, "loop.initial_keywords=[\"breach\",\"leak\"]");
  CHECK(c.initial_keywords == std::vector<std::string>{"breach", "leak"});
  apply_override(c, "data.keywords=[\"alarm:0.6:0.05\",\"quiet:0.02:0.05:1/2\"]");
  REQUIRE(c.data.keywords.size() == 2);
  CHECK(c.data.keywords[1].groups == std::vector<int>{1, 2});
  CHECK_THROWS_AS(apply_override(c, "training.nope=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "training.max_epochs=\"many\""), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "model.kind=svm"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "no-equals-sign"), ConfigError);
}

TEST_CASE("document round trip and fingerprint") {
  const auto dir = testing::scratch_dir("config_rt");
  Config c;
  apply_override(c, "loop.max_iterations=4");
  apply_seed(c, 17);
  save_config(c, dir / "c.json");
  const auto back = load_config(dir / "c.json");
  CHECK(to_json(back) == to_json(c));
  CHECK(back.seed == 17);
  CHECK(back.data.seed == 17);
  CHECK(back.loop.seed == 17);
  CHECK(config_fingerprint(back) == config_fingerprint(c));
  CHECK(config_fingerprint(c).size() == 8);
  Config other = c;
  apply_seed(other, 18);
  CHECK(config_fingerprint(other) == config_fingerprint(c));
  apply_override(other, "loop.max_iterations=5");
  CHECK(config_fingerprint(other) != config_fingerprint(c));
  for (const auto& key : config_keys()) CHECK_NOTHROW(get_config_value(c, key));
}

TEST_CASE("config files with unknown keys or bad json are rejected") {
  const auto dir = testing::scratch_dir("config_bad");
  {
    std::ofstream out(dir / "unknown.json");
    out << R"({"training.learning_rat": 0.1})";
  }
  CHECK_THROWS_AS(load_config(dir / "unknown.json"), ConfigError);
  {
    std::ofstream out(dir / "broken.json");
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "absent.json"), ConfigError);
  const auto partial = parse_config(nlohmann::json{{"loop.redundancy", 5}});
  CHECK(partial.loop.redundancy == 5);
  CHECK(partial.loop.classify_batch == 50);
}
