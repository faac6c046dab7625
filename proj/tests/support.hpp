#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "hail/config.hpp"
#include "hail/experiments.hpp"
#include "hail/rng.hpp"

namespace hail::testing {

// A corpus and loop small enough for unit tests (well under a second per
// iteration with logistic regression).
inline Config small_config(std::uint64_t seed = 5) {
  Config c;
  c.data.n_positive = 200;
  c.data.n_unlabeled = 2000;
  c.data.n_test = 200;
  c.loop.model_kind = ModelKind::kLogistic;
  c.loop.hidden.clear();
  c.loop.max_iterations = 3;
  c.loop.classify_batch = 20;
  c.loop.discovery_batch = 20;
  c.loop.training.max_epochs = 30;
  c.loop.training.learning_rate = 0.01;
  c.loop.joint.max_rounds = 3;
  c.loop.joint.gradient_steps = 5;
  apply_seed(c, seed);
  return c;
}

// Fresh directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hail_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Relative path -> file bytes for every regular file below dir.
inline std::map<std::string, std::string> read_tree(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[std::filesystem::relative(e.path(), dir).string()] = ss.str();
  }
  return out;
}

}  // namespace hail::testing
