#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hail/loop_engine.hpp"
#include "hail/synthetic.hpp"
#include "json.hpp"

namespace hail {

struct ExperimentOptions {
  // Q1 runs the loop once per model kind.
  std::vector<ModelKind> q1_models = {ModelKind::kLogistic, ModelKind::kMlp};
  // Q2: the query-expansion arm reads this table when set, otherwise builds
  // one whose nearest neighbours of the initial keyword are off-topic.
  std::string embedding_table;
  std::size_t embedding_dim = 16;
  std::size_t offtopic_neighbors = 12;
  // Q3: extra micropost labels bought per forgone discovery round.
  std::size_t extra_labels_per_round = 50;
  // Q4 worker pool.
  std::size_t noisy_workers = 5;
  double noisy_accuracy = 0.7;
  double adversarial_accuracy = 0.15;
};

// Everything a command needs, loaded from a flat JSON object of dotted keys
// ("training.learning_rate": 0.003) with command-line overrides on top.
struct Config {
  std::uint64_t seed = 1;
  SyntheticSpec data = SyntheticSpec::desk_default();
  LoopConfig loop = desk_loop_defaults();
  int min_frequency = 2;
  std::vector<std::string> initial_keywords;  // empty: the planted initial keyword
  ExperimentOptions experiment;

  // Loop settings used by the experiment drivers and the CLI.
  static LoopConfig desk_loop_defaults();
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every recognised key, in document order.
std::vector<std::string> config_keys();

void set_config_value(Config& config, const std::string& key, const nlohmann::json& value);
nlohmann::json get_config_value(const Config& config, const std::string& key);

// "key=value"; the value is read as JSON when it parses, else as a string.
void apply_override(Config& config, const std::string& assignment);

Config load_config(const std::filesystem::path& path);
Config parse_config(const nlohmann::json& doc);
nlohmann::json to_json(const Config& config);
void save_config(const Config& config, const std::filesystem::path& path);

// Sets the data and loop seeds from one run seed.
void apply_seed(Config& config, std::uint64_t seed);

// Short hex digest of the canonical JSON form, seed excluded.
std::string config_fingerprint(const Config& config);

}  // namespace hail
