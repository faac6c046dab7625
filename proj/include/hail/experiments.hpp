#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hail/config.hpp"
#include "hail/loop_engine.hpp"
#include "hail/synthetic.hpp"

namespace hail {

// A generated corpus with its vocabulary, ready for training.
struct PreparedData {
  SyntheticCorpus data;
  Vocabulary vocab;
};

PreparedData prepare_data(const Config& config);

std::vector<std::string> initial_keywords(const Config& config, const PlantedTruth& truth);

// Runs the loop with simulated annotators. When run_dir is non-empty, writes
// manifest.json, one iter_NNN directory per iteration, and summary tables.
LoopState run_planted_loop(const Config& config, const std::filesystem::path& run_dir = {});
LoopState run_planted_loop(const Config& config, const PreparedData& prepared,
                           const std::filesystem::path& run_dir = {});

struct ExperimentRow {
  std::string arm;
  std::string model;
  int iteration = 0;
  std::string keyword;
  double auc = 0.0;  // percent
  double accuracy = 0.0;
};

struct ExperimentReport {
  std::string which;
  std::uint64_t seed = 0;
  std::string fingerprint;
  std::vector<ExperimentRow> rows;
  std::vector<std::string> notes;

  std::vector<ExperimentRow> arm(const std::string& name, const std::string& model = "") const;
  double first_auc(const std::string& name, const std::string& model = "") const;
  double final_auc(const std::string& name, const std::string& model = "") const;

  void write_csv(std::ostream& out) const;
  void write_summary(std::ostream& out) const;
  // Writes <which>_<fingerprint>_seed<seed>.csv and .txt; returns the csv path.
  std::filesystem::path write(const std::filesystem::path& dir) const;
};

// Loop per model kind; one row per iteration with keyword, AUC and accuracy.
ExperimentReport run_experiment_q1(const Config& config);
// Discovery vs query expansion over the same data and crowd.
ExperimentReport run_experiment_q2(const Config& config);
ExperimentReport run_experiment_q2(const Config& config, const EmbeddingTable& table);
// Full loop vs the initial keyword plus extra labels bought with the
// discovery budget.
ExperimentReport run_experiment_q3(const Config& config);
// Joint expectation inference vs majority vote under a noisy crowd.
ExperimentReport run_experiment_q4(const Config& config);

ExperimentReport run_experiment(const std::string& which, const Config& config);

// Random vectors for every vocabulary token, except that the tokens whose
// empirical relevance is closest to the class balance are placed next to
// the initial keyword, so expansion returns uninformative terms.
EmbeddingTable make_offtopic_embedding_table(const PreparedData& prepared, const std::string& keyword,
                                             std::size_t n_offtopic, std::size_t dim, std::uint64_t seed);

}  // namespace hail
