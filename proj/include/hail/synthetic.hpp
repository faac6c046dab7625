#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hail/corpus.hpp"
#include "hail/crowd_model.hpp"

namespace hail {

struct PlantedKeyword {
  std::string token;
  double expectation = 0.5;  // P(relevant | token present) among unlabeled
  double coverage = 0.05;    // P(token present) among unlabeled
  // Negative groups whose microposts carry the token; empty spreads it over
  // all negatives.
  std::vector<int> groups;
  // Weight in the planted lexicon; negative means |expectation - balance|.
  double informativeness = -1.0;
};

struct WorkerPoolSpec {
  std::size_t n_workers = 5;
  double accuracy_min = 0.8;
  double accuracy_max = 0.95;
  std::size_t n_adversarial = 0;  // appended after the regular workers
  double adversarial_accuracy = 0.2;
  std::size_t redundancy = 3;  // labels per classified micropost
};

// Token-multinomial generator. Relevant microposts mention one event: the
// labeled set only draws the seed events, the unlabeled and test sets draw
// from all events. Irrelevant microposts belong to one of several
// off-event groups. Both classes share topic and background tokens, and each
// planted keyword is inserted independently with class- and group-specific
// rates chosen so that its relevant fraction equals the planted expectation.
struct SyntheticSpec {
  std::size_t n_positive = 900;
  std::size_t n_unlabeled = 10000;
  std::size_t n_test = 500;
  double class_balance = 0.2;
  std::size_t n_seed_events = 4;
  std::size_t n_other_events = 30;
  std::size_t tokens_per_event = 4;
  double seed_event_share = 0.15;  // share of unlabeled/test positives from seed events
  std::size_t n_topic_tokens = 20;
  std::size_t n_negative_groups = 6;
  std::size_t tokens_per_group = 15;
  std::size_t n_background_tokens = 300;
  std::size_t words_per_post = 12;
  std::size_t event_words = 2;
  std::size_t group_words = 2;
  std::size_t topic_words = 2;
  // Multiplier on keyword rates inside the labeled set.
  double labeled_keyword_scale = 1.0;
  std::vector<PlantedKeyword> keywords;
  WorkerPoolSpec workers;
  std::uint64_t seed = 1;

  static SyntheticSpec desk_default();
  // Split sizes of the CyberAttack dataset (2600 / 86000 / 500).
  static SyntheticSpec cyber_attack_shape();
};

struct PlantedTruth {
  std::map<std::string, int> labels;  // every micropost id -> relevance
  std::map<std::string, double> lexicon;
  std::map<std::string, double> expectations;
  std::vector<SimulatedWorker> workers;
  std::string initial_keyword;
};

struct SyntheticCorpus {
  Corpus corpus;
  PlantedTruth truth;
};

class SyntheticSpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec);

// truth.jsonl (id, label), lexicon.tsv (token, weight, expectation),
// workers.tsv (id, P(1|1), P(0|0)).
void save_planted_truth(const PlantedTruth& truth, const std::filesystem::path& dir);
PlantedTruth load_planted_truth(const std::filesystem::path& dir);

}  // namespace hail
