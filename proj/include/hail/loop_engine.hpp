#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hail/corpus.hpp"
#include "hail/crowd_model.hpp"
#include "hail/joint_inference.hpp"
#include "hail/synthetic.hpp"
#include "hail/target_model.hpp"

namespace hail {

// How each keyword's expectation is estimated from its crowd labels.
enum class ExpectationSource { kJoint, kMajorityVote };
// Where the next iteration's keyword comes from.
enum class KeywordSource { kDiscovery, kQueryExpansion };

std::string to_string(ExpectationSource s);
std::string to_string(KeywordSource s);
ExpectationSource parse_expectation_source(std::string_view s);
KeywordSource parse_keyword_source(std::string_view s);

struct LoopConfig {
  ModelKind model_kind = ModelKind::kMlp;
  std::vector<std::size_t> hidden = {64};
  TrainingConfig training;
  // lambda = lambda_per_labeled x |L| when positive; otherwise training.lambda
  // is used as given.
  double lambda_per_labeled = 10.0;
  JointFitConfig joint;
  std::size_t classify_batch = 50;
  std::size_t discovery_batch = 50;
  std::size_t redundancy = 3;
  std::size_t pick_group_size = 10;  // microposts per keyword-pick task
  std::size_t pick_redundancy = 1;
  double pick_noise = 0.0;
  std::size_t top_n = 1;
  int max_iterations = 9;
  int patience = 3;
  double min_delta = 0.002;
  bool stop_on_convergence = false;
  double validation_fraction = 0.2;
  ExpectationSource expectation_source = ExpectationSource::kJoint;
  KeywordSource keyword_source = KeywordSource::kDiscovery;
  std::vector<std::string> qe_keywords;  // expansion list for kQueryExpansion
  std::uint64_t seed = 1;
};

// Read-only inputs shared by every iteration.
struct LoopContext {
  const Corpus& corpus;  // vectorized
  const Vocabulary& vocab;
  std::vector<std::size_t> validation;  // indices into corpus.test
  std::vector<std::size_t> evaluation;
  std::unordered_map<std::string, std::size_t> unlabeled_index;

  LoopContext(const Corpus& corpus, const Vocabulary& vocab, const LoopConfig& config);
};

struct KeywordHistoryEntry {
  int iteration = 0;
  std::string keyword;
  double expectation = 0.5;
  double crowd_mean = 0.5;
  double model_mean = 0.5;
  std::size_t matched = 0;
};

struct IterationMetrics {
  int iteration = 0;
  double auc = 0.0;  // fractions; reports print percent
  double accuracy = 0.0;
  double validation_auc = 0.0;
  std::vector<std::string> keywords;
};

struct SelectedMicropost {
  std::size_t unlabeled_index = 0;
  std::string id;
  double prediction = 0.0;
  double score = 0.0;
  int predicted = 0;
};

struct IterationArtifacts {
  std::vector<AnnotationMatrix> annotations;  // one per keyword
  std::vector<JointFitReport> reports;
  std::vector<SelectedMicropost> selected;
  std::vector<std::string> picks;
  std::vector<std::string> discovered;
};

struct LoopState {
  int iteration = 0;  // completed iterations
  std::vector<KeywordRecord> keywords;
  std::vector<KeywordHistoryEntry> history;
  TargetModel model;
  std::vector<IterationMetrics> metrics;
  std::vector<IterationArtifacts> archive;
  std::vector<std::string> next_keywords;
  bool converged = false;
  bool finished = false;
  std::string stop_reason;

  std::set<std::string> used_keywords() const;
};

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LoopError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoNewKeyword : public LoopError {
 public:
  using LoopError::LoopError;
};

// Source of crowd answers for the two tasks.
class AnnotatorBackend {
 public:
  virtual ~AnnotatorBackend() = default;
  virtual AnnotationMatrix classify(const std::vector<std::string>& item_ids, int iteration,
                                    const std::string& keyword) = 0;
  // One token per answered keyword-pick task.
  virtual std::vector<std::string> pick(const std::vector<SelectedMicropost>& selected,
                                        const std::set<std::string>& used, int iteration) = 0;
};

// Workers simulated from planted confusion matrices and lexicon.
class SimulatedBackend : public AnnotatorBackend {
 public:
  SimulatedBackend(const Corpus& corpus, const PlantedTruth& truth, const LoopConfig& config);
  AnnotationMatrix classify(const std::vector<std::string>& item_ids, int iteration,
                            const std::string& keyword) override;
  std::vector<std::string> pick(const std::vector<SelectedMicropost>& selected,
                                const std::set<std::string>& used, int iteration) override;

 private:
  const Corpus& corpus_;
  const PlantedTruth& truth_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t redundancy_;
  std::size_t group_size_;
  std::size_t pick_redundancy_;
  double noise_;
  std::uint64_t seed_;
};

// Replays fixed answers; used to check that other front ends reach the same
// state as the simulator.
class ScriptedBackend : public AnnotatorBackend {
 public:
  ScriptedBackend(std::vector<AnnotationMatrix> labels, std::vector<std::vector<std::string>> picks)
      : labels_(std::move(labels)), picks_(std::move(picks)) {}
  AnnotationMatrix classify(const std::vector<std::string>& item_ids, int iteration,
                            const std::string& keyword) override;
  std::vector<std::string> pick(const std::vector<SelectedMicropost>& selected,
                                const std::set<std::string>& used, int iteration) override;

 private:
  std::vector<AnnotationMatrix> labels_;
  std::vector<std::vector<std::string>> picks_;
  std::size_t next_label_ = 0, next_pick_ = 0;
};

// |p - e| over the matched set, descending, ties by micropost id.
std::vector<SelectedMicropost> rank_disagreement(const TargetModel& model,
                                                 std::span<const std::size_t> matched, double e,
                                                 const Corpus& corpus, bool parallel = true);

// True once validation AUC has gone `patience` iterations without improving
// on the best value by at least min_delta.
bool check_convergence(std::span<const double> history, int patience = 3, double min_delta = 0.002);

bool is_keyword_candidate(std::string_view token);

// Most frequent eligible, unused picks (ties by token). Throws NoNewKeyword
// when no pick qualifies.
std::vector<std::string> discover_keywords(std::span<const std::string> picks,
                                           const std::set<std::string>& used, std::size_t top_n = 1);

using EmbeddingTable = std::map<std::string, std::vector<double>>;
EmbeddingTable load_embedding_table(const std::filesystem::path& path);
void save_embedding_table(const EmbeddingTable& table, const std::filesystem::path& path);
// Nearest tokens by cosine similarity, query excluded, ties by token.
std::vector<std::string> qe_baseline_expand(const std::string& keyword, const EmbeddingTable& table,
                                            std::size_t top_k);

LoopState init_loop_state(const LoopContext& ctx, const LoopConfig& config,
                          std::vector<std::string> initial_keywords);

// Phase 1: which microposts to classify for each of this iteration's keywords.
struct IterationPlan {
  int iteration = 0;
  std::vector<std::string> keywords;
  std::vector<std::vector<std::size_t>> matched;
  std::vector<std::vector<std::string>> sample_ids;
};
IterationPlan plan_iteration(const LoopContext& ctx, const LoopState& state, const LoopConfig& config);

// Phase 2: expectation inference and model training from the collected
// labels; returns the updated state and the disagreement set for discovery.
struct InferenceOutcome {
  LoopState state;
  IterationMetrics metrics;
  IterationArtifacts artifacts;  // annotations, reports and selected set
};
InferenceOutcome infer_iteration(const LoopContext& ctx, const LoopState& state, const IterationPlan& plan,
                                 std::vector<AnnotationMatrix> annotations, const LoopConfig& config);

// Phase 3: aggregate keyword picks into the next iteration's keywords and
// close the iteration.
LoopState complete_iteration(const LoopContext& ctx, InferenceOutcome outcome,
                             std::vector<std::string> picks, const LoopConfig& config);

LoopState run_iteration(const LoopContext& ctx, const LoopState& state, AnnotatorBackend& backend,
                        const LoopConfig& config);

using IterationCallback = std::function<void(const LoopState&)>;
LoopState run_loop(const LoopContext& ctx, std::vector<std::string> initial_keywords,
                   AnnotatorBackend& backend, const LoopConfig& config,
                   const IterationCallback& on_iteration = {});

// Per-iteration subdirectory plus top-level metrics and history tables.
void write_iteration(const std::filesystem::path& run_dir, const LoopState& state);
void write_run_summary(const std::filesystem::path& run_dir, const LoopState& state);

// Scores on the evaluation part of the test split.
IterationMetrics evaluate_model(const LoopContext& ctx, const TargetModel& model, bool parallel = true);

}  // namespace hail
