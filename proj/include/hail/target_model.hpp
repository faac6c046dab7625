#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hail/corpus.hpp"

namespace hail {

enum class ModelKind { kLogistic, kMlp };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

// Contiguous view of one affine layer inside the flat parameter vector.
// Weights are stored input-major: weight(i, j) = params[weight_offset + i*out + j].
struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

// p(y=1|x) for a bag-of-words input: zero or more tanh hidden layers
// followed by a single logistic output unit.
struct TargetModel {
  ModelKind kind = ModelKind::kLogistic;
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;  // empty for logistic regression
  std::vector<double> params;
  std::uint64_t vocab_fingerprint = 0;

  std::vector<LayerShape> layers() const;
  std::size_t num_params() const;
};

std::size_t parameter_count(std::size_t input_dim, std::span<const std::size_t> hidden);

struct TrainingConfig {
  double lambda = 0.0;  // expectation-regularization strength
  // Gaussian prior scale; the default gives a penalty weight 1/(2 sigma^2) of 1e-4.
  double prior_sigma = 70.71067811865476;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int max_epochs = 200;
  int batch_size = 0;  // 0: full batch over L
  double unlabeled_negative_weight = 0.0;
  // Stop early once the objective's relative gain over 10 epochs drops below
  // this; 0 disables early stopping.
  double convergence_tolerance = 0.0;
  std::uint64_t seed = 0;
  bool parallel = true;

  void validate() const;
};

struct KeywordRecord {
  std::string keyword;
  double expectation = 0.5;
  std::vector<std::size_t> matched;  // indices into corpus.unlabeled
};

// An unlabeled micropost with a (possibly soft) label, treated as extra
// supervised data in the likelihood term.
struct SoftLabel {
  std::size_t unlabeled_index = 0;
  double positive = 1.0;  // probability of class 1
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kProbabilityClamp = 1e-7;

TargetModel init_model(ModelKind kind, std::span<const std::size_t> hidden,
                       std::size_t input_dim, std::uint64_t seed);

double predict(const TargetModel& model, const SparseRow& x);

// Mean prediction over the matched unlabeled microposts.
double model_expectation(const TargetModel& model, std::span<const std::size_t> matched,
                         const Corpus& corpus, bool parallel = true);

// KL(Ber(p) || Ber(q)) with q clamped into [1e-7, 1 - 1e-7].
double bernoulli_kl(double p, double q);

// J1 + J2 (higher is better): log-likelihood of L (plus optional soft labels
// and weak negatives), Gaussian log-prior, and the KL expectation penalty.
double objective(const TargetModel& model, const Corpus& corpus,
                 std::span<const KeywordRecord> keywords, const TrainingConfig& config,
                 std::span<const SoftLabel> extra = {});

std::vector<double> gradient(const TargetModel& model, const Corpus& corpus,
                             std::span<const KeywordRecord> keywords,
                             const TrainingConfig& config, std::span<const SoftLabel> extra = {});

struct TrainingTrace {
  std::vector<double> objective;  // value before each step
  int steps = 0;
  double best = 0.0;
};

// Adam ascent on the objective. Returns the best parameters seen, so the
// result never scores below the starting point.
TargetModel train(const TargetModel& model, const Corpus& corpus,
                  std::span<const KeywordRecord> keywords, const TrainingConfig& config,
                  std::span<const SoftLabel> extra = {}, TrainingTrace* trace = nullptr);

void save_checkpoint(const TargetModel& model, const std::filesystem::path& path);
TargetModel load_checkpoint(const std::filesystem::path& path);

}  // namespace hail
