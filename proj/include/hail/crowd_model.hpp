#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hail {

struct Annotation {
  std::size_t item = 0;
  std::size_t worker = 0;
  int label = 0;
  friend bool operator==(const Annotation&, const Annotation&) = default;
};

// Partial M x N label matrix; entries are kept sorted by (item, worker).
struct AnnotationMatrix {
  std::vector<std::string> item_ids;
  std::vector<std::string> worker_ids;
  std::vector<Annotation> entries;

  std::size_t num_items() const { return item_ids.size(); }
  std::size_t num_workers() const { return worker_ids.size(); }
  // Entries grouped per item as (worker, label).
  std::vector<std::vector<std::pair<std::size_t, int>>> rows() const;
  // Sorts entries and checks every invariant (labels binary, indices in
  // range, no duplicate cells, every item annotated).
  void normalize();

  friend bool operator==(const AnnotationMatrix&, const AnnotationMatrix&) = default;
};

// pi[r][s] = P(worker assigns r | true class s); columns sum to one.
struct ConfusionMatrix {
  std::string worker_id;
  std::array<std::array<double, 2>, 2> pi{{{1.0, 0.0}, {0.0, 1.0}}};

  static ConfusionMatrix from_accuracy(std::string id, double p_correct_1, double p_correct_0);
};

struct PosteriorLabels {
  std::vector<std::array<double, 2>> q;  // q[m][s]
  double positive_mean() const;
};

class CrowdError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MajorityVote {
  std::vector<int> labels;
  double positive_fraction = 0.0;
};

// Ties break toward class 1.
MajorityVote majority_vote(const AnnotationMatrix& a);

struct SimulatedWorker {
  ConfusionMatrix confusion;
  std::uint64_t seed = 0;
};

// Draws each cell from column truths[m] of the worker's confusion matrix.
// redundancy 0 means every worker labels every item; otherwise each item gets
// that many distinct workers. Randomness is keyed per (item id, worker id).
AnnotationMatrix simulate_annotations(std::span<const std::string> item_ids,
                                      std::span<const int> truths,
                                      std::span<const SimulatedWorker> workers, std::uint64_t seed,
                                      std::size_t redundancy = 0);

// p(A_m:) = sum_s e_s prod_n pi^(n)[A_mn][s]; `row` holds (worker, label).
double annotation_likelihood(std::span<const std::pair<std::size_t, int>> row, double e1,
                             std::span<const ConfusionMatrix> confusions);

// Sum over items of log annotation_likelihood.
double annotation_log_likelihood(const AnnotationMatrix& a, double e1,
                                 std::span<const ConfusionMatrix> confusions);

PosteriorLabels e_step(const AnnotationMatrix& a, double e1,
                       std::span<const ConfusionMatrix> confusions);

// Smoothed count update: (alpha + sum q[s] 1[A=r]) / (2 alpha + sum q[s]).
std::vector<ConfusionMatrix> m_step_confusions(const AnnotationMatrix& a, const PosteriorLabels& q,
                                               double alpha = 1.0);

// Log density of the symmetric Dirichlet(alpha + 1) prior implied by the
// smoothing, up to a constant. EM maximizes log-likelihood plus this term.
double confusion_log_prior(std::span<const ConfusionMatrix> confusions, double alpha);

struct DawidSkeneOptions {
  double alpha = 1.0;
  int max_iterations = 100;
  double tolerance = 1e-10;  // on the penalized log-likelihood
  bool learn_prior = true;
  double prior = 0.5;  // initial (or fixed) P(class 1)
};

struct DawidSkeneResult {
  std::vector<ConfusionMatrix> confusions;
  PosteriorLabels posterior;
  double prior = 0.5;
  std::vector<double> log_likelihood;  // after each M-step
  std::vector<double> penalized;       // log-likelihood + confusion_log_prior
  int iterations = 0;
};

// Classic EM, initialized from vote fractions.
DawidSkeneResult fit_dawid_skene(const AnnotationMatrix& a, const DawidSkeneOptions& options = {});

class KeywordExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PickCandidate {
  std::vector<std::string> tokens;
  int predicted = 0;
  int truth = 0;
};

// Stand-in for a crowd worker in the keyword discovery task: among the
// candidates whose predicted class matches the planted truth, returns the
// unused lexicon token with the highest informativeness x document count,
// ties by token. With probability `noise` it instead picks uniformly among
// any unused token of the correctly predicted microposts.
std::string simulate_keyword_pick(std::span<const PickCandidate> selected,
                                  const std::map<std::string, double>& lexicon,
                                  const std::set<std::string>& used, std::uint64_t seed,
                                  double noise = 0.0);

void save_annotations(const AnnotationMatrix& a, const std::filesystem::path& path);
AnnotationMatrix load_annotations(const std::filesystem::path& path);

}  // namespace hail
