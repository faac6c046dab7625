#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hail/corpus.hpp"
#include "hail/crowd_model.hpp"
#include "hail/target_model.hpp"

namespace hail {

struct ExpectationEstimate {
  std::string keyword;
  double value = 0.5;        // fused e^(t)
  double crowd_mean = 0.5;   // mean posterior label of the annotated sample
  double model_mean = 0.5;   // model expectation over U^(t) used in the fusion
};

// Which model expectation enters the fusion each round.
enum class FusionSource {
  // The model as it was handed to joint_fit, before it saw this keyword's
  // constraint. Independent of the crowd estimate, so the product is stable.
  kInputModel,
  // The model being trained inside the fit. It is pulled toward the fused
  // value it is then fused with, so repeated rounds compound the crowd
  // estimate toward 0 or 1; kept for comparison.
  kCurrentModel,
  // Ignore the model; e is the crowd posterior mean.
  kCrowdOnly,
};

std::string to_string(FusionSource s);
FusionSource parse_fusion_source(std::string_view name);

// Class prior used by the crowd E-step each round.
enum class CrowdPrior {
  // The crowd's own prior, re-estimated as the posterior mean (plain
  // Dawid-Skene); the fused value only reaches the model.
  kCrowd,
  // The fused e from the previous round. Each round then multiplies in the
  // model's odds again, and the crowd posterior can drift to the opposite
  // solution when the model disagrees with the crowd.
  kFused,
};

std::string to_string(CrowdPrior p);
CrowdPrior parse_crowd_prior(std::string_view name);

struct JointFitConfig {
  int max_rounds = 50;
  int gradient_steps = 25;  // Adam steps per round
  double alpha = 1.0;       // confusion smoothing
  double j3_tolerance = 1e-6;
  double e_tolerance = 1e-4;
  // Adam epochs on the final keyword set once the rounds settle; 0 skips.
  int final_epochs = 0;
  FusionSource fusion = FusionSource::kInputModel;
  CrowdPrior crowd_prior = CrowdPrior::kCrowd;
};

struct JointRound {
  int round = 0;
  double expectation = 0.5;
  double crowd_mean = 0.5;
  double model_mean = 0.5;
  // J3 at this round's prior before and after the confusion update, and the
  // same pair including the smoothing prior (the quantity EM ascends).
  double j3_before = 0.0;
  double j3_after = 0.0;
  double penalized_before = 0.0;
  double penalized_after = 0.0;
  double j12 = 0.0;  // J1 + J2 after the round's gradient steps
};

struct JointFitReport {
  std::string keyword;
  std::vector<JointRound> rounds;
  double final_j12 = 0.0;
  double final_j3 = 0.0;
  bool converged = false;
};

struct JointFitResult {
  ExpectationEstimate estimate;
  std::vector<ConfusionMatrix> confusions;
  PosteriorLabels posterior;
  TargetModel model;
  JointFitReport report;
};

class JointFitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// e = c m / (c m + (1-c)(1-m)), inputs clamped to [1e-6, 1 - 1e-6].
double fuse_expectation(double crowd_mean, double model_mean);

// Outer EM over one keyword: crowd E-step with prior e, confusion M-step,
// fused expectation update, then gradient steps on J1 + J2 with the prior
// keywords plus (keyword, e). A's item ids must be unlabeled micropost ids.
JointFitResult joint_fit(const AnnotationMatrix& annotations, const TargetModel& model,
                         const Corpus& corpus, std::span<const KeywordRecord> prior_keywords,
                         const std::string& keyword, const TrainingConfig& training,
                         const JointFitConfig& config = {});

// J1 + J2 + J3 for diagnostics.
double joint_objective(const TargetModel& model, const Corpus& corpus,
                       std::span<const KeywordRecord> keywords, const AnnotationMatrix& annotations,
                       double e1, std::span<const ConfusionMatrix> confusions,
                       const TrainingConfig& config);

// Tab-separated: round, J1+J2, J3, e, crowd mean, model mean.
void write_fit_report(const JointFitReport& report, std::ostream& out);

}  // namespace hail
