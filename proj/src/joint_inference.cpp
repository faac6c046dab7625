#include "hail/joint_inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <unordered_map>

namespace hail {

std::string to_string(FusionSource s) {
  switch (s) {
    case FusionSource::kInputModel: return "input-model";
    case FusionSource::kCurrentModel: return "current-model";
    case FusionSource::kCrowdOnly: return "crowd-only";
  }
  return "?";
}

FusionSource parse_fusion_source(std::string_view name) {
  if (name == "input-model") return FusionSource::kInputModel;
  if (name == "current-model") return FusionSource::kCurrentModel;
  if (name == "crowd-only") return FusionSource::kCrowdOnly;
  throw std::invalid_argument("unknown fusion source '" + std::string(name) + "'");
}

std::string to_string(CrowdPrior p) { return p == CrowdPrior::kCrowd ? "crowd" : "fused"; }

CrowdPrior parse_crowd_prior(std::string_view name) {
  if (name == "crowd") return CrowdPrior::kCrowd;
  if (name == "fused") return CrowdPrior::kFused;
  throw std::invalid_argument("unknown crowd prior '" + std::string(name) + "'");
}

double fuse_expectation(double crowd_mean, double model_mean) {
  constexpr double kEps = 1e-6;
  const double c = std::clamp(crowd_mean, kEps, 1.0 - kEps);
  const double m = std::clamp(model_mean, kEps, 1.0 - kEps);
  const double pos = c * m;
  return pos / (pos + (1.0 - c) * (1.0 - m));
}

namespace {

std::vector<std::size_t> matched_items(const Corpus& corpus, const std::string& keyword) {
  auto matched = filter_by_keyword(corpus, keyword);
  if (matched.empty()) throw JointFitError("keyword '" + keyword + "' matches no unlabeled micropost");
  return matched;
}

}  // namespace

JointFitResult joint_fit(const AnnotationMatrix& annotations, const TargetModel& model,
                         const Corpus& corpus, std::span<const KeywordRecord> prior_keywords,
                         const std::string& keyword, const TrainingConfig& training,
                         const JointFitConfig& config) {
  if (config.max_rounds < 1) throw std::invalid_argument("joint_fit: max_rounds must be >= 1");
  const auto matched = matched_items(corpus, keyword);
  {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < corpus.unlabeled.size(); ++i) index.emplace(corpus.unlabeled[i].id, i);
    for (const auto& id : annotations.item_ids) {
      auto it = index.find(id);
      if (it == index.end()) throw JointFitError("annotated item '" + id + "' is not an unlabeled micropost");
      if (!std::binary_search(matched.begin(), matched.end(), it->second))
        throw JointFitError("annotated item '" + id + "' does not contain keyword '" + keyword + "'");
    }
  }

  JointFitResult res;
  res.model = model;
  res.report.keyword = keyword;

  std::vector<KeywordRecord> keywords(prior_keywords.begin(), prior_keywords.end());
  keywords.push_back({keyword, 0.5, matched});

  // Standard Dawid-Skene start: soft vote fractions, then a confusion update.
  PosteriorLabels q;
  for (const auto& row : annotations.rows()) {
    double ones = 0.0;
    for (auto [w, l] : row) ones += l;
    const double f = ones / static_cast<double>(row.size());
    q.q.push_back({1.0 - f, f});
  }
  auto confusions = m_step_confusions(annotations, q, config.alpha);
  double e = q.positive_mean();
  double crowd_prior = e;
  const double input_mean = model_expectation(model, matched, corpus, training.parallel);

  TrainingConfig steps = training;
  steps.max_epochs = config.gradient_steps;
  steps.convergence_tolerance = 0.0;

  double prev_j3 = 0.0;
  for (int r = 0; r < config.max_rounds; ++r) {
    JointRound round;
    round.round = r + 1;
    const double prior = config.crowd_prior == CrowdPrior::kFused ? e : crowd_prior;
    round.j3_before = annotation_log_likelihood(annotations, prior, confusions);
    round.penalized_before = round.j3_before + confusion_log_prior(confusions, config.alpha);
    q = e_step(annotations, prior, confusions);
    confusions = m_step_confusions(annotations, q, config.alpha);
    round.j3_after = annotation_log_likelihood(annotations, prior, confusions);
    round.penalized_after = round.j3_after + confusion_log_prior(confusions, config.alpha);

    q = e_step(annotations, prior, confusions);
    const double crowd = q.positive_mean();
    crowd_prior = crowd;
    double model_mean = 0.5;
    switch (config.fusion) {
      case FusionSource::kInputModel: model_mean = input_mean; break;
      case FusionSource::kCurrentModel:
        model_mean = model_expectation(res.model, matched, corpus, training.parallel);
        break;
      case FusionSource::kCrowdOnly: model_mean = 0.5; break;
    }
    const double e_new = config.fusion == FusionSource::kCrowdOnly ? crowd : fuse_expectation(crowd, model_mean);
    round.crowd_mean = crowd;
    round.model_mean = model_mean;
    round.expectation = e_new;

    keywords.back().expectation = e_new;
    if (config.gradient_steps > 0) res.model = train(res.model, corpus, keywords, steps);
    round.j12 = objective(res.model, corpus, keywords, training);
    if (!std::isfinite(round.j12)) throw JointFitError("joint_fit: objective became non-finite");
    res.report.rounds.push_back(round);

    const double de = std::abs(e_new - e);
    const double dj3 = r == 0 ? INFINITY : std::abs(round.j3_after - prev_j3) / std::max(1e-300, std::abs(prev_j3));
    e = e_new;
    prev_j3 = round.j3_after;
    if (dj3 < config.j3_tolerance && de < config.e_tolerance) {
      res.report.converged = true;
      break;
    }
  }

  if (config.final_epochs > 0) {
    TrainingConfig final_cfg = training;
    final_cfg.max_epochs = config.final_epochs;
    res.model = train(res.model, corpus, keywords, final_cfg);
  }

  const double final_prior = config.crowd_prior == CrowdPrior::kFused ? e : crowd_prior;
  res.posterior = e_step(annotations, final_prior, confusions);
  res.confusions = confusions;
  const auto& last = res.report.rounds.back();
  res.estimate = {keyword, e, last.crowd_mean, last.model_mean};
  res.report.final_j12 = objective(res.model, corpus, keywords, training);
  res.report.final_j3 = annotation_log_likelihood(annotations, final_prior, confusions);
  return res;
}

double joint_objective(const TargetModel& model, const Corpus& corpus,
                       std::span<const KeywordRecord> keywords, const AnnotationMatrix& annotations,
                       double e1, std::span<const ConfusionMatrix> confusions,
                       const TrainingConfig& config) {
  double j3 = 0.0;
  for (const auto& row : annotations.rows()) j3 += std::log(annotation_likelihood(row, e1, confusions));
  return objective(model, corpus, keywords, config) + j3;
}

void write_fit_report(const JointFitReport& report, std::ostream& out) {
  char buf[256];
  out << "# keyword\t" << report.keyword << "\n# converged\t" << (report.converged ? 1 : 0) << '\n';
  out << "round\tj12\tj3\te\tcrowd_mean\tmodel_mean\n";
  for (const auto& r : report.rounds) {
    std::snprintf(buf, sizeof buf, "%d\t%.10g\t%.10g\t%.8f\t%.8f\t%.8f\n", r.round, r.j12, r.j3_after,
                  r.expectation, r.crowd_mean, r.model_mean);
    out << buf;
  }
}

}  // namespace hail
