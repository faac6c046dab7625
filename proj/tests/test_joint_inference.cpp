#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "hail/experiments.hpp"
#include "hail/joint_inference.hpp"
#include "hail/rng.hpp"
#include "support.hpp"

using namespace hail;

namespace {

struct Fixture {
  PreparedData data;
  std::vector<std::size_t> matched;
  AnnotationMatrix annotations;
  double relevant_fraction = 0.0;  // over the annotated sample

  explicit Fixture(std::uint64_t seed, std::size_t sample = 120) {
    auto cfg = testing::small_config(seed);
    data = prepare_data(cfg);
    const auto& c = data.data.corpus;
    matched = filter_by_keyword(c, "hack");
    std::vector<std::string> ids;
    std::vector<int> truths;
    for (auto i : sample_for_annotation(matched, sample, seed)) {
      ids.push_back(c.unlabeled[i].id);
      truths.push_back(data.data.truth.labels.at(ids.back()));
    }
    for (int t : truths) relevant_fraction += t;
    relevant_fraction /= static_cast<double>(truths.size());
    std::vector<SimulatedWorker> workers;
    for (int n = 0; n < 5; ++n)
      workers.push_back({ConfusionMatrix::from_accuracy("w" + std::to_string(n), 0.85, 0.85), static_cast<std::uint64_t>(n)});
    annotations = simulate_annotations(ids, truths, workers, seed);
  }

  TargetModel flat_model() const {
    auto m = init_model(ModelKind::kLogistic, {}, data.vocab.size(), 1);
    std::fill(m.params.begin(), m.params.end(), 0.0);
    return m;
  }
};

}  // namespace

TEST_CASE("fusion examples") {
  CHECK(fuse_expectation(0.8, 0.6) == doctest::Approx(0.48 / 0.56).epsilon(1e-12));
  CHECK(std::abs(fuse_expectation(0.8, 0.6) - 0.857143) < 1e-6);
  for (double c : {0.05, 0.2, 0.5, 0.9}) CHECK(fuse_expectation(c, 0.5) == doctest::Approx(c).epsilon(1e-12));
  CHECK(fuse_expectation(0.3, 0.7) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fuse_expectation(0.0, 0.0) > 0.0);
  CHECK(fuse_expectation(1.0, 1.0) < 1.0);
  CHECK(parse_fusion_source(to_string(FusionSource::kCurrentModel)) == FusionSource::kCurrentModel);
  CHECK(parse_crowd_prior(to_string(CrowdPrior::kFused)) == CrowdPrior::kFused);
  CHECK_THROWS(parse_fusion_source("both"));
}

TEST_CASE("joint fit with an uninformative model recovers the crowd estimate") {
  Fixture f(21, 200);
  TrainingConfig training;
  training.lambda = 10.0 * static_cast<double>(f.data.data.corpus.positives.size());
  training.learning_rate = 0.01;
  JointFitConfig jc;
  jc.max_rounds = 5;
  jc.gradient_steps = 3;
  const auto res = joint_fit(f.annotations, f.flat_model(), f.data.data.corpus, {}, "hack", training, jc);
  CHECK(res.estimate.model_mean == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(res.estimate.value - f.relevant_fraction) < 0.05);
  CHECK(res.estimate.value == doctest::Approx(res.estimate.crowd_mean).epsilon(1e-9));
  for (const auto& c : res.confusions) {
    CHECK(std::abs(c.pi[1][1] - 0.85) < 0.15);
    CHECK(std::abs(c.pi[0][0] - 0.85) < 0.15);
  }
  for (const auto& r : res.report.rounds) CHECK(r.penalized_after >= r.penalized_before - 1e-9);
  CHECK(res.posterior.q.size() == f.annotations.num_items());
}

TEST_CASE("fusion sources") {
  Fixture f(22);
  TrainingConfig training;
  training.lambda = 100.0;
  auto model = f.flat_model();
  model.params.back() = 1.0;  // bias: every prediction sigmoid(1)
  JointFitConfig jc;
  jc.max_rounds = 3;
  jc.gradient_steps = 2;
  jc.fusion = FusionSource::kCrowdOnly;
  const auto crowd = joint_fit(f.annotations, model, f.data.data.corpus, {}, "hack", training, jc);
  CHECK(crowd.estimate.value == crowd.estimate.crowd_mean);
  jc.fusion = FusionSource::kInputModel;
  const auto fused = joint_fit(f.annotations, model, f.data.data.corpus, {}, "hack", training, jc);
  const double m = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(fused.estimate.model_mean == doctest::Approx(m).epsilon(1e-12));
  CHECK(fused.estimate.value == doctest::Approx(fuse_expectation(fused.estimate.crowd_mean, m)).epsilon(1e-12));
  CHECK(fused.estimate.value > fused.estimate.crowd_mean);
}

TEST_CASE("joint fit rejects annotations outside the keyword set") {
  Fixture f(23, 30);
  TrainingConfig training;
  auto bad = f.annotations;
  const auto& c = f.data.data.corpus;
  for (std::size_t i = 0; i < c.unlabeled.size(); ++i) {
    const auto& toks = c.unlabeled[i].tokens;
    if (std::find(toks.begin(), toks.end(), "hack") == toks.end()) {
      bad.item_ids[0] = c.unlabeled[i].id;
      break;
    }
  }
  CHECK_THROWS_AS(joint_fit(bad, f.flat_model(), c, {}, "hack", training), JointFitError);
  bad.item_ids[0] = "nope";
  CHECK_THROWS_AS(joint_fit(bad, f.flat_model(), c, {}, "hack", training), JointFitError);
  CHECK_THROWS_AS(joint_fit(f.annotations, f.flat_model(), c, {}, "zzzz", training), JointFitError);
  JointFitConfig jc;
  jc.max_rounds = 0;
  CHECK_THROWS(joint_fit(f.annotations, f.flat_model(), c, {}, "hack", training, jc));
}

TEST_CASE("fit report text") {
  Fixture f(24, 30);
  TrainingConfig training;
  JointFitConfig jc;
  jc.max_rounds = 2;
  jc.gradient_steps = 1;
  const auto res = joint_fit(f.annotations, f.flat_model(), f.data.data.corpus, {}, "hack", training, jc);
  std::ostringstream out;
  write_fit_report(res.report, out);
  const auto text = out.str();
  CHECK(text.rfind("# keyword\thack\n", 0) == 0);
  CHECK(text.find("round\tj12\tj3\te\tcrowd_mean\tmodel_mean\n") != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3 + static_cast<long>(res.report.rounds.size()));
}

TEST_CASE("planted expectation is recovered from a small crowd") {
  // 500 matched microposts, 150 relevant; 50 sampled, three workers at 0.85.
  double mean = 0.0;
  int near_planted = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng(seed);
    Corpus c;
    auto post = [&](const std::string& id, const char* head) {
      std::string text = head;
      for (int k = 0; k < 4; ++k) text += " w" + std::to_string(rng.below(30));
      return Micropost{id, text, tokenize(text), {}};
    };
    std::map<std::string, int> truth;
    for (int i = 0; i < 20; ++i) c.positives.push_back(post("p" + std::to_string(i), "misc"));
    for (int i = 0; i < 500; ++i) {
      c.unlabeled.push_back(post("u" + std::to_string(i), "hack"));
      truth[c.unlabeled.back().id] = i < 150;
    }
    c.test.push_back({post("t0", "misc"), 1});
    const auto vocab = build_vocabulary(c, 1);
    vectorize_corpus(c, vocab);
    std::vector<std::string> ids;
    std::vector<int> ys;
    for (auto i : sample_for_annotation(filter_by_keyword(c, "hack"), 50, seed)) {
      ids.push_back(c.unlabeled[i].id);
      ys.push_back(truth[ids.back()]);
    }
    std::vector<SimulatedWorker> workers;
    for (int n = 0; n < 3; ++n)
      workers.push_back({ConfusionMatrix::from_accuracy("w" + std::to_string(n), 0.85, 0.85), seed * 10 + n});
    const auto a = simulate_annotations(ids, ys, workers, seed);
    auto model = init_model(ModelKind::kLogistic, {}, vocab.size(), 1);
    std::fill(model.params.begin(), model.params.end(), 0.0);
    TrainingConfig training;
    training.lambda = 200.0;
    JointFitConfig jc;
    jc.gradient_steps = 1;
    const auto fit = joint_fit(a, model, c, {}, "hack", training, jc);
    near_planted += std::abs(fit.estimate.value - 0.3) <= 0.07;
    mean += fit.estimate.value / 50.0;
  }
  CHECK(std::abs(mean - 0.3) <= 0.07);
  MESSAGE(near_planted << "/50 seeds within 0.07 of the planted value");
}
