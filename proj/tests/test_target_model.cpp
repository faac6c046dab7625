#include <cmath>
#include <numeric>

#include "doctest.h"
#include "hail/rng.hpp"
#include "hail/target_model.hpp"
#include "support.hpp"

using namespace hail;

namespace {

// Random bag-of-words corpus over `dim` tokens with rows already filled.
Corpus random_corpus(std::size_t dim, std::size_t n_pos, std::size_t n_unl, Rng& rng) {
  Corpus c;
  auto row = [&] {
    SparseRow r;
    for (std::size_t j = 0; j < dim; ++j)
      if (rng.bernoulli(0.4)) r.push_back({static_cast<std::int32_t>(j), 1.0 + static_cast<double>(rng.below(2))});
    return r;
  };
  for (std::size_t i = 0; i < n_pos; ++i) c.positives.push_back({"p" + std::to_string(i), "", {}, row()});
  for (std::size_t i = 0; i < n_unl; ++i) c.unlabeled.push_back({"u" + std::to_string(i), "", {}, row()});
  return c;
}

std::vector<KeywordRecord> random_keywords(std::size_t n_unl, Rng& rng) {
  std::vector<KeywordRecord> ks;
  for (int k = 0; k < 2; ++k) {
    KeywordRecord r{"k" + std::to_string(k), 0.05 + 0.9 * rng.uniform(), {}};
    for (std::size_t i = 0; i < n_unl; ++i)
      if (rng.bernoulli(0.5)) r.matched.push_back(i);
    if (r.matched.empty()) r.matched.push_back(0);
    ks.push_back(std::move(r));
  }
  return ks;
}

double norm(const std::vector<double>& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

}  // namespace

TEST_CASE("bernoulli KL") {
  // 0.2 ln 0.4 + 0.8 ln 1.6
  CHECK(bernoulli_kl(0.2, 0.5) == doctest::Approx(0.19274475702175753).epsilon(1e-12));
  CHECK(std::abs(bernoulli_kl(0.2, 0.5) - 0.192745) < 1e-6);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double p = rng.uniform(), q = rng.uniform();
    CHECK(bernoulli_kl(p, q) >= 0.0);
    CHECK(bernoulli_kl(p, p) == doctest::Approx(0.0).epsilon(1e-12));
  }
  CHECK(bernoulli_kl(0.3, 0.3) == 0.0);
  CHECK(bernoulli_kl(0.3, 0.31) > 0.0);
  CHECK(std::isfinite(bernoulli_kl(0.5, 0.0)));
  CHECK(std::isfinite(bernoulli_kl(0.5, 1.0)));
}

TEST_CASE("gradient matches central differences") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const bool mlp = trial % 2 == 1;
    const std::size_t dim = mlp ? 6 : 10;
    const std::vector<std::size_t> hidden = mlp ? std::vector<std::size_t>{5} : std::vector<std::size_t>{};
    auto model = init_model(mlp ? ModelKind::kMlp : ModelKind::kLogistic, hidden, dim, 77 + trial);
    REQUIRE(model.num_params() <= 50);
    for (auto& p : model.params) p += 0.3 * rng.normal();
    const auto corpus = random_corpus(dim, 15, 25, rng);
    const auto keywords = random_keywords(25, rng);
    TrainingConfig cfg;
    cfg.lambda = 5.0 + 20.0 * rng.uniform();
    cfg.prior_sigma = 1.0 + rng.uniform();
    cfg.parallel = false;
    std::vector<SoftLabel> extra = {{3, 0.8}, {7, 0.1}};

    const auto g = gradient(model, corpus, keywords, cfg, extra);
    std::vector<double> fd(g.size());
    const double h = 1e-5;
    for (std::size_t k = 0; k < g.size(); ++k) {
      auto plus = model, minus = model;
      plus.params[k] += h;
      minus.params[k] -= h;
      fd[k] = (objective(plus, corpus, keywords, cfg, extra) - objective(minus, corpus, keywords, cfg, extra)) / (2 * h);
    }
    std::vector<double> diff(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) diff[k] = g[k] - fd[k];
    CHECK(norm(diff) / std::max(norm(g), 1e-12) < 1e-4);
  }
}

TEST_CASE("objective of logistic regression against a hand computation") {
  Rng rng(8);
  const auto corpus = random_corpus(4, 6, 9, rng);
  const auto keywords = random_keywords(9, rng);
  auto model = init_model(ModelKind::kLogistic, {}, 4, 5);
  for (auto& p : model.params) p = rng.normal();
  TrainingConfig cfg;
  cfg.lambda = 3.0;
  cfg.prior_sigma = 2.0;
  const auto layer = model.layers().at(0);
  auto prob = [&](const SparseRow& x) {
    double z = model.params[layer.bias_offset];
    for (auto [j, v] : x) z += v * model.params[layer.weight_offset + static_cast<std::size_t>(j)];
    return 1.0 / (1.0 + std::exp(-z));
  };
  double expected = 0.0;
  for (const auto& p : corpus.positives) expected += std::log(prob(p.bow));
  for (const auto& k : keywords) {
    double mean = 0.0;
    for (auto i : k.matched) mean += prob(corpus.unlabeled[i].bow);
    mean /= static_cast<double>(k.matched.size());
    const double e = k.expectation;
    expected -= cfg.lambda * (e * std::log(e / mean) + (1 - e) * std::log((1 - e) / (1 - mean)));
  }
  double sq = 0.0;
  for (double t : model.params) sq += t * t;
  expected -= sq / (2.0 * 4.0);
  CHECK(objective(model, corpus, keywords, cfg) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("training reaches the best point of a parameter grid") {
  // One token, logistic regression: two parameters, so the objective can be
  // maximized by brute force over a grid.
  Corpus c;
  for (int i = 0; i < 10; ++i) c.positives.push_back({"p" + std::to_string(i), "", {}, {{0, 1.0}}});
  for (int i = 0; i < 20; ++i) c.unlabeled.push_back({"u" + std::to_string(i), "", {}, i < 10 ? SparseRow{{0, 1.0}} : SparseRow{}});
  std::vector<KeywordRecord> ks = {{"k", 0.3, {}}};
  for (std::size_t i = 0; i < 20; ++i) ks[0].matched.push_back(i);
  TrainingConfig cfg;
  cfg.lambda = 20.0;
  cfg.prior_sigma = 3.0;
  cfg.learning_rate = 0.05;
  cfg.max_epochs = 3000;
  auto m0 = init_model(ModelKind::kLogistic, {}, 1, 1);
  const auto trained = train(m0, c, ks, cfg);

  double best = -INFINITY;
  auto probe = m0;
  for (double w = -8; w <= 8; w += 0.02)
    for (double b = -8; b <= 8; b += 0.02) {
      probe.params = {w, b};
      best = std::max(best, objective(probe, c, ks, cfg));
    }
  CHECK(objective(trained, c, ks, cfg) >= best - 1e-3);
}

TEST_CASE("training never returns a worse point than its start") {
  Rng rng(4);
  const auto corpus = random_corpus(8, 10, 20, rng);
  const auto ks = random_keywords(20, rng);
  const std::vector<std::size_t> hidden = {4};
  const auto m0 = init_model(ModelKind::kMlp, hidden, 8, 3);
  TrainingConfig cfg;
  cfg.lambda = 50.0;
  cfg.learning_rate = 0.5;  // deliberately unstable
  cfg.max_epochs = 20;
  TrainingTrace trace;
  const auto m1 = train(m0, corpus, ks, cfg, {}, &trace);
  CHECK(objective(m1, corpus, ks, cfg) >= objective(m0, corpus, ks, cfg));
  CHECK(trace.steps == 20);
  cfg.parallel = false;
  CHECK(train(m0, corpus, ks, cfg).params == m1.params);
}

TEST_CASE("model construction and prediction") {
  const std::vector<std::size_t> none, hidden = {3, 2};
  CHECK(parameter_count(5, none) == 6);
  CHECK(parameter_count(5, hidden) == 5 * 3 + 3 + 3 * 2 + 2 + 2 + 1);
  CHECK_THROWS(init_model(ModelKind::kLogistic, hidden, 5, 1));
  CHECK_THROWS(init_model(ModelKind::kMlp, none, 5, 1));
  CHECK_THROWS(init_model(ModelKind::kLogistic, none, 0, 1));
  const auto m = init_model(ModelKind::kMlp, hidden, 5, 1);
  CHECK(init_model(ModelKind::kMlp, hidden, 5, 1).params == m.params);
  const double p = predict(m, {{1, 2.0}});
  CHECK(p > 0.0);
  CHECK(p < 1.0);
  CHECK(parse_model_kind(to_string(ModelKind::kMlp)) == ModelKind::kMlp);
  CHECK_THROWS(parse_model_kind("svm"));
  TrainingConfig bad;
  bad.lambda = -1;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("checkpoint round trip is exact") {
  const auto dir = testing::scratch_dir("ckpt");
  const std::vector<std::size_t> hidden = {7};
  auto m = init_model(ModelKind::kMlp, hidden, 9, 42);
  m.vocab_fingerprint = 0xdeadbeefcafef00dULL;
  m.params[0] = 1.0 / 3.0;
  save_checkpoint(m, dir / "m.ckpt");
  const auto back = load_checkpoint(dir / "m.ckpt");
  CHECK(back.params == m.params);
  CHECK(back.hidden == m.hidden);
  CHECK(back.vocab_fingerprint == m.vocab_fingerprint);
  CHECK(back.kind == m.kind);
  {
    std::ofstream out(dir / "bad.ckpt");
    out << "something else\n";
  }
  CHECK_THROWS(load_checkpoint(dir / "bad.ckpt"));
}
