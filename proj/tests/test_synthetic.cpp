#include <algorithm>

#include "doctest.h"
#include "hail/synthetic.hpp"
#include "support.hpp"

using namespace hail;

namespace {

// Relevant share among unlabeled microposts containing the token.
std::pair<double, std::size_t> empirical(const SyntheticCorpus& s, const std::string& token) {
  std::size_t hits = 0, relevant = 0;
  for (const auto& p : s.corpus.unlabeled) {
    if (std::find(p.tokens.begin(), p.tokens.end(), token) == p.tokens.end()) continue;
    ++hits;
    relevant += static_cast<std::size_t>(s.truth.labels.at(p.id));
  }
  return {hits ? static_cast<double>(relevant) / static_cast<double>(hits) : 0.0, hits};
}

}  // namespace

TEST_CASE("planted expectation of the initial keyword") {
  auto spec = SyntheticSpec::desk_default();
  spec.seed = 3;
  const auto s = generate_synthetic_corpus(spec);
  const auto [frac, hits] = empirical(s, "hack");
  CHECK(hits >= 1800);
  CHECK(hits <= 2200);
  CHECK(std::abs(frac - 0.20) <= 0.02);
  CHECK(s.truth.initial_keyword == "hack");
  CHECK(s.truth.expectations.at("breach") == 0.85);
}

TEST_CASE("every planted keyword converges as the corpus grows") {
  auto spec = SyntheticSpec::desk_default();
  spec.n_unlabeled = 60000;
  spec.seed = 8;
  const auto s = generate_synthetic_corpus(spec);
  for (const auto& k : spec.keywords) {
    const auto [frac, hits] = empirical(s, k.token);
    CHECK(hits > 2000);
    CHECK(std::abs(frac - k.expectation) <= 0.02);
  }
}

TEST_CASE("split sizes") {
  const auto shape = SyntheticSpec::cyber_attack_shape();
  CHECK(shape.n_positive == 2600);
  CHECK(shape.n_unlabeled == 86000);
  CHECK(shape.n_test == 500);
  auto spec = SyntheticSpec::desk_default();
  spec.n_positive = 40;
  spec.n_unlabeled = 300;
  spec.n_test = 25;
  const auto s = generate_synthetic_corpus(spec);
  CHECK(s.corpus.positives.size() == 40);
  CHECK(s.corpus.unlabeled.size() == 300);
  CHECK(s.corpus.test.size() == 25);
  CHECK(s.truth.labels.size() == 365);
  for (const auto& p : s.corpus.positives) CHECK(s.truth.labels.at(p.id) == 1);
  for (const auto& t : s.corpus.test) CHECK(s.truth.labels.at(t.post.id) == t.label);
  CHECK(s.truth.workers.size() == spec.workers.n_workers);
}

TEST_CASE("a keyword planted at 1.0 only marks relevant microposts") {
  SyntheticSpec spec;
  spec.n_background_tokens = 0;
  spec.keywords = {{"alarm", 1.0, 0.05, {}, -1.0}};
  spec.n_unlabeled = 3000;
  const auto s = generate_synthetic_corpus(spec);
  const auto [frac, hits] = empirical(s, "alarm");
  CHECK(hits > 0);
  CHECK(frac == 1.0);
}

TEST_CASE("infeasible and malformed specs are rejected") {
  SyntheticSpec spec;
  spec.class_balance = 0.1;
  spec.keywords = {{"alarm", 0.9, 0.5, {}, -1.0}};  // needs 4.5x the relevant microposts
  CHECK_THROWS_AS(generate_synthetic_corpus(spec), SyntheticSpecError);
  spec.keywords = {{"alarm", 1.5, 0.05, {}, -1.0}};
  CHECK_THROWS_AS(generate_synthetic_corpus(spec), SyntheticSpecError);
  spec.keywords = {{"Two words", 0.5, 0.05, {}, -1.0}};
  CHECK_THROWS_AS(generate_synthetic_corpus(spec), SyntheticSpecError);
  spec.keywords = {{"alarm", 0.1, 0.05, {99}, -1.0}};
  CHECK_THROWS_AS(generate_synthetic_corpus(spec), SyntheticSpecError);
  spec.keywords.clear();
  spec.n_test = 0;
  CHECK_THROWS_AS(generate_synthetic_corpus(spec), SyntheticSpecError);
}

TEST_CASE("generation is a function of the seed") {
  auto spec = SyntheticSpec::desk_default();
  spec.n_unlabeled = 500;
  const auto a = generate_synthetic_corpus(spec);
  const auto b = generate_synthetic_corpus(spec);
  CHECK(a.corpus.unlabeled.back().text == b.corpus.unlabeled.back().text);
  CHECK(a.truth.labels == b.truth.labels);
  spec.seed = 2;
  CHECK(generate_synthetic_corpus(spec).corpus.unlabeled.back().text != a.corpus.unlabeled.back().text);
}

TEST_CASE("planted truth round trip") {
  const auto dir = testing::scratch_dir("truth_rt");
  auto spec = SyntheticSpec::desk_default();
  spec.n_unlabeled = 200;
  const auto s = generate_synthetic_corpus(spec);
  save_planted_truth(s.truth, dir);
  const auto back = load_planted_truth(dir);
  CHECK(back.labels == s.truth.labels);
  CHECK(back.lexicon == s.truth.lexicon);
  CHECK(back.expectations == s.truth.expectations);
  CHECK(back.initial_keyword == "hack");
  REQUIRE(back.workers.size() == s.truth.workers.size());
  CHECK(back.workers[0].confusion.pi == s.truth.workers[0].confusion.pi);
  CHECK(back.workers[0].seed == s.truth.workers[0].seed);
}
