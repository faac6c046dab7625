#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "hail/metrics.hpp"
#include "hail/rng.hpp"

using namespace hail;

namespace {

// Ranks each item by counting who is ahead of it, then averages precision
// at the positives in rank order.
double brute_ap(const std::vector<double>& s, const std::vector<int>& y) {
  const std::size_t n = s.size();
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (s[j] > s[i] || (s[j] == s[i] && j < i)) ++ahead;
    rank[i] = ahead + 1;
  }
  std::vector<std::size_t> pos_ranks;
  for (std::size_t i = 0; i < n; ++i)
    if (y[i] == 1) pos_ranks.push_back(rank[i]);
  std::sort(pos_ranks.begin(), pos_ranks.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < pos_ranks.size(); ++k)
    sum += static_cast<double>(k + 1) / static_cast<double>(pos_ranks[k]);
  return sum / static_cast<double>(pos_ranks.size());
}

double brute_accuracy(const std::vector<double>& s, const std::vector<int>& y, double t) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < s.size(); ++i) ok += ((s[i] >= t ? 1 : 0) == y[i]) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(s.size());
}

}  // namespace

TEST_CASE("average precision worked examples") {
  const std::vector<double> s = {0.9, 0.8, 0.7};
  const std::vector<int> y = {1, 0, 1};
  CHECK(std::abs(auc_pr(s, y) - (1.0 + 2.0 / 3.0) / 2.0) < 1e-15);
  CHECK(std::abs(auc_pr(s, y) - 0.8333) < 1e-4);
  CHECK(auc_pr(std::vector<double>{0.9, 0.1, 0.8}, std::vector<int>{1, 0, 1}) == 1.0);
  // All scores tied: stable order puts a positive at every fifth rank.
  std::vector<double> flat(20, 0.5);
  std::vector<int> every5(20, 0);
  for (std::size_t i = 4; i < 20; i += 5) every5[i] = 1;
  CHECK(auc_pr(flat, every5) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS(auc_pr(s, std::vector<int>{0, 0, 0}));
  CHECK_THROWS(auc_pr(s, std::vector<int>{1, 0}));
}

TEST_CASE("accuracy worked examples") {
  std::vector<double> zeros(100, 0.0);
  std::vector<int> y(100, 0);
  std::fill(y.begin(), y.begin() + 27, 1);
  CHECK(accuracy(zeros, y) == doctest::Approx(0.73).epsilon(1e-15));
  CHECK(accuracy(std::vector<double>{0.5}, std::vector<int>{1}) == 1.0);
  CHECK(accuracy(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
  CHECK_THROWS(accuracy(std::vector<double>{}, std::vector<int>{}));
}

TEST_CASE("metrics equal brute-force references on random instances") {
  Rng rng(314);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(1000);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const bool coarse = trial % 3 == 0;  // many ties
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform();
      y[i] = rng.bernoulli(0.3) ? 1 : 0;
    }
    y[rng.below(n)] = 1;
    CHECK(auc_pr(s, y) == brute_ap(s, y));
    const double t = rng.uniform();
    CHECK(accuracy(s, y, t) == brute_accuracy(s, y, t));
  }
}

TEST_CASE("average precision ignores strictly monotone rescoring") {
  Rng rng(2);
  std::vector<double> s(300);
  std::vector<int> y(300);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.uniform();
    y[i] = rng.bernoulli(0.25) ? 1 : 0;
  }
  y[0] = 1;
  std::vector<double> t(s.size());
  std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::exp(3.0 * v) - 7.0; });
  CHECK(auc_pr(s, y) == auc_pr(t, y));
}
