#include <vector>

#include <omp.h>

#include "doctest.h"
#include "hail/kernels.hpp"
#include "hail/rng.hpp"

using namespace hail;

namespace {

std::vector<SparseRow> random_rows(std::size_t n, std::size_t dim, Rng& rng) {
  std::vector<SparseRow> rows(n);
  for (auto& r : rows) {
    for (std::size_t j = 0; j < dim; ++j)
      if (rng.bernoulli(0.3)) r.push_back({static_cast<std::int32_t>(j), 1.0 + static_cast<double>(rng.below(3))});
  }
  return rows;
}

void check_equivalent(const TargetModel& m, const std::vector<SparseRow>& data, Rng& rng) {
  std::vector<const SparseRow*> rows;
  for (const auto& r : data) rows.push_back(&r);
  kernels::Activations a, b;
  kernels::forward_serial(m, rows, a);
  kernels::forward_parallel(m, rows, b);
  CHECK(a.probs == b.probs);
  CHECK(a.logits == b.logits);
  CHECK(a.hidden == b.hidden);

  std::vector<double> dlogit(rows.size());
  for (auto& d : dlogit) d = rng.normal();
  std::vector<double> ga(m.num_params(), 0.5), gb(m.num_params(), 0.5);
  kernels::backward_serial(m, rows, a, dlogit, ga);
  kernels::backward_parallel(m, rows, b, dlogit, gb);
  CHECK(ga == gb);
}

}  // namespace

TEST_CASE("parallel kernels reproduce the serial reference bit for bit") {
  omp_set_num_threads(3);
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const auto data = random_rows(300, 40, rng);
    const std::vector<std::size_t> none, one = {16}, two = {12, 6};
    check_equivalent(init_model(ModelKind::kLogistic, none, 40, 100 + trial), data, rng);
    check_equivalent(init_model(ModelKind::kMlp, one, 40, 200 + trial), data, rng);
    check_equivalent(init_model(ModelKind::kMlp, two, 40, 300 + trial), data, rng);
  }
}

TEST_CASE("backward accumulates into the gradient buffer") {
  Rng rng(3);
  const auto data = random_rows(20, 10, rng);
  std::vector<const SparseRow*> rows;
  for (const auto& r : data) rows.push_back(&r);
  const std::vector<std::size_t> hidden = {4};
  const auto m = init_model(ModelKind::kMlp, hidden, 10, 9);
  kernels::Activations acts;
  kernels::forward_serial(m, rows, acts);
  std::vector<double> dlogit(rows.size(), 1.0), g0(m.num_params(), 0.0), g1(m.num_params(), 1.0);
  kernels::backward_serial(m, rows, acts, dlogit, g0);
  kernels::backward_serial(m, rows, acts, dlogit, g1);
  for (std::size_t k = 0; k < g0.size(); ++k) CHECK(g1[k] == doctest::Approx(g0[k] + 1.0).epsilon(1e-12));
}

TEST_CASE("logistic forward is the sigmoid of the affine score") {
  TargetModel m;
  m.kind = ModelKind::kLogistic;
  m.input_dim = 3;
  m.params.assign(m.num_params(), 0.0);
  const auto layer = m.layers().at(0);
  m.params[layer.weight_offset + 0] = 0.5;
  m.params[layer.weight_offset + 2] = -1.0;
  m.params[layer.bias_offset] = 0.25;
  const SparseRow x = {{0, 2.0}, {2, 1.0}};
  std::vector<const SparseRow*> rows = {&x};
  kernels::Activations acts;
  kernels::forward_serial(m, rows, acts);
  CHECK(acts.probs[0] == doctest::Approx(1.0 / (1.0 + std::exp(-0.25))).epsilon(1e-15));
  CHECK(kernels::sigmoid(-800.0) >= 0.0);
  CHECK(kernels::sigmoid(800.0) <= 1.0);
}
