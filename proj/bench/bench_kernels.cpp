// Serial reference vs OpenMP kernels on the desk-scale corpus.
//
//   bench_kernels [--benchmark_filter=...]
//
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "hail/config.hpp"
#include "hail/experiments.hpp"
#include "hail/kernels.hpp"
#include "hail/target_model.hpp"

using namespace hail;

namespace {

struct Setup {
  PreparedData data;
  std::vector<const SparseRow*> rows;
  std::vector<KeywordRecord> keywords;

  Setup() : data(prepare_data(Config{})) {
    for (const auto& p : data.data.corpus.unlabeled) rows.push_back(&p.bow);
    keywords.push_back({"hack", 0.2, filter_by_keyword(data.data.corpus, "hack")});
    keywords.push_back({"breach", 0.85, filter_by_keyword(data.data.corpus, "breach")});
  }

  TargetModel model(ModelKind kind) const {
    const std::vector<std::size_t> hidden = kind == ModelKind::kMlp ? std::vector<std::size_t>{64}
                                                                     : std::vector<std::size_t>{};
    return init_model(kind, hidden, data.vocab.size(), 7);
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

void forward(benchmark::State& state, ModelKind kind, bool parallel) {
  const auto& s = setup();
  const auto m = s.model(kind);
  kernels::Activations acts;
  for (auto _ : state) {
    kernels::forward(m, s.rows, acts, parallel);
    benchmark::DoNotOptimize(acts.probs.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.rows.size()));
}

void backward(benchmark::State& state, ModelKind kind, bool parallel) {
  const auto& s = setup();
  const auto m = s.model(kind);
  kernels::Activations acts;
  kernels::forward(m, s.rows, acts, false);
  std::vector<double> dlogit(s.rows.size());
  for (std::size_t i = 0; i < dlogit.size(); ++i) dlogit[i] = acts.probs[i] - 0.5;
  std::vector<double> grad(m.num_params());
  for (auto _ : state) {
    std::fill(grad.begin(), grad.end(), 0.0);
    kernels::backward(m, s.rows, acts, dlogit, grad, parallel);
    benchmark::DoNotOptimize(grad.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.rows.size()));
}

void objective_gradient(benchmark::State& state, ModelKind kind, bool parallel) {
  const auto& s = setup();
  const auto m = s.model(kind);
  TrainingConfig cfg;
  cfg.lambda = 10.0 * static_cast<double>(s.data.data.corpus.positives.size());
  cfg.parallel = parallel;
  for (auto _ : state) {
    auto g = gradient(m, s.data.data.corpus, s.keywords, cfg);
    benchmark::DoNotOptimize(g.data());
  }
}

}  // namespace

BENCHMARK_CAPTURE(forward, lr_serial, ModelKind::kLogistic, false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(forward, lr_parallel, ModelKind::kLogistic, true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(forward, mlp_serial, ModelKind::kMlp, false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(forward, mlp_parallel, ModelKind::kMlp, true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(backward, lr_serial, ModelKind::kLogistic, false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(backward, lr_parallel, ModelKind::kLogistic, true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(backward, mlp_serial, ModelKind::kMlp, false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(backward, mlp_parallel, ModelKind::kMlp, true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(objective_gradient, mlp_serial, ModelKind::kMlp, false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(objective_gradient, mlp_parallel, ModelKind::kMlp, true)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
