#include "hail/target_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "hail/kernels.hpp"
#include "hail/rng.hpp"

namespace hail {

std::string to_string(ModelKind kind) { return kind == ModelKind::kLogistic ? "lr" : "mlp"; }

ModelKind parse_model_kind(std::string_view name) {
  if (name == "lr" || name == "LR" || name == "logistic") return ModelKind::kLogistic;
  if (name == "mlp" || name == "MLP") return ModelKind::kMlp;
  throw std::invalid_argument("unknown model kind '" + std::string(name) + "'");
}

std::vector<LayerShape> TargetModel::layers() const {
  std::vector<LayerShape> out;
  std::size_t offset = 0;
  std::size_t in = input_dim;
  const auto add = [&](std::size_t width) {
    LayerShape s{in, width, offset, offset + in * width};
    offset += in * width + width;
    out.push_back(s);
    in = width;
  };
  for (std::size_t h : hidden) add(h);
  add(1);
  return out;
}

std::size_t parameter_count(std::size_t input_dim, std::span<const std::size_t> hidden) {
  std::size_t n = 0, in = input_dim;
  for (std::size_t h : hidden) {
    n += in * h + h;
    in = h;
  }
  return n + in + 1;
}

std::size_t TargetModel::num_params() const { return parameter_count(input_dim, hidden); }

void TrainingConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(prior_sigma > 0.0)) throw std::invalid_argument("prior_sigma must be > 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
    throw std::invalid_argument("Adam betas must lie in (0, 1)");
  if (!(adam_epsilon > 0.0)) throw std::invalid_argument("adam_epsilon must be > 0");
  if (max_epochs < 0 || batch_size < 0) throw std::invalid_argument("max_epochs and batch_size must be >= 0");
  if (!(unlabeled_negative_weight >= 0.0))
    throw std::invalid_argument("unlabeled_negative_weight must be >= 0");
}

TargetModel init_model(ModelKind kind, std::span<const std::size_t> hidden, std::size_t input_dim,
                       std::uint64_t seed) {
  if (input_dim < 1) throw std::invalid_argument("init_model: input_dim must be >= 1");
  if (kind == ModelKind::kLogistic && !hidden.empty())
    throw std::invalid_argument("init_model: logistic regression takes no hidden layers");
  if (kind == ModelKind::kMlp && hidden.empty())
    throw std::invalid_argument("init_model: MLP needs at least one hidden layer");
  for (std::size_t h : hidden)
    if (h < 1) throw std::invalid_argument("init_model: hidden widths must be >= 1");

  TargetModel m;
  m.kind = kind;
  m.input_dim = input_dim;
  m.hidden.assign(hidden.begin(), hidden.end());
  m.params.assign(m.num_params(), 0.0);
  Rng rng(derive_seed(seed, {hash_string("init")}));
  // Glorot-uniform weights, zero biases.
  for (const LayerShape& s : m.layers()) {
    const double a = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
    for (std::size_t k = 0; k < s.in * s.out; ++k)
      m.params[s.weight_offset + k] = a * (2.0 * rng.uniform() - 1.0);
  }
  return m;
}

double predict(const TargetModel& model, const SparseRow& x) {
  const SparseRow* rows[] = {&x};
  kernels::Activations acts;
  kernels::forward_parallel(model, rows, acts);
  return acts.probs[0];
}

double model_expectation(const TargetModel& model, std::span<const std::size_t> matched,
                         const Corpus& corpus, bool parallel) {
  if (matched.empty()) throw std::invalid_argument("model_expectation: empty matched set");
  std::vector<const SparseRow*> rows;
  rows.reserve(matched.size());
  for (std::size_t i : matched) rows.push_back(&corpus.unlabeled.at(i).bow);
  const auto probs = kernels::predict_batch(model, rows, parallel);
  return std::accumulate(probs.begin(), probs.end(), 0.0) / static_cast<double>(probs.size());
}

double bernoulli_kl(double p, double q) {
  q = std::clamp(q, kProbabilityClamp, 1.0 - kProbabilityClamp);
  double kl = 0.0;
  if (p > 0.0) kl += p * std::log(p / q);
  if (p < 1.0) kl += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
  return std::max(kl, 0.0);
}

namespace {

double clamped_log(double p) {
  return std::log(std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp));
}

bool inside_clamp(double p) { return p >= kProbabilityClamp && p <= 1.0 - kProbabilityClamp; }

// Precomputed row layout for one training problem: L rows first, then the
// unlabeled rows any term needs, each stored once.
class Problem {
 public:
  Problem(const Corpus& corpus, std::span<const KeywordRecord> keywords,
          const TrainingConfig& config, std::span<const SoftLabel> extra)
      : corpus_(corpus), config_(config) {
    for (const auto& k : keywords) {
      if (k.matched.empty())
        throw std::invalid_argument("keyword '" + k.keyword + "' has an empty matched set");
      if (!(k.expectation >= 0.0 && k.expectation <= 1.0))
        throw std::invalid_argument("keyword '" + k.keyword + "' expectation outside [0, 1]");
    }
    if (keywords.empty() && corpus.positives.empty() && extra.empty())
      throw std::invalid_argument("objective: nothing to optimize");

    std::vector<std::size_t> needed;
    for (const auto& k : keywords) needed.insert(needed.end(), k.matched.begin(), k.matched.end());
    for (const auto& s : extra) needed.push_back(s.unlabeled_index);
    if (config.unlabeled_negative_weight > 0.0)
      for (std::size_t i = 0; i < corpus.unlabeled.size(); ++i) needed.push_back(i);
    std::sort(needed.begin(), needed.end());
    needed.erase(std::unique(needed.begin(), needed.end()), needed.end());
    u_index_ = needed;
    for (std::size_t i : u_index_) {
      if (i >= corpus.unlabeled.size()) throw std::out_of_range("unlabeled index out of range");
      u_rows_.push_back(&corpus.unlabeled[i].bow);
    }
    const auto pos = [&](std::size_t u) {
      return static_cast<std::size_t>(std::lower_bound(u_index_.begin(), u_index_.end(), u) - u_index_.begin());
    };
    for (const auto& k : keywords) {
      Term t{k.expectation, {}};
      for (std::size_t i : k.matched) t.positions.push_back(pos(i));
      terms_.push_back(std::move(t));
    }
    for (const auto& s : extra) extra_.emplace_back(pos(s.unlabeled_index), s.positive);
  }

  std::size_t num_labeled() const { return corpus_.positives.size(); }

  // Objective value; accumulates the gradient when grad is non-null.
  // l_subset restricts the likelihood over L to a minibatch scaled to |L|.
  double evaluate(const TargetModel& model, std::vector<double>* grad,
                  std::span<const std::size_t> l_subset = {}) const {
    std::vector<const SparseRow*> rows;
    const std::size_t n_l = l_subset.empty() ? corpus_.positives.size() : l_subset.size();
    rows.reserve(n_l + u_rows_.size());
    if (l_subset.empty()) {
      for (const auto& p : corpus_.positives) rows.push_back(&p.bow);
    } else {
      for (std::size_t i : l_subset) rows.push_back(&corpus_.positives.at(i).bow);
    }
    rows.insert(rows.end(), u_rows_.begin(), u_rows_.end());
    const double l_scale = l_subset.empty() ? 1.0
                                            : static_cast<double>(corpus_.positives.size()) /
                                                  static_cast<double>(l_subset.size());

    kernels::Activations acts;
    kernels::forward(model, rows, acts, config_.parallel);
    const auto& p = acts.probs;
    std::vector<double> dlogit(rows.size(), 0.0);

    double value = 0.0;
    for (std::size_t r = 0; r < n_l; ++r) {
      value += l_scale * clamped_log(p[r]);
      if (inside_clamp(p[r])) dlogit[r] += l_scale * (1.0 - p[r]);
    }
    for (auto [pos, y] : extra_) {
      const std::size_t r = n_l + pos;
      value += y * clamped_log(p[r]) + (1.0 - y) * clamped_log(1.0 - p[r]);
      if (inside_clamp(p[r])) dlogit[r] += y * (1.0 - p[r]) - (1.0 - y) * p[r];
    }
    if (config_.unlabeled_negative_weight > 0.0) {
      const double w = config_.unlabeled_negative_weight;
      for (std::size_t k = 0; k < u_rows_.size(); ++k) {
        const std::size_t r = n_l + k;
        value += w * clamped_log(1.0 - p[r]);
        if (inside_clamp(p[r])) dlogit[r] -= w * p[r];
      }
    }
    for (const Term& t : terms_) {
      double mean = 0.0;
      for (std::size_t pos : t.positions) mean += p[n_l + pos];
      const double n = static_cast<double>(t.positions.size());
      mean /= n;
      value -= config_.lambda * bernoulli_kl(t.expectation, mean);
      if (config_.lambda > 0.0 && inside_clamp(mean)) {
        const double dkl = -t.expectation / mean + (1.0 - t.expectation) / (1.0 - mean);
        const double coef = -config_.lambda * dkl / n;
        for (std::size_t pos : t.positions) {
          const std::size_t r = n_l + pos;
          dlogit[r] += coef * p[r] * (1.0 - p[r]);
        }
      }
    }
    const double prior_w = 1.0 / (2.0 * config_.prior_sigma * config_.prior_sigma);
    double sq = 0.0;
    for (double th : model.params) sq += th * th;
    value -= prior_w * sq;

    if (grad) {
      grad->assign(model.num_params(), 0.0);
      for (std::size_t k = 0; k < model.params.size(); ++k) (*grad)[k] = -2.0 * prior_w * model.params[k];
      kernels::backward(model, rows, acts, dlogit, *grad, config_.parallel);
    }
    return value;
  }

 private:
  struct Term {
    double expectation;
    std::vector<std::size_t> positions;
  };
  const Corpus& corpus_;
  const TrainingConfig& config_;
  std::vector<std::size_t> u_index_;
  std::vector<const SparseRow*> u_rows_;
  std::vector<Term> terms_;
  std::vector<std::pair<std::size_t, double>> extra_;
};

void check_dims(const TargetModel& model) {
  if (model.params.size() != model.num_params())
    throw std::invalid_argument("model parameter count does not match its layer dimensions");
}

}  // namespace

double objective(const TargetModel& model, const Corpus& corpus,
                 std::span<const KeywordRecord> keywords, const TrainingConfig& config,
                 std::span<const SoftLabel> extra) {
  check_dims(model);
  Problem problem(corpus, keywords, config, extra);
  return problem.evaluate(model, nullptr);
}

std::vector<double> gradient(const TargetModel& model, const Corpus& corpus,
                             std::span<const KeywordRecord> keywords,
                             const TrainingConfig& config, std::span<const SoftLabel> extra) {
  check_dims(model);
  Problem problem(corpus, keywords, config, extra);
  std::vector<double> g;
  problem.evaluate(model, &g);
  return g;
}

TargetModel train(const TargetModel& initial, const Corpus& corpus,
                  std::span<const KeywordRecord> keywords, const TrainingConfig& config,
                  std::span<const SoftLabel> extra, TrainingTrace* trace) {
  config.validate();
  check_dims(initial);
  Problem problem(corpus, keywords, config, extra);

  TargetModel model = initial;
  const std::size_t n = model.params.size();
  std::vector<double> m(n, 0.0), v(n, 0.0), g;
  double beta1_t = 1.0, beta2_t = 1.0;
  std::vector<double> best = model.params;
  double best_value = -std::numeric_limits<double>::infinity();
  std::vector<double> history;

  const auto adam_step = [&]() {
    beta1_t *= config.adam_beta1;
    beta2_t *= config.adam_beta2;
    const double lr = config.learning_rate * std::sqrt(1.0 - beta2_t) / (1.0 - beta1_t);
    for (std::size_t k = 0; k < n; ++k) {
      const double descent = -g[k];  // ascent on the objective
      m[k] = config.adam_beta1 * m[k] + (1.0 - config.adam_beta1) * descent;
      v[k] = config.adam_beta2 * v[k] + (1.0 - config.adam_beta2) * descent * descent;
      model.params[k] -= lr * m[k] / (std::sqrt(v[k]) + config.adam_epsilon);
    }
  };
  const auto record = [&](double value, int epoch) {
    if (!std::isfinite(value))
      throw TrainingError("training diverged: objective is non-finite at epoch " + std::to_string(epoch) +
                          " (learning_rate " + std::to_string(config.learning_rate) + ")");
    history.push_back(value);
    if (value > best_value) {
      best_value = value;
      best = model.params;
    }
  };

  const bool full_batch = config.batch_size == 0 ||
                          static_cast<std::size_t>(config.batch_size) >= problem.num_labeled();
  Rng rng(derive_seed(config.seed, {hash_string("minibatch")}));
  std::vector<std::size_t> order(problem.num_labeled());
  std::iota(order.begin(), order.end(), 0);

  int epoch = 0;
  for (; epoch < config.max_epochs; ++epoch) {
    if (full_batch) {
      record(problem.evaluate(model, &g), epoch);
      adam_step();
    } else {
      record(problem.evaluate(model, nullptr), epoch);
      rng.shuffle(order);
      const std::size_t b = static_cast<std::size_t>(config.batch_size);
      for (std::size_t start = 0; start < order.size(); start += b) {
        const std::size_t end = std::min(order.size(), start + b);
        problem.evaluate(model, &g, std::span(order).subspan(start, end - start));
        adam_step();
      }
    }
    if (config.convergence_tolerance > 0.0 && history.size() > 10) {
      const double now = history.back(), before = history[history.size() - 11];
      if (now - before <= config.convergence_tolerance * std::abs(now)) {
        ++epoch;
        break;
      }
    }
  }
  record(problem.evaluate(model, nullptr), epoch);
  model.params = best;
  if (trace) {
    trace->objective = history;
    trace->steps = epoch;
    trace->best = best_value;
  }
  return model;
}

void save_checkpoint(const TargetModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << "hail-model 1\n";
  out << "kind " << to_string(model.kind) << '\n';
  out << "input_dim " << model.input_dim << '\n';
  out << "hidden";
  for (std::size_t h : model.hidden) out << ' ' << h;
  out << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(model.vocab_fingerprint));
  out << "vocab_fingerprint " << buf << '\n';
  out << "params " << model.params.size() << '\n';
  for (double p : model.params) {
    std::snprintf(buf, sizeof buf, "%a", p);
    out << buf << '\n';
  }
}

TargetModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const auto fail = [&](const std::string& what) {
    return std::runtime_error("checkpoint " + path.string() + ": " + what);
  };
  std::string line, key;
  if (!std::getline(in, line) || line != "hail-model 1") throw fail("unsupported header");
  TargetModel m;
  const auto next = [&](const char* expected) {
    if (!std::getline(in, line)) throw fail(std::string("missing ") + expected);
    std::istringstream ss(line);
    ss >> key;
    if (key != expected) throw fail(std::string("expected ") + expected);
    std::string rest;
    std::getline(ss, rest);
    return rest;
  };
  m.kind = parse_model_kind(std::string(std::string_view(next("kind")).substr(1)));
  m.input_dim = std::stoull(next("input_dim"));
  {
    std::istringstream ss(next("hidden"));
    std::size_t h;
    while (ss >> h) m.hidden.push_back(h);
  }
  m.vocab_fingerprint = std::stoull(next("vocab_fingerprint"), nullptr, 16);
  const std::size_t count = std::stoull(next("params"));
  if (count != m.num_params()) throw fail("parameter count does not match dimensions");
  m.params.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    if (!std::getline(in, line)) throw fail("truncated parameter list");
    char* end = nullptr;
    const double v = std::strtod(line.c_str(), &end);
    if (end == line.c_str()) throw fail("bad parameter value");
    m.params.push_back(v);
  }
  return m;
}

}  // namespace hail
