#include "hail/loop_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hail/kernels.hpp"
#include "hail/metrics.hpp"
#include "hail/rng.hpp"

namespace hail {

std::string to_string(ExpectationSource s) {
  return s == ExpectationSource::kJoint ? "joint" : "majority-vote";
}

std::string to_string(KeywordSource s) {
  return s == KeywordSource::kDiscovery ? "discovery" : "query-expansion";
}

ExpectationSource parse_expectation_source(std::string_view s) {
  if (s == "joint") return ExpectationSource::kJoint;
  if (s == "majority-vote") return ExpectationSource::kMajorityVote;
  throw std::invalid_argument("unknown expectation source '" + std::string(s) + "'");
}

KeywordSource parse_keyword_source(std::string_view s) {
  if (s == "discovery") return KeywordSource::kDiscovery;
  if (s == "query-expansion") return KeywordSource::kQueryExpansion;
  throw std::invalid_argument("unknown keyword source '" + std::string(s) + "'");
}

LoopContext::LoopContext(const Corpus& c, const Vocabulary& v, const LoopConfig& config)
    : corpus(c), vocab(v) {
  if (corpus.test.empty()) throw LoopError("corpus has no test split");
  std::vector<std::size_t> order(corpus.test.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(config.seed, {hash_string("validation")}));
  rng.shuffle(order);
  auto n_val = static_cast<std::size_t>(std::llround(config.validation_fraction * order.size()));
  n_val = std::min(n_val, order.size() - 1);
  validation.assign(order.begin(), order.begin() + n_val);
  evaluation.assign(order.begin() + n_val, order.end());
  std::sort(validation.begin(), validation.end());
  std::sort(evaluation.begin(), evaluation.end());
  for (std::size_t i = 0; i < corpus.unlabeled.size(); ++i) unlabeled_index.emplace(corpus.unlabeled[i].id, i);
}

std::set<std::string> LoopState::used_keywords() const {
  std::set<std::string> used;
  for (const auto& k : keywords) used.insert(k.keyword);
  for (const auto& k : next_keywords) used.insert(k);
  return used;
}

// ---------------------------------------------------------------- backends

SimulatedBackend::SimulatedBackend(const Corpus& corpus, const PlantedTruth& truth, const LoopConfig& config)
    : corpus_(corpus),
      truth_(truth),
      redundancy_(config.redundancy),
      group_size_(std::max<std::size_t>(1, config.pick_group_size)),
      pick_redundancy_(std::max<std::size_t>(1, config.pick_redundancy)),
      noise_(config.pick_noise),
      seed_(derive_seed(config.seed, {hash_string("crowd")})) {
  for (std::size_t i = 0; i < corpus.unlabeled.size(); ++i) index_.emplace(corpus.unlabeled[i].id, i);
}

AnnotationMatrix SimulatedBackend::classify(const std::vector<std::string>& item_ids, int iteration,
                                            const std::string& keyword) {
  std::vector<int> truths;
  truths.reserve(item_ids.size());
  for (const auto& id : item_ids) {
    auto it = truth_.labels.find(id);
    if (it == truth_.labels.end()) throw BackendError("no planted label for '" + id + "'");
    truths.push_back(it->second);
  }
  const auto seed = derive_seed(seed_, {static_cast<std::uint64_t>(iteration), hash_string(keyword)});
  return simulate_annotations(item_ids, truths, truth_.workers, seed, redundancy_);
}

std::vector<std::string> SimulatedBackend::pick(const std::vector<SelectedMicropost>& selected,
                                                const std::set<std::string>& used, int iteration) {
  std::vector<std::string> picks;
  for (std::size_t start = 0, chunk = 0; start < selected.size(); start += group_size_, ++chunk) {
    std::vector<PickCandidate> group;
    for (std::size_t i = start; i < std::min(selected.size(), start + group_size_); ++i) {
      const auto& s = selected[i];
      const auto& post = corpus_.unlabeled.at(s.unlabeled_index);
      auto it = truth_.labels.find(post.id);
      if (it == truth_.labels.end()) throw BackendError("no planted label for '" + post.id + "'");
      group.push_back({post.tokens, s.predicted, it->second});
    }
    for (std::size_t w = 0; w < pick_redundancy_; ++w) {
      const auto seed = derive_seed(seed_, {hash_string("pick"), static_cast<std::uint64_t>(iteration), chunk, w});
      try {
        picks.push_back(simulate_keyword_pick(group, truth_.lexicon, used, seed, noise_));
      } catch (const KeywordExhausted&) {
        // worker submits nothing for this task
      }
    }
  }
  return picks;
}

AnnotationMatrix ScriptedBackend::classify(const std::vector<std::string>& item_ids, int, const std::string&) {
  if (next_label_ >= labels_.size()) throw BackendError("scripted backend has no more label batches");
  auto a = labels_[next_label_++];
  if (a.item_ids != item_ids) throw BackendError("scripted label batch does not match the requested items");
  return a;
}

std::vector<std::string> ScriptedBackend::pick(const std::vector<SelectedMicropost>&, const std::set<std::string>&,
                                               int) {
  if (next_pick_ >= picks_.size()) throw BackendError("scripted backend has no more keyword picks");
  return picks_[next_pick_++];
}

// ---------------------------------------------------------------- pieces

std::vector<SelectedMicropost> rank_disagreement(const TargetModel& model, std::span<const std::size_t> matched,
                                                 double e, const Corpus& corpus, bool parallel) {
  std::vector<const SparseRow*> rows;
  rows.reserve(matched.size());
  for (auto i : matched) rows.push_back(&corpus.unlabeled.at(i).bow);
  const auto p = kernels::predict_batch(model, rows, parallel);
  std::vector<SelectedMicropost> out(matched.size());
  for (std::size_t k = 0; k < matched.size(); ++k) {
    out[k].unlabeled_index = matched[k];
    out[k].id = corpus.unlabeled[matched[k]].id;
    out[k].prediction = p[k];
    out[k].score = std::abs(p[k] - e);
    out[k].predicted = p[k] >= 0.5 ? 1 : 0;
  }
  std::sort(out.begin(), out.end(), [](const SelectedMicropost& a, const SelectedMicropost& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return out;
}

bool check_convergence(std::span<const double> history, int patience, double min_delta) {
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (history.empty()) return false;
  double best = history[0];
  int stale = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] >= best + min_delta) {
      best = history[i];
      stale = 0;
    } else {
      ++stale;
    }
  }
  return stale >= patience;
}

namespace {

const std::set<std::string, std::less<>>& stopwords() {
  static const std::set<std::string, std::less<>> words = {
      "about", "after", "again", "all", "and", "any", "are", "been", "before", "being", "but", "can",
      "could", "did", "does", "for", "from", "had", "has", "have", "her", "here", "him", "his", "how",
      "into", "its", "just", "more", "most", "not", "now", "off", "once", "only", "other", "our", "out",
      "over", "own", "said", "same", "she", "should", "some", "such", "than", "that", "the", "their",
      "them", "then", "there", "these", "they", "this", "those", "too", "under", "until", "very", "via",
      "was", "were", "what", "when", "where", "which", "while", "who", "why", "will", "with", "would",
      "you", "your"};
  return words;
}

}  // namespace

bool is_keyword_candidate(std::string_view token) {
  if (token.size() < 3) return false;
  if (std::all_of(token.begin(), token.end(), [](char c) { return c >= '0' && c <= '9'; })) return false;
  return !stopwords().contains(token);
}

std::vector<std::string> discover_keywords(std::span<const std::string> picks, const std::set<std::string>& used,
                                           std::size_t top_n) {
  std::map<std::string, std::size_t> counts;
  for (const auto& p : picks)
    if (is_keyword_candidate(p) && !used.contains(p)) ++counts[p];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && out.size() < top_n; ++i) out.push_back(ranked[i].first);
  if (out.empty()) throw NoNewKeyword("no unused keyword among " + std::to_string(picks.size()) + " picks");
  return out;
}

EmbeddingTable load_embedding_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding table " + path.string());
  EmbeddingTable table;
  std::string line;
  std::size_t dim = 0, lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<double> v;
    for (double x; ls >> x;) v.push_back(x);
    if (!ls.eof()) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad number");
    if (v.empty()) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": empty vector");
    if (dim == 0) dim = v.size();
    if (v.size() != dim)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": dimension mismatch");
    table[token] = std::move(v);
  }
  return table;
}

void save_embedding_table(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[40];
  for (const auto& [token, v] : table) {
    out << token;
    for (double x : v) {
      std::snprintf(buf, sizeof buf, " %.9g", x);
      out << buf;
    }
    out << '\n';
  }
}

std::vector<std::string> qe_baseline_expand(const std::string& keyword, const EmbeddingTable& table,
                                            std::size_t top_k) {
  auto q = table.find(keyword);
  if (q == table.end()) throw std::invalid_argument("keyword '" + keyword + "' is not in the embedding table");
  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  const double qn = norm(q->second);
  std::vector<std::pair<double, std::string>> sims;
  for (const auto& [token, v] : table) {
    if (token == keyword) continue;
    double dot = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * q->second[i];
    const double denom = qn * norm(v);
    sims.emplace_back(denom > 0.0 ? dot / denom : 0.0, token);
  }
  std::stable_sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < sims.size() && i < top_k; ++i) out.push_back(sims[i].second);
  return out;
}

// ---------------------------------------------------------------- phases

namespace {

TrainingConfig effective_training(const LoopContext& ctx, const LoopConfig& config) {
  TrainingConfig t = config.training;
  if (config.lambda_per_labeled > 0.0)
    t.lambda = config.lambda_per_labeled * static_cast<double>(ctx.corpus.positives.size());
  return t;
}

double split_auc(const LoopContext& ctx, const std::vector<double>& p, const std::vector<std::size_t>& idx) {
  std::vector<double> s;
  std::vector<int> y;
  for (auto i : idx) {
    s.push_back(p[i]);
    y.push_back(ctx.corpus.test[i].label);
  }
  if (std::find(y.begin(), y.end(), 1) == y.end()) return 0.0;
  return auc_pr(s, y);
}

}  // namespace

IterationMetrics evaluate_model(const LoopContext& ctx, const TargetModel& model, bool parallel) {
  std::vector<const SparseRow*> rows;
  for (const auto& t : ctx.corpus.test) rows.push_back(&t.post.bow);
  const auto p = kernels::predict_batch(model, rows, parallel);
  IterationMetrics m;
  m.auc = split_auc(ctx, p, ctx.evaluation);
  m.validation_auc = split_auc(ctx, p, ctx.validation);
  std::vector<double> s;
  std::vector<int> y;
  for (auto i : ctx.evaluation) {
    s.push_back(p[i]);
    y.push_back(ctx.corpus.test[i].label);
  }
  m.accuracy = accuracy(s, y);
  return m;
}

LoopState init_loop_state(const LoopContext& ctx, const LoopConfig& config,
                          std::vector<std::string> initial_keywords) {
  if (initial_keywords.empty()) throw LoopError("at least one initial keyword is required");
  if (config.max_iterations < 1) throw LoopError("max_iterations must be >= 1");
  LoopState s;
  const std::vector<std::size_t> hidden =
      config.model_kind == ModelKind::kMlp ? config.hidden : std::vector<std::size_t>{};
  s.model = init_model(config.model_kind, hidden, ctx.vocab.size(), derive_seed(config.seed, {hash_string("init")}));
  s.model.vocab_fingerprint = ctx.vocab.fingerprint();
  s.next_keywords = std::move(initial_keywords);
  return s;
}

IterationPlan plan_iteration(const LoopContext& ctx, const LoopState& state, const LoopConfig& config) {
  if (state.finished) throw LoopError("loop already finished: " + state.stop_reason);
  if (state.next_keywords.empty()) throw LoopError("no keyword queued for the next iteration");
  IterationPlan plan;
  plan.iteration = state.iteration + 1;
  plan.keywords = state.next_keywords;
  for (const auto& kw : plan.keywords) {
    auto matched = filter_by_keyword(ctx.corpus, kw);
    if (matched.empty()) throw LoopError("keyword '" + kw + "' matches no unlabeled micropost");
    const auto seed = derive_seed(config.seed, {hash_string("classify"), static_cast<std::uint64_t>(plan.iteration),
                                                hash_string(kw)});
    std::vector<std::string> ids;
    for (auto i : sample_for_annotation(matched, config.classify_batch, seed)) ids.push_back(ctx.corpus.unlabeled[i].id);
    plan.matched.push_back(std::move(matched));
    plan.sample_ids.push_back(std::move(ids));
  }
  return plan;
}

InferenceOutcome infer_iteration(const LoopContext& ctx, const LoopState& state, const IterationPlan& plan,
                                 std::vector<AnnotationMatrix> annotations, const LoopConfig& config) {
  if (annotations.size() != plan.keywords.size())
    throw LoopError("expected one annotation matrix per keyword");
  const auto training = effective_training(ctx, config);
  InferenceOutcome out;
  out.state = state;
  auto& s = out.state;
  s.next_keywords.clear();

  for (std::size_t k = 0; k < plan.keywords.size(); ++k) {
    auto& a = annotations[k];
    a.normalize();
    if (a.item_ids != plan.sample_ids[k] && !a.item_ids.empty()) {
      for (const auto& id : a.item_ids)
        if (std::find(plan.sample_ids[k].begin(), plan.sample_ids[k].end(), id) == plan.sample_ids[k].end())
          throw LoopError("annotated item '" + id + "' was not requested for keyword '" + plan.keywords[k] + "'");
    }
    if (a.item_ids.empty()) throw LoopError("no annotations for keyword '" + plan.keywords[k] + "'");
    KeywordHistoryEntry h;
    h.iteration = plan.iteration;
    h.keyword = plan.keywords[k];
    h.matched = plan.matched[k].size();
    if (config.expectation_source == ExpectationSource::kJoint) {
      auto fit = joint_fit(a, s.model, ctx.corpus, s.keywords, plan.keywords[k], training, config.joint);
      s.model = std::move(fit.model);
      h.expectation = fit.estimate.value;
      h.crowd_mean = fit.estimate.crowd_mean;
      h.model_mean = fit.estimate.model_mean;
      out.artifacts.reports.push_back(std::move(fit.report));
    } else {
      const auto mv = majority_vote(a);
      h.expectation = h.crowd_mean = mv.positive_fraction;
      h.model_mean = model_expectation(s.model, plan.matched[k], ctx.corpus, training.parallel);
      JointFitReport r;
      r.keyword = plan.keywords[k];
      r.converged = true;
      out.artifacts.reports.push_back(std::move(r));
    }
    s.keywords.push_back({plan.keywords[k], h.expectation, plan.matched[k]});
    s.history.push_back(std::move(h));
  }
  if (training.max_epochs > 0) s.model = train(s.model, ctx.corpus, s.keywords, training);
  for (auto& r : out.artifacts.reports) r.final_j12 = objective(s.model, ctx.corpus, s.keywords, training);
  out.artifacts.annotations = std::move(annotations);

  out.metrics = evaluate_model(ctx, s.model, training.parallel);
  out.metrics.iteration = plan.iteration;
  out.metrics.keywords = plan.keywords;

  if (config.keyword_source == KeywordSource::kDiscovery && config.discovery_batch > 0) {
    const std::size_t n = plan.keywords.size();
    const std::size_t share = (config.discovery_batch + n - 1) / n;
    for (std::size_t k = 0; k < n; ++k) {
      auto ranked = rank_disagreement(s.model, plan.matched[k], s.keywords[s.keywords.size() - n + k].expectation,
                                      ctx.corpus, training.parallel);
      ranked.resize(std::min(ranked.size(), share));
      out.artifacts.selected.insert(out.artifacts.selected.end(), ranked.begin(), ranked.end());
    }
  }
  return out;
}

LoopState complete_iteration(const LoopContext&, InferenceOutcome outcome, std::vector<std::string> picks,
                             const LoopConfig& config) {
  auto s = std::move(outcome.state);
  s.iteration = outcome.metrics.iteration;
  const auto used = s.used_keywords();
  if (config.keyword_source == KeywordSource::kDiscovery) {
    try {
      outcome.artifacts.discovered = discover_keywords(picks, used, config.top_n);
    } catch (const NoNewKeyword&) {
    }
  } else {
    for (const auto& kw : config.qe_keywords) {
      if (outcome.artifacts.discovered.size() >= config.top_n) break;
      if (!used.contains(kw)) outcome.artifacts.discovered.push_back(kw);
    }
  }
  outcome.artifacts.picks = std::move(picks);
  s.next_keywords = outcome.artifacts.discovered;
  s.metrics.push_back(std::move(outcome.metrics));
  s.archive.push_back(std::move(outcome.artifacts));

  std::vector<double> val;
  for (const auto& m : s.metrics) val.push_back(m.validation_auc);
  s.converged = check_convergence(val, config.patience, config.min_delta);
  if (s.converged && config.stop_on_convergence) {
    s.finished = true;
    s.stop_reason = "validation AUC converged";
  } else if (s.iteration >= config.max_iterations) {
    s.finished = true;
    s.stop_reason = "iteration cap reached";
  } else if (s.next_keywords.empty()) {
    s.finished = true;
    s.stop_reason = "no new keyword";
  }
  return s;
}

LoopState run_iteration(const LoopContext& ctx, const LoopState& state, AnnotatorBackend& backend,
                        const LoopConfig& config) {
  const auto plan = plan_iteration(ctx, state, config);
  std::vector<AnnotationMatrix> labels;
  for (std::size_t k = 0; k < plan.keywords.size(); ++k)
    labels.push_back(backend.classify(plan.sample_ids[k], plan.iteration, plan.keywords[k]));
  auto outcome = infer_iteration(ctx, state, plan, std::move(labels), config);
  std::vector<std::string> picks;
  if (!outcome.artifacts.selected.empty())
    picks = backend.pick(outcome.artifacts.selected, outcome.state.used_keywords(), plan.iteration);
  return complete_iteration(ctx, std::move(outcome), std::move(picks), config);
}

LoopState run_loop(const LoopContext& ctx, std::vector<std::string> initial_keywords, AnnotatorBackend& backend,
                   const LoopConfig& config, const IterationCallback& on_iteration) {
  auto state = init_loop_state(ctx, config, std::move(initial_keywords));
  while (!state.finished) {
    state = run_iteration(ctx, state, backend, config);
    if (on_iteration) on_iteration(state);
  }
  return state;
}

// ---------------------------------------------------------------- output

void write_iteration(const std::filesystem::path& run_dir, const LoopState& state) {
  if (state.archive.empty()) throw LoopError("no completed iteration to write");
  char name[32];
  std::snprintf(name, sizeof name, "iter_%03d", state.iteration);
  const auto dir = run_dir / name;
  std::filesystem::create_directories(dir);
  const auto& art = state.archive.back();
  const auto& m = state.metrics.back();
  for (std::size_t k = 0; k < art.annotations.size(); ++k) {
    const auto& kw = m.keywords.at(k);
    save_annotations(art.annotations[k], dir / ("annotations_" + kw + ".jsonl"));
    std::ofstream rep(dir / ("fit_report_" + kw + ".tsv"));
    write_fit_report(art.reports.at(k), rep);
  }
  save_checkpoint(state.model, dir / "model.ckpt");
  {
    std::ofstream sel(dir / "disagreement.tsv");
    sel << "id\tprediction\tscore\n";
    char buf[160];
    for (const auto& s : art.selected) {
      std::snprintf(buf, sizeof buf, "\t%.8f\t%.8f\n", s.prediction, s.score);
      sel << s.id << buf;
    }
  }
  {
    std::ofstream pk(dir / "picks.txt");
    for (const auto& p : art.picks) pk << p << '\n';
    pk << "# next";
    for (const auto& d : art.discovered) pk << '\t' << d;
    pk << '\n';
  }
  {
    std::ofstream mt(dir / "metrics.tsv");
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.6f\t%.6f\n", m.iteration, m.auc, m.accuracy, m.validation_auc);
    mt << "iteration\tauc\taccuracy\tvalidation_auc\n" << buf;
  }
}

void write_run_summary(const std::filesystem::path& run_dir, const LoopState& state) {
  std::filesystem::create_directories(run_dir);
  char buf[256];
  {
    std::ofstream out(run_dir / "metrics.tsv");
    out << "iteration\tkeywords\tauc\taccuracy\tvalidation_auc\n";
    for (const auto& m : state.metrics) {
      std::string kws;
      for (const auto& k : m.keywords) kws += (kws.empty() ? "" : ",") + k;
      std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\t%.6f\n", m.auc, m.accuracy, m.validation_auc);
      out << m.iteration << '\t' << kws << buf;
    }
  }
  {
    std::ofstream out(run_dir / "keywords.tsv");
    out << "iteration\tkeyword\texpectation\tcrowd_mean\tmodel_mean\tmatched\n";
    for (const auto& h : state.history) {
      std::snprintf(buf, sizeof buf, "\t%.8f\t%.8f\t%.8f\t%zu\n", h.expectation, h.crowd_mean, h.model_mean, h.matched);
      out << h.iteration << '\t' << h.keyword << buf;
    }
    out << "# stop\t" << state.stop_reason << '\n';
  }
}

}  // namespace hail
