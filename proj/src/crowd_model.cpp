#include "hail/crowd_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "hail/rng.hpp"
#include "json.hpp"

namespace hail {

std::vector<std::vector<std::pair<std::size_t, int>>> AnnotationMatrix::rows() const {
  std::vector<std::vector<std::pair<std::size_t, int>>> out(item_ids.size());
  for (const auto& e : entries) out.at(e.item).emplace_back(e.worker, e.label);
  return out;
}

void AnnotationMatrix::normalize() {
  if (item_ids.empty() || worker_ids.empty())
    throw CrowdError("annotation matrix needs at least one item and one worker");
  std::sort(entries.begin(), entries.end(), [](const Annotation& a, const Annotation& b) {
    return a.item != b.item ? a.item < b.item : a.worker < b.worker;
  });
  std::vector<bool> covered(item_ids.size(), false);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& e = entries[k];
    if (e.item >= item_ids.size() || e.worker >= worker_ids.size())
      throw CrowdError("annotation index out of range");
    if (e.label != 0 && e.label != 1) throw CrowdError("annotation label must be 0 or 1");
    if (k > 0 && entries[k - 1].item == e.item && entries[k - 1].worker == e.worker)
      throw CrowdError("duplicate annotation for item '" + item_ids[e.item] + "' by worker '" +
                       worker_ids[e.worker] + "'");
    covered[e.item] = true;
  }
  for (std::size_t m = 0; m < covered.size(); ++m)
    if (!covered[m]) throw CrowdError("item '" + item_ids[m] + "' has no annotations");
}

ConfusionMatrix ConfusionMatrix::from_accuracy(std::string id, double p_correct_1, double p_correct_0) {
  ConfusionMatrix c;
  c.worker_id = std::move(id);
  c.pi[1][1] = p_correct_1;
  c.pi[0][1] = 1.0 - p_correct_1;
  c.pi[0][0] = p_correct_0;
  c.pi[1][0] = 1.0 - p_correct_0;
  return c;
}

double PosteriorLabels::positive_mean() const {
  if (q.empty()) throw CrowdError("empty posterior");
  double s = 0.0;
  for (const auto& qm : q) s += qm[1];
  return s / static_cast<double>(q.size());
}

MajorityVote majority_vote(const AnnotationMatrix& a) {
  MajorityVote mv;
  const auto rows = a.rows();
  std::size_t positives = 0;
  for (const auto& row : rows) {
    int ones = 0;
    for (auto [w, l] : row) ones += l;
    const int label = 2 * ones >= static_cast<int>(row.size()) ? 1 : 0;
    mv.labels.push_back(label);
    positives += label;
  }
  mv.positive_fraction = rows.empty() ? 0.0 : static_cast<double>(positives) / rows.size();
  return mv;
}

AnnotationMatrix simulate_annotations(std::span<const std::string> item_ids, std::span<const int> truths,
                                      std::span<const SimulatedWorker> workers, std::uint64_t seed,
                                      std::size_t redundancy) {
  if (workers.empty()) throw CrowdError("simulate_annotations: no workers");
  if (item_ids.size() != truths.size()) throw CrowdError("simulate_annotations: ids/truths length mismatch");
  AnnotationMatrix a;
  a.item_ids.assign(item_ids.begin(), item_ids.end());
  for (const auto& w : workers) a.worker_ids.push_back(w.confusion.worker_id);
  const std::size_t per_item = redundancy == 0 ? workers.size() : std::min(redundancy, workers.size());
  std::vector<std::size_t> pool(workers.size());
  for (std::size_t m = 0; m < item_ids.size(); ++m) {
    if (truths[m] != 0 && truths[m] != 1) throw CrowdError("simulate_annotations: truth must be 0 or 1");
    const std::uint64_t item_key = hash_string(item_ids[m]);
    for (std::size_t n = 0; n < pool.size(); ++n) pool[n] = n;
    if (per_item < workers.size()) {
      Rng pick(derive_seed(seed, {item_key, hash_string("assign")}));
      for (std::size_t i = 0; i < per_item; ++i) std::swap(pool[i], pool[i + pick.below(pool.size() - i)]);
      std::sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(per_item));
    }
    for (std::size_t i = 0; i < per_item; ++i) {
      const std::size_t n = pool[i];
      const auto& w = workers[n];
      Rng rng(derive_seed(seed, {item_key, hash_string(w.confusion.worker_id), w.seed}));
      const double p_one = w.confusion.pi[1][truths[m]];
      a.entries.push_back({m, n, rng.bernoulli(p_one) ? 1 : 0});
    }
  }
  a.normalize();
  return a;
}

namespace {

// Joint terms e_s * prod_n pi[A_mn][s] for s = 0, 1.
std::array<double, 2> class_terms(std::span<const std::pair<std::size_t, int>> row, double e1,
                                  std::span<const ConfusionMatrix> confusions) {
  std::array<double, 2> t{1.0 - e1, e1};
  for (auto [w, label] : row) {
    if (w >= confusions.size())
      throw CrowdError("no confusion matrix for worker index " + std::to_string(w));
    t[0] *= confusions[w].pi[label][0];
    t[1] *= confusions[w].pi[label][1];
  }
  return t;
}

void check_prior(double e1) {
  if (!(e1 >= 0.0 && e1 <= 1.0)) throw CrowdError("class prior outside [0, 1]");
}

}  // namespace

double annotation_likelihood(std::span<const std::pair<std::size_t, int>> row, double e1,
                             std::span<const ConfusionMatrix> confusions) {
  check_prior(e1);
  const auto t = class_terms(row, e1, confusions);
  return t[0] + t[1];
}

double annotation_log_likelihood(const AnnotationMatrix& a, double e1,
                                 std::span<const ConfusionMatrix> confusions) {
  double ll = 0.0;
  for (const auto& row : a.rows()) ll += std::log(annotation_likelihood(row, e1, confusions));
  return ll;
}

PosteriorLabels e_step(const AnnotationMatrix& a, double e1, std::span<const ConfusionMatrix> confusions) {
  check_prior(e1);
  PosteriorLabels post;
  for (const auto& row : a.rows()) {
    const auto t = class_terms(row, e1, confusions);
    const double z = t[0] + t[1];
    if (!(z > 0.0)) throw CrowdError("e_step: zero likelihood under every class");
    post.q.push_back({t[0] / z, t[1] / z});
  }
  return post;
}

std::vector<ConfusionMatrix> m_step_confusions(const AnnotationMatrix& a, const PosteriorLabels& q,
                                               double alpha) {
  if (q.q.size() != a.num_items()) throw CrowdError("m_step: posterior size mismatch");
  if (alpha < 0.0) throw CrowdError("m_step: alpha must be >= 0");
  // counts[n][r][s] = sum_m q_m(s) 1[A_mn = r]
  std::vector<std::array<std::array<double, 2>, 2>> counts(a.num_workers(), {{{0, 0}, {0, 0}}});
  for (const auto& e : a.entries) {
    counts[e.worker][e.label][0] += q.q[e.item][0];
    counts[e.worker][e.label][1] += q.q[e.item][1];
  }
  std::vector<ConfusionMatrix> out(a.num_workers());
  for (std::size_t n = 0; n < a.num_workers(); ++n) {
    out[n].worker_id = a.worker_ids[n];
    for (int s = 0; s < 2; ++s) {
      const double total = counts[n][0][s] + counts[n][1][s];
      const double denom = 2.0 * alpha + total;
      if (denom > 0.0) {
        out[n].pi[1][s] = (alpha + counts[n][1][s]) / denom;
        out[n].pi[0][s] = 1.0 - out[n].pi[1][s];
      } else {
        // No mass on this class and no smoothing: the cell is empty.
        out[n].pi[0][s] = 0.0;
        out[n].pi[1][s] = 0.0;
      }
    }
  }
  return out;
}

double confusion_log_prior(std::span<const ConfusionMatrix> confusions, double alpha) {
  if (alpha == 0.0) return 0.0;
  double lp = 0.0;
  for (const auto& c : confusions)
    for (int r = 0; r < 2; ++r)
      for (int s = 0; s < 2; ++s) lp += alpha * std::log(c.pi[r][s]);
  return lp;
}

DawidSkeneResult fit_dawid_skene(const AnnotationMatrix& a, const DawidSkeneOptions& options) {
  DawidSkeneResult res;
  PosteriorLabels q;
  for (const auto& row : a.rows()) {
    double ones = 0.0;
    for (auto [w, l] : row) ones += l;
    const double f = ones / static_cast<double>(row.size());
    q.q.push_back({1.0 - f, f});
  }
  double prior = options.learn_prior ? q.positive_mean() : options.prior;
  auto confusions = m_step_confusions(a, q, options.alpha);
  const auto record = [&]() {
    const double ll = annotation_log_likelihood(a, prior, confusions);
    res.log_likelihood.push_back(ll);
    res.penalized.push_back(ll + confusion_log_prior(confusions, options.alpha));
  };
  record();
  for (int it = 0; it < options.max_iterations; ++it) {
    q = e_step(a, prior, confusions);
    confusions = m_step_confusions(a, q, options.alpha);
    if (options.learn_prior) prior = q.positive_mean();
    record();
    ++res.iterations;
    const double gain = res.penalized.back() - res.penalized[res.penalized.size() - 2];
    if (std::abs(gain) <= options.tolerance * std::max(1.0, std::abs(res.penalized.back()))) break;
  }
  res.posterior = e_step(a, prior, confusions);
  res.confusions = std::move(confusions);
  res.prior = prior;
  return res;
}

std::string simulate_keyword_pick(std::span<const PickCandidate> selected,
                                  const std::map<std::string, double>& lexicon,
                                  const std::set<std::string>& used, std::uint64_t seed, double noise) {
  if (selected.empty()) throw std::invalid_argument("simulate_keyword_pick: nothing selected");
  std::map<std::string, double> score;
  std::set<std::string> any_unused;
  for (const auto& c : selected) {
    if (c.predicted != c.truth) continue;
    std::set<std::string> distinct(c.tokens.begin(), c.tokens.end());
    for (const auto& t : distinct) {
      if (used.count(t)) continue;
      any_unused.insert(t);
      auto it = lexicon.find(t);
      if (it != lexicon.end() && it->second > 0.0) score[t] += it->second;
    }
  }
  Rng rng(derive_seed(seed, {hash_string("pick")}));
  if (noise > 0.0 && !any_unused.empty() && rng.bernoulli(noise)) {
    auto it = any_unused.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(rng.below(any_unused.size())));
    return *it;
  }
  if (score.empty()) throw KeywordExhausted("no unused informative token among correctly predicted microposts");
  // std::map iterates in token order, so the first maximum wins ties.
  auto best = score.begin();
  for (auto it = score.begin(); it != score.end(); ++it)
    if (it->second > best->second) best = it;
  return best->first;
}

void save_annotations(const AnnotationMatrix& a, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw CrowdError("cannot write annotations " + path.string());
  for (const auto& e : a.entries) {
    nlohmann::json j = {{"item_id", a.item_ids[e.item]}, {"worker_id", a.worker_ids[e.worker]}, {"label", e.label}};
    out << j.dump() << '\n';
  }
}

AnnotationMatrix load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CrowdError("cannot open annotations " + path.string());
  AnnotationMatrix a;
  std::unordered_map<std::string, std::size_t> items, workers;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw CrowdError("annotations line " + std::to_string(line_no) + ": malformed record");
    }
    if (!j.is_object() || !j.contains("item_id") || !j.contains("worker_id") || !j.contains("label") ||
        !j["item_id"].is_string() || !j["worker_id"].is_string() || !j["label"].is_number_integer())
      throw CrowdError("annotations line " + std::to_string(line_no) + ": expected item_id, worker_id, label");
    const auto intern = [](auto& map, auto& ids, const std::string& key) {
      auto [it, fresh] = map.emplace(key, ids.size());
      if (fresh) ids.push_back(key);
      return it->second;
    };
    const std::size_t m = intern(items, a.item_ids, j["item_id"].get<std::string>());
    const std::size_t n = intern(workers, a.worker_ids, j["worker_id"].get<std::string>());
    a.entries.push_back({m, n, j["label"].get<int>()});
  }
  a.normalize();
  return a;
}

}  // namespace hail
