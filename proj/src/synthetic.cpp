#include "hail/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hail/rng.hpp"
#include "json.hpp"

namespace hail {

SyntheticSpec SyntheticSpec::desk_default() {
  SyntheticSpec s;
  s.keywords = {
      {"hack", 0.20, 0.20, {0, 1, 2}, -1.0},
      {"breach", 0.85, 0.06, {}, -1.0},
      {"ransomware", 0.80, 0.05, {}, -1.0},
      {"attack", 0.75, 0.06, {}, -1.0},
      {"securities", 0.70, 0.05, {}, -1.0},
      {"leak", 0.70, 0.05, {}, -1.0},
      {"tips", 0.03, 0.05, {0, 3}, -1.0},
      {"webinar", 0.03, 0.05, {1, 4}, -1.0},
      {"jobs", 0.04, 0.05, {2, 5}, -1.0},
      {"giveaway", 0.03, 0.05, {0, 4}, -1.0},
  };
  return s;
}

SyntheticSpec SyntheticSpec::cyber_attack_shape() {
  SyntheticSpec s = desk_default();
  s.n_positive = 2600;
  s.n_unlabeled = 86000;
  s.n_test = 500;
  return s;
}

namespace {

struct Rates {
  double positive = 0.0;
  double negative = 0.0;  // within the keyword's group (or all negatives)
};

std::string padded(const char* prefix, std::size_t i, std::size_t j) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%zux%zu", prefix, i, j);
  return buf;
}

std::string post_id(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%06zu", prefix, i);
  return buf;
}

void validate(const SyntheticSpec& s) {
  if (s.n_positive < 1 || s.n_unlabeled < 1 || s.n_test < 1)
    throw SyntheticSpecError("corpus sizes must be >= 1");
  if (!(s.class_balance > 0.0 && s.class_balance < 1.0))
    throw SyntheticSpecError("class_balance must lie in (0, 1)");
  if (s.n_seed_events < 1) throw SyntheticSpecError("need at least one seed event");
  if (s.n_negative_groups < 1) throw SyntheticSpecError("need at least one negative group");
  if (s.tokens_per_event < 1 || s.tokens_per_group < 1) throw SyntheticSpecError("token pools must be non-empty");
  for (const auto& k : s.keywords) {
    if (!(k.expectation >= 0.0 && k.expectation <= 1.0))
      throw SyntheticSpecError("planted expectation for '" + k.token + "' outside [0, 1]");
    if (!(k.coverage > 0.0 && k.coverage <= 1.0))
      throw SyntheticSpecError("coverage for '" + k.token + "' outside (0, 1]");
    for (int g : k.groups)
      if (g < 0 || g >= static_cast<int>(s.n_negative_groups))
        throw SyntheticSpecError("keyword '" + k.token + "' refers to a missing group");
    const auto toks = tokenize(k.token);
    if (toks.size() != 1 || toks[0] != k.token)
      throw SyntheticSpecError("keyword '" + k.token + "' is not a single lowercase token");
  }
}

Rates keyword_rates(const SyntheticSpec& s, const PlantedKeyword& k) {
  const double b = s.class_balance;
  const double group_share = k.groups.empty() ? 1.0
                                               : static_cast<double>(k.groups.size()) /
                                                     static_cast<double>(s.n_negative_groups);
  Rates r;
  r.positive = k.expectation * k.coverage / b;
  r.negative = (1.0 - k.expectation) * k.coverage / ((1.0 - b) * group_share);
  if (r.positive > 1.0 || r.negative > 1.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "planted expectation %.3f with coverage %.3f for '%s' is unreachable at class balance %.3f "
                  "(needs inclusion rates %.3f / %.3f)",
                  k.expectation, k.coverage, k.token.c_str(), b, r.positive, r.negative);
    throw SyntheticSpecError(buf);
  }
  return r;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  validate(spec);
  const std::size_t n_events = spec.n_seed_events + spec.n_other_events;
  std::vector<std::vector<std::string>> event_tokens(n_events), group_tokens(spec.n_negative_groups);
  for (std::size_t e = 0; e < n_events; ++e)
    for (std::size_t k = 0; k < spec.tokens_per_event; ++k) event_tokens[e].push_back(padded("ev", e, k));
  for (std::size_t g = 0; g < spec.n_negative_groups; ++g)
    for (std::size_t k = 0; k < spec.tokens_per_group; ++k) group_tokens[g].push_back(padded("ng", g, k));
  std::vector<std::string> topic, background;
  for (std::size_t k = 0; k < spec.n_topic_tokens; ++k) topic.push_back(padded("tp", 0, k));
  for (std::size_t k = 0; k < spec.n_background_tokens; ++k) background.push_back(padded("bg", 0, k));
  std::vector<Rates> rates;
  for (const auto& k : spec.keywords) rates.push_back(keyword_rates(spec, k));

  SyntheticCorpus out;
  Rng rng(derive_seed(spec.seed, {hash_string("synthetic")}));

  const auto draw_from = [&](const std::vector<std::string>& pool, std::size_t n, std::vector<std::string>& words) {
    if (pool.empty()) return;
    for (std::size_t i = 0; i < n; ++i) words.push_back(pool[rng.below(pool.size())]);
  };

  // One micropost of class y; labeled posts draw seed events only.
  const auto make_post = [&](int y, bool labeled) {
    std::vector<std::string> words;
    int group = -1;
    if (y == 1) {
      std::size_t e;
      if (labeled || spec.n_other_events == 0 || rng.bernoulli(spec.seed_event_share))
        e = rng.below(spec.n_seed_events);
      else
        e = spec.n_seed_events + rng.below(spec.n_other_events);
      draw_from(event_tokens[e], spec.event_words, words);
    } else {
      group = static_cast<int>(rng.below(spec.n_negative_groups));
      draw_from(group_tokens[static_cast<std::size_t>(group)], spec.group_words, words);
    }
    draw_from(topic, spec.topic_words, words);
    const std::size_t fixed = words.size();
    if (spec.words_per_post > fixed) {
      // Length jitters by up to +-3 background words.
      const std::size_t base = spec.words_per_post - fixed;
      const std::size_t lo = base > 3 ? base - 3 : 0;
      draw_from(background, lo + rng.below(base + 4 - lo), words);
    }
    for (std::size_t k = 0; k < spec.keywords.size(); ++k) {
      const auto& kw = spec.keywords[k];
      double p;
      if (y == 1) {
        p = rates[k].positive * (labeled ? spec.labeled_keyword_scale : 1.0);
      } else {
        const bool in_group = kw.groups.empty() || std::find(kw.groups.begin(), kw.groups.end(), group) != kw.groups.end();
        p = in_group ? rates[k].negative : 0.0;
      }
      if (rng.bernoulli(std::min(1.0, p))) words.push_back(kw.token);
    }
    rng.shuffle(words);
    std::string text;
    for (const auto& w : words) {
      if (!text.empty()) text.push_back(' ');
      text += w;
    }
    return text;
  };

  const auto add = [&](char prefix, std::size_t i, int y, bool labeled) {
    Micropost p;
    p.id = post_id(prefix, i);
    p.text = make_post(y, labeled);
    p.tokens = tokenize(p.text);
    out.truth.labels[p.id] = y;
    return p;
  };
  for (std::size_t i = 0; i < spec.n_positive; ++i) out.corpus.positives.push_back(add('p', i, 1, true));
  for (std::size_t i = 0; i < spec.n_unlabeled; ++i)
    out.corpus.unlabeled.push_back(add('u', i, rng.bernoulli(spec.class_balance) ? 1 : 0, false));
  for (std::size_t i = 0; i < spec.n_test; ++i) {
    const int y = rng.bernoulli(spec.class_balance) ? 1 : 0;
    Micropost p = add('t', i, y, false);
    out.corpus.test.push_back({std::move(p), y});
  }

  for (const auto& k : spec.keywords) {
    out.truth.expectations[k.token] = k.expectation;
    out.truth.lexicon[k.token] =
        k.informativeness >= 0.0 ? k.informativeness : std::abs(k.expectation - spec.class_balance);
  }
  if (!spec.keywords.empty()) out.truth.initial_keyword = spec.keywords.front().token;

  const auto& wp = spec.workers;
  Rng wrng(derive_seed(spec.seed, {hash_string("workers")}));
  for (std::size_t n = 0; n < wp.n_workers + wp.n_adversarial; ++n) {
    char id[16];
    std::snprintf(id, sizeof id, "w%02zu", n);
    double acc = n < wp.n_workers ? wp.accuracy_min + (wp.accuracy_max - wp.accuracy_min) * wrng.uniform()
                                  : wp.adversarial_accuracy;
    out.truth.workers.push_back({ConfusionMatrix::from_accuracy(id, acc, acc), mix64(spec.seed + n)});
  }
  return out;
}

void save_planted_truth(const PlantedTruth& truth, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "truth.jsonl");
    for (const auto& [id, y] : truth.labels) out << nlohmann::json{{"id", id}, {"label", y}}.dump() << '\n';
  }
  {
    std::ofstream out(dir / "lexicon.tsv");
    out << "# initial\t" << truth.initial_keyword << '\n';
    char buf[128];
    for (const auto& [tok, w] : truth.lexicon) {
      const auto e = truth.expectations.count(tok) ? truth.expectations.at(tok) : -1.0;
      std::snprintf(buf, sizeof buf, "\t%a\t%a\n", w, e);
      out << tok << buf;
    }
  }
  {
    std::ofstream out(dir / "workers.tsv");
    char buf[160];
    for (const auto& w : truth.workers) {
      std::snprintf(buf, sizeof buf, "\t%a\t%a\t%llu\n", w.confusion.pi[1][1], w.confusion.pi[0][0],
                    static_cast<unsigned long long>(w.seed));
      out << w.confusion.worker_id << buf;
    }
  }
}

PlantedTruth load_planted_truth(const std::filesystem::path& dir) {
  PlantedTruth t;
  std::string line;
  {
    std::ifstream in(dir / "truth.jsonl");
    if (!in) throw SyntheticSpecError("missing " + (dir / "truth.jsonl").string());
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      t.labels[j.at("id").get<std::string>()] = j.at("label").get<int>();
    }
  }
  {
    std::ifstream in(dir / "lexicon.tsv");
    if (!in) throw SyntheticSpecError("missing " + (dir / "lexicon.tsv").string());
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string tok, w, e;
      std::getline(ss, tok, '\t');
      std::getline(ss, w, '\t');
      if (tok == "# initial") {
        t.initial_keyword = w;
        continue;
      }
      std::getline(ss, e, '\t');
      t.lexicon[tok] = std::strtod(w.c_str(), nullptr);
      const double ev = std::strtod(e.c_str(), nullptr);
      if (ev >= 0.0) t.expectations[tok] = ev;
    }
  }
  {
    std::ifstream in(dir / "workers.tsv");
    if (!in) throw SyntheticSpecError("missing " + (dir / "workers.tsv").string());
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string id, a1, a0, seed;
      std::getline(ss, id, '\t');
      std::getline(ss, a1, '\t');
      std::getline(ss, a0, '\t');
      std::getline(ss, seed, '\t');
      t.workers.push_back({ConfusionMatrix::from_accuracy(id, std::strtod(a1.c_str(), nullptr),
                                                          std::strtod(a0.c_str(), nullptr)),
                           std::stoull(seed)});
    }
  }
  return t;
}

}  // namespace hail
