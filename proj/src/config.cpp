#include "hail/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "hail/rng.hpp"

namespace hail {

using nlohmann::json;

LoopConfig Config::desk_loop_defaults() {
  LoopConfig c;
  c.hidden = {64};
  c.training.learning_rate = 0.003;
  c.training.max_epochs = 100;
  c.joint.gradient_steps = 10;
  c.joint.max_rounds = 5;
  return c;
}

namespace {

struct Entry {
  std::string key;
  std::function<json(const Config&)> get;
  std::function<void(Config&, const json&)> set;
};

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw ConfigError("config key '" + key + "': " + what);
}

template <typename T>
T convert(const json& v, const std::string& key) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) bad(key, "expected true or false");
    return v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) bad(key, "expected a string");
    return v.get<std::string>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) bad(key, "expected a number");
    return v.get<T>();
  } else {
    if (!v.is_number_integer()) bad(key, "expected an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) bad(key, "must be >= 0");
    }
    return v.get<T>();
  }
}

template <typename T, typename Access>
Entry field(std::string key, Access access) {
  return {key, [access](const Config& c) { return json(access(const_cast<Config&>(c))); },
          [access, key](Config& c, const json& v) { access(c) = convert<T>(v, key); }};
}

template <typename Access, typename Parse, typename Print>
Entry enum_field(std::string key, Access access, Parse parse, Print print) {
  return {key, [access, print](const Config& c) { return json(print(access(const_cast<Config&>(c)))); },
          [access, parse, key](Config& c, const json& v) {
            try {
              access(c) = parse(convert<std::string>(v, key));
            } catch (const std::invalid_argument& e) {
              bad(key, e.what());
            }
          }};
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

// Lists accept a JSON array or a comma-separated string.
std::vector<json> list_items(const json& v, const std::string& key) {
  if (v.is_array()) return {v.begin(), v.end()};
  if (v.is_string()) {
    std::vector<json> out;
    for (auto& s : split(v.get<std::string>(), ',')) {
      json parsed = json::parse(s, nullptr, false);
      out.push_back(parsed.is_discarded() ? json(s) : parsed);
    }
    return out;
  }
  bad(key, "expected a list");
}

double to_double(const std::string& s, const std::string& key) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    bad(key, "bad number '" + s + "'");
  }
  if (used != s.size()) bad(key, "bad number '" + s + "'");
  return v;
}

// "token:e:coverage[:g1/g2[:informativeness]]" or an object.
PlantedKeyword parse_keyword(const json& v, const std::string& key) {
  PlantedKeyword k;
  if (v.is_object()) {
    k.token = convert<std::string>(v.at("token"), key);
    k.expectation = convert<double>(v.at("expectation"), key);
    k.coverage = convert<double>(v.at("coverage"), key);
    if (v.contains("groups"))
      for (const auto& g : v.at("groups")) k.groups.push_back(convert<int>(g, key));
    if (v.contains("informativeness")) k.informativeness = convert<double>(v.at("informativeness"), key);
    return k;
  }
  const auto parts = split(convert<std::string>(v, key), ':');
  if (parts.size() < 3 || parts.size() > 5) bad(key, "keyword must be token:e:coverage[:groups[:weight]]");
  k.token = parts[0];
  k.expectation = to_double(parts[1], key);
  k.coverage = to_double(parts[2], key);
  if (parts.size() > 3)
    for (const auto& g : split(parts[3], '/')) k.groups.push_back(static_cast<int>(to_double(g, key)));
  if (parts.size() > 4) k.informativeness = to_double(parts[4], key);
  return k;
}

json keyword_json(const PlantedKeyword& k) {
  json o = {{"token", k.token}, {"expectation", k.expectation}, {"coverage", k.coverage}, {"groups", k.groups}};
  if (k.informativeness >= 0.0) o["informativeness"] = k.informativeness;
  return o;
}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    e.push_back(field<std::uint64_t>("seed", [](Config& c) -> auto& { return c.seed; }));
    // data
    e.push_back(field<std::size_t>("data.n_positive", [](Config& c) -> auto& { return c.data.n_positive; }));
    e.push_back(field<std::size_t>("data.n_unlabeled", [](Config& c) -> auto& { return c.data.n_unlabeled; }));
    e.push_back(field<std::size_t>("data.n_test", [](Config& c) -> auto& { return c.data.n_test; }));
    e.push_back(field<double>("data.class_balance", [](Config& c) -> auto& { return c.data.class_balance; }));
    e.push_back(field<std::size_t>("data.n_seed_events", [](Config& c) -> auto& { return c.data.n_seed_events; }));
    e.push_back(field<std::size_t>("data.n_other_events", [](Config& c) -> auto& { return c.data.n_other_events; }));
    e.push_back(field<std::size_t>("data.tokens_per_event", [](Config& c) -> auto& { return c.data.tokens_per_event; }));
    e.push_back(field<double>("data.seed_event_share", [](Config& c) -> auto& { return c.data.seed_event_share; }));
    e.push_back(field<std::size_t>("data.n_topic_tokens", [](Config& c) -> auto& { return c.data.n_topic_tokens; }));
    e.push_back(field<std::size_t>("data.n_negative_groups", [](Config& c) -> auto& { return c.data.n_negative_groups; }));
    e.push_back(field<std::size_t>("data.tokens_per_group", [](Config& c) -> auto& { return c.data.tokens_per_group; }));
    e.push_back(field<std::size_t>("data.n_background_tokens", [](Config& c) -> auto& { return c.data.n_background_tokens; }));
    e.push_back(field<std::size_t>("data.words_per_post", [](Config& c) -> auto& { return c.data.words_per_post; }));
    e.push_back(field<std::size_t>("data.event_words", [](Config& c) -> auto& { return c.data.event_words; }));
    e.push_back(field<std::size_t>("data.group_words", [](Config& c) -> auto& { return c.data.group_words; }));
    e.push_back(field<std::size_t>("data.topic_words", [](Config& c) -> auto& { return c.data.topic_words; }));
    e.push_back(field<double>("data.labeled_keyword_scale", [](Config& c) -> auto& { return c.data.labeled_keyword_scale; }));
    e.push_back({"data.keywords",
                 [](const Config& c) {
                   json a = json::array();
                   for (const auto& k : c.data.keywords) a.push_back(keyword_json(k));
                   return a;
                 },
                 [](Config& c, const json& v) {
                   std::vector<PlantedKeyword> ks;
                   for (const auto& item : list_items(v, "data.keywords")) ks.push_back(parse_keyword(item, "data.keywords"));
                   c.data.keywords = std::move(ks);
                 }});
    e.push_back(field<std::size_t>("workers.n_workers", [](Config& c) -> auto& { return c.data.workers.n_workers; }));
    e.push_back(field<double>("workers.accuracy_min", [](Config& c) -> auto& { return c.data.workers.accuracy_min; }));
    e.push_back(field<double>("workers.accuracy_max", [](Config& c) -> auto& { return c.data.workers.accuracy_max; }));
    e.push_back(field<std::size_t>("workers.n_adversarial", [](Config& c) -> auto& { return c.data.workers.n_adversarial; }));
    e.push_back(field<double>("workers.adversarial_accuracy", [](Config& c) -> auto& { return c.data.workers.adversarial_accuracy; }));
    // model and training
    e.push_back(enum_field("model.kind", [](Config& c) -> auto& { return c.loop.model_kind; },
                           [](const std::string& s) { return parse_model_kind(s); },
                           [](ModelKind k) { return to_string(k); }));
    e.push_back({"model.hidden", [](const Config& c) { return json(c.loop.hidden); },
                 [](Config& c, const json& v) {
                   std::vector<std::size_t> h;
                   for (const auto& item : list_items(v, "model.hidden")) h.push_back(convert<std::size_t>(item, "model.hidden"));
                   c.loop.hidden = std::move(h);
                 }});
    e.push_back(field<double>("training.lambda", [](Config& c) -> auto& { return c.loop.training.lambda; }));
    e.push_back(field<double>("training.lambda_per_labeled", [](Config& c) -> auto& { return c.loop.lambda_per_labeled; }));
    e.push_back(field<double>("training.prior_sigma", [](Config& c) -> auto& { return c.loop.training.prior_sigma; }));
    e.push_back(field<double>("training.learning_rate", [](Config& c) -> auto& { return c.loop.training.learning_rate; }));
    e.push_back(field<double>("training.adam_beta1", [](Config& c) -> auto& { return c.loop.training.adam_beta1; }));
    e.push_back(field<double>("training.adam_beta2", [](Config& c) -> auto& { return c.loop.training.adam_beta2; }));
    e.push_back(field<double>("training.adam_epsilon", [](Config& c) -> auto& { return c.loop.training.adam_epsilon; }));
    e.push_back(field<int>("training.max_epochs", [](Config& c) -> auto& { return c.loop.training.max_epochs; }));
    e.push_back(field<int>("training.batch_size", [](Config& c) -> auto& { return c.loop.training.batch_size; }));
    e.push_back(field<double>("training.unlabeled_negative_weight",
                              [](Config& c) -> auto& { return c.loop.training.unlabeled_negative_weight; }));
    e.push_back(field<double>("training.convergence_tolerance",
                              [](Config& c) -> auto& { return c.loop.training.convergence_tolerance; }));
    e.push_back(field<bool>("training.parallel", [](Config& c) -> auto& { return c.loop.training.parallel; }));
    // joint inference
    e.push_back(field<int>("joint.max_rounds", [](Config& c) -> auto& { return c.loop.joint.max_rounds; }));
    e.push_back(field<int>("joint.gradient_steps", [](Config& c) -> auto& { return c.loop.joint.gradient_steps; }));
    e.push_back(field<double>("joint.alpha", [](Config& c) -> auto& { return c.loop.joint.alpha; }));
    e.push_back(field<double>("joint.j3_tolerance", [](Config& c) -> auto& { return c.loop.joint.j3_tolerance; }));
    e.push_back(field<double>("joint.e_tolerance", [](Config& c) -> auto& { return c.loop.joint.e_tolerance; }));
    e.push_back(field<int>("joint.final_epochs", [](Config& c) -> auto& { return c.loop.joint.final_epochs; }));
    e.push_back(enum_field("joint.fusion", [](Config& c) -> auto& { return c.loop.joint.fusion; },
                           [](const std::string& s) { return parse_fusion_source(s); },
                           [](FusionSource f) { return to_string(f); }));
    e.push_back(enum_field("joint.crowd_prior", [](Config& c) -> auto& { return c.loop.joint.crowd_prior; },
                           [](const std::string& s) { return parse_crowd_prior(s); },
                           [](CrowdPrior p) { return to_string(p); }));
    // loop
    e.push_back(field<std::size_t>("loop.classify_batch", [](Config& c) -> auto& { return c.loop.classify_batch; }));
    e.push_back(field<std::size_t>("loop.discovery_batch", [](Config& c) -> auto& { return c.loop.discovery_batch; }));
    e.push_back(field<std::size_t>("loop.redundancy", [](Config& c) -> auto& { return c.loop.redundancy; }));
    e.push_back(field<std::size_t>("loop.pick_group_size", [](Config& c) -> auto& { return c.loop.pick_group_size; }));
    e.push_back(field<std::size_t>("loop.pick_redundancy", [](Config& c) -> auto& { return c.loop.pick_redundancy; }));
    e.push_back(field<double>("loop.pick_noise", [](Config& c) -> auto& { return c.loop.pick_noise; }));
    e.push_back(field<std::size_t>("loop.top_n", [](Config& c) -> auto& { return c.loop.top_n; }));
    e.push_back(field<int>("loop.max_iterations", [](Config& c) -> auto& { return c.loop.max_iterations; }));
    e.push_back(field<int>("loop.patience", [](Config& c) -> auto& { return c.loop.patience; }));
    e.push_back(field<double>("loop.min_delta", [](Config& c) -> auto& { return c.loop.min_delta; }));
    e.push_back(field<bool>("loop.stop_on_convergence", [](Config& c) -> auto& { return c.loop.stop_on_convergence; }));
    e.push_back(field<double>("loop.validation_fraction", [](Config& c) -> auto& { return c.loop.validation_fraction; }));
    e.push_back(enum_field("loop.expectation_source", [](Config& c) -> auto& { return c.loop.expectation_source; },
                           [](const std::string& s) { return parse_expectation_source(s); },
                           [](ExpectationSource s) { return to_string(s); }));
    e.push_back(enum_field("loop.keyword_source", [](Config& c) -> auto& { return c.loop.keyword_source; },
                           [](const std::string& s) { return parse_keyword_source(s); },
                           [](KeywordSource s) { return to_string(s); }));
    e.push_back(field<int>("loop.min_frequency", [](Config& c) -> auto& { return c.min_frequency; }));
    e.push_back({"loop.initial_keywords", [](const Config& c) { return json(c.initial_keywords); },
                 [](Config& c, const json& v) {
                   std::vector<std::string> ks;
                   for (const auto& item : list_items(v, "loop.initial_keywords"))
                     ks.push_back(convert<std::string>(item, "loop.initial_keywords"));
                   c.initial_keywords = std::move(ks);
                 }});
    // experiments
    e.push_back({"q1.models",
                 [](const Config& c) {
                   json a = json::array();
                   for (auto k : c.experiment.q1_models) a.push_back(to_string(k));
                   return a;
                 },
                 [](Config& c, const json& v) {
                   std::vector<ModelKind> ks;
                   for (const auto& item : list_items(v, "q1.models")) {
                     try {
                       ks.push_back(parse_model_kind(convert<std::string>(item, "q1.models")));
                     } catch (const std::invalid_argument& ex) {
                       bad("q1.models", ex.what());
                     }
                   }
                   c.experiment.q1_models = std::move(ks);
                 }});
    e.push_back(field<std::string>("q2.embedding_table", [](Config& c) -> auto& { return c.experiment.embedding_table; }));
    e.push_back(field<std::size_t>("q2.embedding_dim", [](Config& c) -> auto& { return c.experiment.embedding_dim; }));
    e.push_back(field<std::size_t>("q2.offtopic_neighbors", [](Config& c) -> auto& { return c.experiment.offtopic_neighbors; }));
    e.push_back(field<std::size_t>("q3.extra_labels_per_round",
                                   [](Config& c) -> auto& { return c.experiment.extra_labels_per_round; }));
    e.push_back(field<std::size_t>("q4.noisy_workers", [](Config& c) -> auto& { return c.experiment.noisy_workers; }));
    e.push_back(field<double>("q4.noisy_accuracy", [](Config& c) -> auto& { return c.experiment.noisy_accuracy; }));
    e.push_back(field<double>("q4.adversarial_accuracy", [](Config& c) -> auto& { return c.experiment.adversarial_accuracy; }));
    return e;
  }();
  return entries;
}

const Entry& find_entry(const std::string& key) {
  for (const auto& e : registry())
    if (e.key == key) return e;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : registry()) keys.push_back(e.key);
  return keys;
}

void set_config_value(Config& config, const std::string& key, const json& value) {
  find_entry(key).set(config, value);
  if (key == "seed") apply_seed(config, config.seed);
}

json get_config_value(const Config& config, const std::string& key) { return find_entry(key).get(config); }

void apply_override(Config& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  set_config_value(config, key, value);
}

Config parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  Config c;
  for (const auto& [key, value] : doc.items()) set_config_value(c, key, value);
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const Config& config) {
  json doc = json::object();
  for (const auto& e : registry()) doc[e.key] = e.get(config);
  return doc;
}

void save_config(const Config& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_json(config).dump(2) << '\n';
}

void apply_seed(Config& config, std::uint64_t seed) {
  config.seed = seed;
  config.data.seed = seed;
  config.loop.seed = seed;
}

std::string config_fingerprint(const Config& config) {
  auto doc = to_json(config);
  doc.erase("seed");
  char buf[20];
  std::snprintf(buf, sizeof buf, "%08llx",
                static_cast<unsigned long long>(hash_string(doc.dump()) & 0xffffffffULL));
  return buf;
}

}  // namespace hail
