#include "hail/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "hail/rng.hpp"
#include "json.hpp"

namespace hail {
namespace {

bool is_token_char(unsigned char c) {
  // Bytes above 0x7f belong to multi-byte UTF-8 sequences; keep them inside
  // tokens rather than splitting words in other scripts.
  return std::isalnum(c) || c >= 0x80;
}

bool is_url(std::string_view chunk) {
  return chunk.find("://") != std::string_view::npos || chunk.starts_with("www.");
}

std::string_view trim_edges(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && !is_token_char(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && !is_token_char(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

Split parse_split(std::string_view s, std::size_t line_no) {
  if (s == "positive") return Split::kPositive;
  if (s == "unlabeled") return Split::kUnlabeled;
  if (s == "test") return Split::kTest;
  throw CorpusError("line " + std::to_string(line_no) + ": unknown split '" +
                    std::string(s) + "'");
}

struct RawRecord {
  std::string id;
  std::string text;
  Split split;
  std::optional<int> label;
};

RawRecord parse_json_record(const std::string& line, std::size_t line_no) {
  const auto fail = [&](const std::string& what) {
    return CorpusError("line " + std::to_string(line_no) + ": " + what);
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw fail(std::string("malformed record: ") + e.what());
  }
  if (!j.is_object()) throw fail("record is not an object");
  for (const char* key : {"id", "text", "split"})
    if (!j.contains(key) || !j[key].is_string())
      throw fail(std::string("missing string field '") + key + "'");
  RawRecord r;
  r.id = j["id"].get<std::string>();
  r.text = j["text"].get<std::string>();
  r.split = parse_split(j["split"].get<std::string>(), line_no);
  if (j.contains("label")) {
    const auto& l = j["label"];
    if (!l.is_number_integer() || (l.get<int>() != 0 && l.get<int>() != 1))
      throw fail("label must be 0 or 1");
    r.label = l.get<int>();
  }
  return r;
}

RawRecord parse_tsv_record(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos)
      throw CorpusError("line " + std::to_string(line_no) + ": expected 4 tab-separated fields");
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  fields.push_back(line.substr(start));
  RawRecord r;
  r.id = fields[0];
  r.split = parse_split(fields[1], line_no);
  if (!fields[2].empty()) {
    if (fields[2] != "0" && fields[2] != "1")
      throw CorpusError("line " + std::to_string(line_no) + ": label must be 0 or 1");
    r.label = fields[2] == "1" ? 1 : 0;
  }
  r.text = fields[3];
  return r;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::vector<std::int64_t> frequencies,
                       int min_frequency)
    : tokens_(std::move(tokens)), frequencies_(std::move(frequencies)), min_frequency_(min_frequency) {
  if (tokens_.size() != frequencies_.size())
    throw std::invalid_argument("Vocabulary: token/frequency length mismatch");
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second)
      throw std::invalid_argument("Vocabulary: duplicate token '" + tokens_[i] + "'");
  }
}

std::optional<std::int32_t> Vocabulary::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = hash_string("vocab");
  for (const auto& t : tokens_) h = mix64(h ^ hash_string(t));
  return h;
}

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "jsonl" || name == "json") return CorpusFormat::kJsonLines;
  if (name == "tsv") return CorpusFormat::kTsv;
  throw CorpusError("unknown corpus format '" + std::string(name) + "'");
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view chunk = text.substr(i, j - i);
    i = j;
    if (chunk.empty()) continue;
    std::string_view lead = chunk;
    while (!lead.empty() && std::string_view("\"'([{<").find(lead.front()) != std::string_view::npos)
      lead.remove_prefix(1);
    if (lead.starts_with("@") || is_url(lead)) continue;
    if (trim_edges(chunk) == "RT") continue;

    std::string current;
    for (unsigned char c : chunk) {
      if (is_token_char(c)) {
        current.push_back(static_cast<char>(std::tolower(c)));
      } else if (!current.empty()) {
        out.push_back(std::move(current));
        current.clear();
      }
    }
    if (!current.empty()) out.push_back(std::move(current));
  }
  return out;
}

namespace {

Corpus read_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());
  Corpus corpus;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    RawRecord r = format == CorpusFormat::kJsonLines ? parse_json_record(line, line_no)
                                                      : parse_tsv_record(line, line_no);
    if (!seen.insert(r.id).second)
      throw CorpusError("line " + std::to_string(line_no) + ": duplicate id '" + r.id + "'");
    if (r.split == Split::kTest && !r.label)
      throw CorpusError("line " + std::to_string(line_no) + ": test record requires a label");
    if (r.split != Split::kTest && r.label)
      throw CorpusError("line " + std::to_string(line_no) + ": label only allowed on test records");
    Micropost post{r.id, r.text, tokenize(r.text), {}};
    switch (r.split) {
      case Split::kPositive: corpus.positives.push_back(std::move(post)); break;
      case Split::kUnlabeled: corpus.unlabeled.push_back(std::move(post)); break;
      case Split::kTest: corpus.test.push_back({std::move(post), *r.label}); break;
    }
  }
  return corpus;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  Corpus corpus = read_corpus(path, format);
  if (corpus.positives.empty()) throw CorpusError("corpus has no positive records");
  return corpus;
}

Corpus load_test_set(const std::filesystem::path& path, CorpusFormat format) {
  Corpus corpus = read_corpus(path, format);
  if (corpus.test.empty()) throw CorpusError(path.string() + " has no test records");
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write corpus file " + path.string());
  const auto emit = [&](const Micropost& p, const char* split, std::optional<int> label) {
    nlohmann::json j = {{"id", p.id}, {"text", p.text}, {"split", split}};
    if (label) j["label"] = *label;
    out << j.dump() << '\n';
  };
  for (const auto& p : corpus.positives) emit(p, "positive", std::nullopt);
  for (const auto& p : corpus.unlabeled) emit(p, "unlabeled", std::nullopt);
  for (const auto& t : corpus.test) emit(t.post, "test", t.label);
}

Vocabulary build_vocabulary(const Corpus& corpus, int min_frequency) {
  if (min_frequency < 1) throw std::invalid_argument("build_vocabulary: min_frequency must be >= 1");
  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto* split : {&corpus.positives, &corpus.unlabeled})
    for (const auto& p : *split)
      for (const auto& t : p.tokens) ++counts[t];

  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_frequency) kept.emplace_back(tok, n);
  if (kept.empty()) throw CorpusError("vocabulary is empty after frequency threshold");
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  std::vector<std::int64_t> freqs;
  for (auto& [tok, n] : kept) {
    tokens.push_back(tok);
    freqs.push_back(n);
  }
  return Vocabulary(std::move(tokens), std::move(freqs), min_frequency);
}

SparseRow vectorize(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  std::map<std::int32_t, double> counts;
  for (const auto& t : tokens)
    if (auto idx = vocab.lookup(t)) counts[*idx] += 1.0;
  SparseRow row;
  row.reserve(counts.size());
  for (auto [idx, c] : counts) row.push_back({idx, c});
  return row;
}

void vectorize_corpus(Corpus& corpus, const Vocabulary& vocab) {
  for (auto& p : corpus.positives) p.bow = vectorize(p.tokens, vocab);
  for (auto& p : corpus.unlabeled) p.bow = vectorize(p.tokens, vocab);
  for (auto& t : corpus.test) t.post.bow = vectorize(t.post.tokens, vocab);
}

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write vocabulary file " + path.string());
  for (std::size_t i = 0; i < vocab.size(); ++i)
    out << i << '\t' << vocab.token(i) << '\t' << vocab.frequency(i) << '\n';
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::vector<std::int64_t> freqs;
  std::string line;
  std::size_t line_no = 0;
  std::int64_t min_freq = INT64_MAX;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::size_t index;
    std::string token;
    std::int64_t freq;
    if (!(fields >> index) || fields.get() != '\t' || !std::getline(fields, token, '\t') ||
        !(fields >> freq))
      throw CorpusError("vocabulary line " + std::to_string(line_no) + ": malformed");
    if (index != tokens.size())
      throw CorpusError("vocabulary line " + std::to_string(line_no) + ": index out of order");
    tokens.push_back(token);
    freqs.push_back(freq);
    min_freq = std::min(min_freq, freq);
  }
  if (tokens.empty()) throw CorpusError("vocabulary file is empty");
  return Vocabulary(std::move(tokens), std::move(freqs), static_cast<int>(std::max<std::int64_t>(1, min_freq)));
}

std::vector<std::size_t> filter_by_keyword(const Corpus& corpus, std::string_view keyword) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < corpus.unlabeled.size(); ++i) {
    const auto& toks = corpus.unlabeled[i].tokens;
    if (std::find(toks.begin(), toks.end(), keyword) != toks.end()) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> sample_for_annotation(const std::vector<std::size_t>& pool,
                                               std::size_t m, std::uint64_t seed) {
  if (pool.empty()) throw std::invalid_argument("sample_for_annotation: empty pool");
  if (m < 1) throw std::invalid_argument("sample_for_annotation: m must be >= 1");
  std::vector<std::size_t> items = pool;
  const std::size_t k = std::min(m, items.size());
  Rng rng(derive_seed(seed, {hash_string("sample")}));
  // Partial Fisher-Yates: the first k slots are the sample.
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.below(items.size() - i);
    std::swap(items[i], items[j]);
  }
  items.resize(k);
  return items;
}

}  // namespace hail
