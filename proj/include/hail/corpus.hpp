#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hail {

struct Feature {
  std::int32_t index;
  double value;
  friend bool operator==(const Feature&, const Feature&) = default;
};

// Sparse bag-of-words row, sorted by index with strictly positive counts.
using SparseRow = std::vector<Feature>;

struct Micropost {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
  SparseRow bow;  // empty until vectorized
};

struct LabeledMicropost {
  Micropost post;
  int label = 0;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { kPositive, kUnlabeled, kTest };

struct Corpus {
  std::vector<Micropost> positives;  // L
  std::vector<Micropost> unlabeled;  // U
  std::vector<LabeledMicropost> test;

  std::size_t size() const { return positives.size() + unlabeled.size() + test.size(); }
};

class Vocabulary {
 public:
  Vocabulary() = default;
  // Entries must already be in index order.
  Vocabulary(std::vector<std::string> tokens, std::vector<std::int64_t> frequencies,
             int min_frequency);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::int64_t frequency(std::size_t index) const { return frequencies_.at(index); }
  std::optional<std::int32_t> lookup(std::string_view token) const;
  int min_frequency() const { return min_frequency_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  // Stable fingerprint of the token order; stored in model checkpoints.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> tokens_;
  std::vector<std::int64_t> frequencies_;
  std::unordered_map<std::string, std::int32_t> index_;
  int min_frequency_ = 1;
};

enum class CorpusFormat { kJsonLines, kTsv };

CorpusFormat parse_corpus_format(std::string_view name);

// Reads a corpus file. JSON lines: {"id","text","split","label"?};
// TSV: id<TAB>split<TAB>label-or-empty<TAB>text.
Corpus load_corpus(const std::filesystem::path& path,
                   CorpusFormat format = CorpusFormat::kJsonLines);
// Same record format; only the test split is required.
Corpus load_test_set(const std::filesystem::path& path, CorpusFormat format = CorpusFormat::kJsonLines);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// Lowercased alphanumeric tokens; URLs, @-mentions and the retweet marker
// are dropped, '#' is stripped from hashtags.
std::vector<std::string> tokenize(std::string_view text);

// Built over positives and unlabeled only. Index order is descending
// frequency, ties by token.
Vocabulary build_vocabulary(const Corpus& corpus, int min_frequency = 2);

SparseRow vectorize(const std::vector<std::string>& tokens, const Vocabulary& vocab);
// Fills every micropost's bag-of-words against the vocabulary.
void vectorize_corpus(Corpus& corpus, const Vocabulary& vocab);

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocabulary(const std::filesystem::path& path);

// Indices into corpus.unlabeled whose token list contains `keyword`
// exactly, ascending.
std::vector<std::size_t> filter_by_keyword(const Corpus& corpus, std::string_view keyword);

// min(m, |pool|) distinct elements of the pool, uniform without
// replacement, fixed by the seed.
std::vector<std::size_t> sample_for_annotation(const std::vector<std::size_t>& pool,
                                               std::size_t m, std::uint64_t seed);

}  // namespace hail
