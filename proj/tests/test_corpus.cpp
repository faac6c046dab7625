#include <algorithm>
#include <fstream>
#include <set>

#include "doctest.h"
#include "hail/corpus.hpp"
#include "support.hpp"

using namespace hail;

namespace {

Corpus tiny_corpus() {
  Corpus c;
  auto post = [](std::string id, std::string text) {
    Micropost p{std::move(id), text, tokenize(text), {}};
    return p;
  };
  c.positives = {post("p1", "hack at bank"), post("p2", "bank hack hack")};
  c.unlabeled = {post("u1", "hack tips"), post("u2", "webinar tips"), post("u3", "hacker news")};
  c.test = {{post("t1", "bank breach"), 1}};
  return c;
}

}  // namespace

TEST_CASE("tokenize drops urls, mentions and the retweet marker") {
  CHECK(tokenize("RT @equifax: Hack exposed https://t.co/abc #CyberAttack!") ==
        std::vector<std::string>{"hack", "exposed", "cyberattack"});
  CHECK(tokenize("  ") .empty());
  CHECK(tokenize("143m Americans' data") == std::vector<std::string>{"143m", "americans", "data"});
  CHECK(tokenize("www.example.com is down") == std::vector<std::string>{"is", "down"});
}

TEST_CASE("vocabulary order and min frequency") {
  const auto c = tiny_corpus();
  const auto v = build_vocabulary(c, 2);
  // hack x4, bank x2, tips x2; test split is not counted.
  CHECK(v.tokens() == std::vector<std::string>{"hack", "bank", "tips"});
  CHECK(v.lookup("hack") == 0);
  CHECK_FALSE(v.lookup("breach").has_value());
  const auto all = build_vocabulary(c, 1);
  CHECK(all.size() == 7);
  CHECK(all.fingerprint() != v.fingerprint());
  CHECK(build_vocabulary(c, 2).fingerprint() == v.fingerprint());
}

TEST_CASE("vectorize counts and sorts") {
  const auto c = tiny_corpus();
  const auto v = build_vocabulary(c, 2);
  const auto row = vectorize(tokenize("tips hack unknown hack"), v);
  REQUIRE(row.size() == 2);
  CHECK(row[0] == Feature{0, 2.0});
  CHECK(row[1] == Feature{2, 1.0});
}

TEST_CASE("keyword filter matches whole tokens only") {
  const auto c = tiny_corpus();
  CHECK(filter_by_keyword(c, "hack") == std::vector<std::size_t>{0});
  CHECK(filter_by_keyword(c, "tips") == std::vector<std::size_t>{0, 1});
  CHECK(filter_by_keyword(c, "zzz").empty());
}

TEST_CASE("corpus round trip through json lines") {
  const auto dir = testing::scratch_dir("corpus_rt");
  const auto c = tiny_corpus();
  save_corpus(c, dir / "c.jsonl");
  const auto back = load_corpus(dir / "c.jsonl");
  REQUIRE(back.positives.size() == 2);
  REQUIRE(back.unlabeled.size() == 3);
  REQUIRE(back.test.size() == 1);
  CHECK(back.unlabeled[2].text == "hacker news");
  CHECK(back.test[0].label == 1);
  CHECK(back.positives[1].tokens == c.positives[1].tokens);
}

TEST_CASE("tsv corpus and malformed records") {
  const auto dir = testing::scratch_dir("corpus_tsv");
  {
    std::ofstream out(dir / "c.tsv");
    out << "p1\tpositive\t\thack at bank\nu1\tunlabeled\t\thack tips\nt1\ttest\t0\tnothing here\n";
  }
  const auto c = load_corpus(dir / "c.tsv", CorpusFormat::kTsv);
  CHECK(c.positives.size() == 1);
  CHECK(c.test.at(0).label == 0);

  {
    std::ofstream out(dir / "dup.jsonl");
    out << R"({"id":"a","text":"x","split":"positive"})" << '\n' << R"({"id":"a","text":"y","split":"unlabeled"})" << '\n';
  }
  CHECK_THROWS_AS(load_corpus(dir / "dup.jsonl"), CorpusError);
  {
    std::ofstream out(dir / "nolabel.jsonl");
    out << R"({"id":"a","text":"x","split":"positive"})" << '\n' << R"({"id":"t","text":"y","split":"test"})" << '\n';
  }
  CHECK_THROWS_AS(load_corpus(dir / "nolabel.jsonl"), CorpusError);
  {
    std::ofstream out(dir / "testonly.jsonl");
    out << R"({"id":"t","text":"y","split":"test","label":1})" << '\n';
  }
  CHECK_THROWS_AS(load_corpus(dir / "testonly.jsonl"), CorpusError);
  CHECK(load_test_set(dir / "testonly.jsonl").test.size() == 1);
  CHECK_THROWS_AS(load_corpus(dir / "missing.jsonl"), CorpusError);
}

TEST_CASE("vocabulary file round trip") {
  const auto dir = testing::scratch_dir("vocab_rt");
  const auto v = build_vocabulary(tiny_corpus(), 1);
  save_vocabulary(v, dir / "v.tsv");
  const auto back = load_vocabulary(dir / "v.tsv");
  CHECK(back.tokens() == v.tokens());
  CHECK(back.fingerprint() == v.fingerprint());
}

TEST_CASE("annotation sample is a seeded subset without repeats") {
  std::vector<std::size_t> pool(100);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = 3 * i;
  const auto a = sample_for_annotation(pool, 30, 7);
  CHECK(a.size() == 30);
  CHECK(std::set<std::size_t>(a.begin(), a.end()).size() == 30);
  for (auto i : a) CHECK(i % 3 == 0);
  CHECK(sample_for_annotation(pool, 30, 7) == a);
  CHECK(sample_for_annotation(pool, 30, 8) != a);
  CHECK(sample_for_annotation(pool, 500, 7).size() == 100);
}
