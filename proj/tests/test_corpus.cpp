#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "doctest.h"
#include "pdpnet/corpus.hpp"

using namespace pdpnet;
namespace fs = std::filesystem;

namespace {

struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& name, const std::string& content) {
    path = fs::temp_directory_path() / ("pdpnet_test_" + name);
    std::ofstream out(path);
    out << content;
  }
  ~TempFile() {
    std::error_code ec;
    fs::remove(path, ec);
  }
  std::string str() const { return path.string(); }
};

std::string record(const std::string& id, const std::string& author, const std::string& words,
                   const std::string& tags) {
  return "{\"id\":\"" + id + "\",\"author\":\"" + author + "\",\"text-tokens\":[" + words +
         "],\"hashtags\":[" + tags + "]}\n";
}

}  // namespace

TEST_CASE("loading lowercases tokens and shares hashtag vocabulary") {
  TempFile f("share.jsonl",
             record("t1", "alice", "\"Happy\",\"days\"", "\"#Happy\",\"#Win\"") +
                 record("t2", "alice", "\"days\"", "\"#days\""));
  LoadReport rep;
  Corpus c = load_corpus(f.str(), 1, 1, &rep);
  CHECK(rep.lines == 2);
  CHECK(rep.malformed == 0);
  REQUIRE(c.docs.size() == 2);
  REQUIRE(c.authors.size() == 1);
  CHECK_FALSE(c.oov.has_value());

  auto index_of = [&](const std::string& w) {
    auto it = std::find(c.vocab.begin(), c.vocab.end(), w);
    REQUIRE(it != c.vocab.end());
    return std::uint32_t(it - c.vocab.begin());
  };
  // '#Happy' strips and lowercases to the same symbol as the word 'Happy'
  CHECK(c.docs[0].words[0] == index_of("happy"));
  CHECK(c.docs[0].tags[0] == index_of("happy"));
  CHECK(c.docs[0].words[1] == index_of("days"));
  CHECK(c.docs[1].tags[0] == index_of("days"));
  CHECK(std::find(c.vocab.begin(), c.vocab.end(), "Happy") == c.vocab.end());
}

TEST_CASE("author activity threshold drops authors and their documents") {
  std::string content;
  for (int i = 0; i < 3; ++i)
    content += record("a" + std::to_string(i), "alice", "\"x\"", "\"#y\"");
  content += record("b0", "bob", "\"x\"", "\"#y\"");
  TempFile f("thresh.jsonl", content);
  LoadReport rep;
  Corpus c = load_corpus(f.str(), 2, 1, &rep);
  CHECK(c.authors.size() == 1);
  CHECK(c.authors[0] == "alice");
  CHECK(c.docs.size() == 3);
  CHECK(rep.dropped_authors == 1);
  CHECK(rep.dropped_docs == 1);
}

TEST_CASE("rare tokens collapse into one sink symbol") {
  std::string content = record("t1", "alice", "\"common\",\"common\",\"rare1\"", "\"#common\"") +
                        record("t2", "alice", "\"common\",\"rare2\"", "\"#common\"");
  TempFile f("oov.jsonl", content);
  LoadReport rep;
  Corpus c = load_corpus(f.str(), 1, 2, &rep);
  REQUIRE(c.oov.has_value());
  CHECK(c.vocab[*c.oov] == "<oov>");
  CHECK(rep.oov_tokens == 2);
  // both rare tokens map to the same sink
  CHECK(c.docs[0].words[2] == *c.oov);
  CHECK(c.docs[1].words[1] == *c.oov);
  CHECK(c.docs[0].words[0] != *c.oov);
}

TEST_CASE("malformed records: tolerated below one percent, fatal above") {
  std::string good;
  for (int i = 0; i < 199; ++i)
    good += record("t" + std::to_string(i), "alice", "\"x\"", "\"#y\"");

  TempFile ok("mal_ok.jsonl", good + "this is not json\n");
  LoadReport rep;
  Corpus c = load_corpus(ok.str(), 1, 1, &rep);
  CHECK(rep.lines == 200);
  CHECK(rep.malformed == 1);
  CHECK(c.docs.size() == 199);

  TempFile bad("mal_bad.jsonl",
               record("t1", "alice", "\"x\"", "\"#y\"") + "this is not json\n");
  CHECK_THROWS_AS(load_corpus(bad.str(), 1, 1), DataError);

  TempFile missing("mal_missing.jsonl",
                   "{\"id\":\"t\",\"author\":\"a\",\"text-tokens\":[\"x\"]}\n");
  CHECK_THROWS_AS(load_corpus(missing.str(), 1, 1), DataError);

  CHECK_THROWS_AS(load_corpus("/nonexistent/path.jsonl", 1, 1), DataError);
  TempFile empty("empty.jsonl", "\n  \n");
  CHECK_THROWS_AS(load_corpus(empty.str(), 1, 1), DataError);
}

TEST_CASE("corpus save/load round-trip") {
  SynthParams p;
  p.n_authors = 6;
  p.docs_per_author = 4;
  p.words_per_doc = 8;
  p.tags_per_doc = 2;
  p.topics = 3;
  p.vocab_size = 30;
  Rng rng(5);
  SynthData data = generate_synthetic(p, rng);

  TempFile f("roundtrip.jsonl", "");
  save_corpus(data.corpus, f.str());
  Corpus back = load_corpus(f.str(), 1, 1);
  // loading interns in encounter order; token identity must survive
  REQUIRE(back.docs.size() == data.corpus.docs.size());
  for (std::size_t m = 0; m < back.docs.size(); ++m) {
    const Document &a = data.corpus.docs[m], &b = back.docs[m];
    CHECK(a.id == b.id);
    CHECK(data.corpus.authors[a.author] == back.authors[b.author]);
    REQUIRE(a.words.size() == b.words.size());
    for (std::size_t i = 0; i < a.words.size(); ++i)
      CHECK(data.corpus.vocab[a.words[i]] == back.vocab[b.words[i]]);
    REQUIRE(a.tags.size() == b.tags.size());
    for (std::size_t i = 0; i < a.tags.size(); ++i)
      CHECK(data.corpus.vocab[a.tags[i]] == back.vocab[b.tags[i]]);
  }
}

TEST_CASE("edge list loading: dedup, self-loops, unknown authors") {
  TempFile corpus_f("edges_corpus.jsonl", record("t1", "alice", "\"x\"", "\"#y\"") +
                                              record("t2", "bob", "\"x\"", "\"#y\"") +
                                              record("t3", "carol", "\"x\"", "\"#y\""));
  Corpus c = load_corpus(corpus_f.str(), 1, 1);
  TempFile edges_f("edges.csv",
                   "alice,bob\nbob,alice\nalice,ghost\nalice,alice\ncarol,alice\n\n");
  std::size_t skipped = 0;
  auto edges = load_edges(edges_f.str(), c, &skipped);
  REQUIRE(edges.size() == 2);
  CHECK(skipped == 2);  // unknown author + self-loop
  for (const auto& e : edges) CHECK(e.a < e.b);

  TempFile bad("edges_bad.csv", "alice\n");
  CHECK_THROWS_AS(load_edges(bad.str(), c), DataError);

  // round-trip through save_edges
  TempFile out("edges_out.csv", "");
  save_edges(edges, c, out.str());
  std::size_t skipped2 = 0;
  auto back = load_edges(out.str(), c, &skipped2);
  CHECK(skipped2 == 0);
  REQUIRE(back.size() == edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    CHECK(back[i].a == edges[i].a);
    CHECK(back[i].b == edges[i].b);
  }
}

TEST_CASE("train/test split is stratified and deterministic") {
  SynthParams p;
  p.n_authors = 5;
  p.docs_per_author = 10;
  p.words_per_doc = 4;
  p.tags_per_doc = 1;
  p.topics = 2;
  p.vocab_size = 10;
  Rng rng(9);
  Corpus c = generate_synthetic(p, rng).corpus;

  auto [train, test] = split_train_test(c, 0.9, 42);
  // every author has 10 docs: exactly one goes to test
  CHECK(train.docs.size() == 45);
  CHECK(test.docs.size() == 5);
  std::set<std::uint32_t> test_authors;
  for (const auto& d : test.docs) test_authors.insert(d.author);
  CHECK(test_authors.size() == 5);

  auto [train2, test2] = split_train_test(c, 0.9, 42);
  CHECK(train2.docs == train.docs);
  CHECK(test2.docs == test.docs);
  auto [train3, test3] = split_train_test(c, 0.9, 43);
  CHECK(train3.docs != train.docs);

  // union preserved
  std::set<std::string> ids;
  for (const auto& d : train.docs) ids.insert(d.id);
  for (const auto& d : test.docs) ids.insert(d.id);
  CHECK(ids.size() == c.docs.size());

  CHECK_THROWS_AS(split_train_test(c, 0.0, 1), ValidationError);
  CHECK_THROWS_AS(split_train_test(c, 1.0, 1), ValidationError);
}

TEST_CASE("single-document authors always stay in training") {
  Corpus c;
  c.authors = {"a", "b"};
  c.vocab = {"w"};
  c.docs.push_back({"d1", 0, {0}, {}});
  c.docs.push_back({"d2", 1, {0}, {}});
  auto [train, test] = split_train_test(c, 0.5, 7);
  CHECK(train.docs.size() == 2);
  CHECK(test.docs.empty());
}

TEST_CASE("synthetic corpus has planted structure") {
  SynthParams p;  // defaults: 40 authors, 15 docs, 12 words, 2 tags, K=4, V=120
  Rng rng(4);
  SynthData data = generate_synthetic(p, rng);
  CHECK(data.corpus.docs.size() == 600);
  CHECK(data.corpus.total_words() == 600 * 12);
  CHECK(data.corpus.total_tags() == 600 * 2);
  CHECK(data.doc_labels.size() == 600);
  CHECK(data.author_community.size() == 40);
  CHECK(data.corpus.vocab.size() == 120);
  data.corpus.validate();

  // deterministic: same seed, same corpus and edges
  Rng rng2(4);
  SynthData again = generate_synthetic(p, rng2);
  CHECK(again.corpus == data.corpus);
  CHECK(again.doc_labels == data.doc_labels);
  REQUIRE(again.edges.size() == data.edges.size());

  // links concentrate inside communities
  std::size_t within = 0, across = 0, within_possible = 0, across_possible = 0;
  for (std::uint32_t a = 0; a + 1 < 40; ++a)
    for (std::uint32_t b = a + 1; b < 40; ++b)
      (data.author_community[a] == data.author_community[b] ? within_possible
                                                            : across_possible)++;
  for (const auto& e : data.edges)
    (data.author_community[e.a] == data.author_community[e.b] ? within : across)++;
  double within_rate = double(within) / double(within_possible);
  double across_rate = double(across) / double(across_possible);
  CHECK(within_rate > 0.6);
  CHECK(across_rate < 0.25);

  // words stay inside their topic's vocabulary block most of the time:
  // a doc labeled k has more block-k words than any other block
  std::uint32_t block = 120 / 4;
  std::size_t agree = 0;
  for (std::size_t m = 0; m < data.corpus.docs.size(); ++m) {
    std::vector<int> per_block(4, 0);
    for (auto w : data.corpus.docs[m].words) per_block[std::min(w / block, 3u)]++;
    std::uint32_t best =
        std::uint32_t(std::max_element(per_block.begin(), per_block.end()) - per_block.begin());
    if (best == data.doc_labels[m]) agree++;
  }
  CHECK(double(agree) / double(data.corpus.docs.size()) > 0.9);
}

TEST_CASE("single-topic synthetic corpus is uniform") {
  SynthParams p;
  p.n_authors = 4;
  p.docs_per_author = 3;
  p.topics = 1;
  p.vocab_size = 8;
  p.author_signal = 1.0;
  Rng rng(2);
  SynthData data = generate_synthetic(p, rng);
  for (auto l : data.doc_labels) CHECK(l == 0);
  for (auto cmty : data.author_community) CHECK(cmty == 0);

  SynthParams bad = p;
  bad.vocab_size = 0;
  CHECK_THROWS_AS(generate_synthetic(bad, rng), ValidationError);
}
