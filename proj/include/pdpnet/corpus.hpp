#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdpnet/common.hpp"
#include "pdpnet/gp.hpp"

namespace pdpnet {

struct Document {
  std::string id;
  std::uint32_t author = 0;
  std::vector<std::uint32_t> words;
  std::vector<std::uint32_t> tags;  // hashtags, sharing the word vocabulary
  bool operator==(const Document&) const = default;
};

struct Corpus {
  std::vector<Document> docs;
  std::vector<std::string> authors;  // index -> external author id
  std::vector<std::string> vocab;    // index -> token string
  std::optional<std::uint32_t> oov;  // sink index for below-threshold tokens

  std::optional<std::uint32_t> author_index(const std::string& name) const;
  std::size_t total_words() const;
  std::size_t total_tags() const;
  void validate() const;
  bool operator==(const Corpus&) const = default;
};

struct LoadReport {
  std::size_t lines = 0;
  std::size_t malformed = 0;
  std::size_t dropped_authors = 0;
  std::size_t dropped_docs = 0;
  std::size_t oov_tokens = 0;
};

// Line-delimited records with fields `id`, `author`, `text-tokens`,
// `hashtags`. Tokens are taken verbatim apart from lowercasing; hashtags are
// stored with the leading '#' stripped and share the word vocabulary.
Corpus load_corpus(const std::string& path, std::uint32_t min_author_tweets = 100,
                   std::uint32_t min_token_count = 1, LoadReport* report = nullptr);
void save_corpus(const Corpus& corpus, const std::string& path);

// Undirected `author_a,author_b` lines; deduplicated; edges touching unknown
// authors are dropped (count reported through `skipped`).
std::vector<AuthorPair> load_edges(const std::string& path, const Corpus& corpus,
                                   std::size_t* skipped = nullptr);
void save_edges(const std::vector<AuthorPair>& edges, const Corpus& corpus,
                const std::string& path);

// Document-level split stratified by author: every author keeps at least one
// training document; deterministic given seed.
std::pair<Corpus, Corpus> split_train_test(const Corpus& corpus, double ratio,
                                           std::uint64_t seed);

struct SynthParams {
  std::uint32_t n_authors = 40;
  std::uint32_t docs_per_author = 15;
  std::uint32_t words_per_doc = 12;
  std::uint32_t tags_per_doc = 2;
  std::uint32_t topics = 4;
  std::uint32_t vocab_size = 120;
  double author_signal = 0.85;  // mass an author puts on their community topic
  double link_within = 0.8;
  double link_across = 0.1;
};

struct SynthData {
  Corpus corpus;
  std::vector<AuthorPair> edges;
  std::vector<std::uint32_t> doc_labels;        // dominant topic per document
  std::vector<std::uint32_t> author_community;  // dominant topic per author
};

// Planted-structure corpus following the model's author -> document -> token
// layering, with a controllable author signal; topic-sliced vocabulary blocks
// and topic-indicative hashtags; links drawn 0.8/0.1 within/across
// communities by default.
SynthData generate_synthetic(const SynthParams& params, Rng& rng);

}  // namespace pdpnet
