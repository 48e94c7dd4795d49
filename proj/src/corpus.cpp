#include "pdpnet/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace pdpnet {

namespace {

using json = nlohmann::ordered_json;

std::string lowercase(std::string s) {
  for (auto& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string strip_hash(std::string s) {
  std::size_t i = 0;
  while (i < s.size() && s[i] == '#') ++i;
  return s.substr(i);
}

struct RawDoc {
  std::string id, author;
  std::vector<std::string> words, tags;
};

bool parse_record(const std::string& line, RawDoc& out) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return false;
  if (!j.contains("id") || !j["id"].is_string()) return false;
  if (!j.contains("author") || !j["author"].is_string()) return false;
  if (!j.contains("text-tokens") || !j["text-tokens"].is_array()) return false;
  if (!j.contains("hashtags") || !j["hashtags"].is_array()) return false;
  out.id = j["id"].get<std::string>();
  out.author = j["author"].get<std::string>();
  out.words.clear();
  out.tags.clear();
  for (const auto& t : j["text-tokens"]) {
    if (!t.is_string()) return false;
    out.words.push_back(lowercase(t.get<std::string>()));
  }
  for (const auto& t : j["hashtags"]) {
    if (!t.is_string()) return false;
    std::string s = strip_hash(lowercase(t.get<std::string>()));
    if (s.empty()) return false;
    out.tags.push_back(s);
  }
  return true;
}

}  // namespace

std::optional<std::uint32_t> Corpus::author_index(const std::string& name) const {
  for (std::uint32_t i = 0; i < authors.size(); ++i)
    if (authors[i] == name) return i;
  return std::nullopt;
}

std::size_t Corpus::total_words() const {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.words.size();
  return n;
}

std::size_t Corpus::total_tags() const {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.tags.size();
  return n;
}

void Corpus::validate() const {
  for (const auto& d : docs) {
    if (d.author >= authors.size())
      throw DataError("corpus: document author out of range: " + d.id);
    for (auto w : d.words)
      if (w >= vocab.size()) throw DataError("corpus: word token out of range: " + d.id);
    for (auto t : d.tags)
      if (t >= vocab.size()) throw DataError("corpus: hashtag token out of range: " + d.id);
  }
  if (oov && *oov >= vocab.size()) throw DataError("corpus: sink index out of range");
}

Corpus load_corpus(const std::string& path, std::uint32_t min_author_tweets,
                   std::uint32_t min_token_count, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  LoadReport rep;
  std::vector<RawDoc> raws;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    rep.lines++;
    RawDoc rd;
    if (parse_record(line, rd))
      raws.push_back(std::move(rd));
    else
      rep.malformed++;
  }
  if (rep.lines == 0) throw DataError("corpus file is empty: " + path);
  if (double(rep.malformed) > 0.01 * double(rep.lines)) {
    std::ostringstream msg;
    msg << "corpus has " << rep.malformed << " malformed records out of " << rep.lines
        << " (more than 1%)";
    throw DataError(msg.str());
  }

  std::map<std::string, std::uint32_t> author_docs;
  for (const auto& r : raws) author_docs[r.author]++;
  std::set<std::string> kept_authors;
  for (const auto& [a, n] : author_docs) {
    if (n >= min_author_tweets)
      kept_authors.insert(a);
    else
      rep.dropped_authors++;
  }

  std::map<std::string, std::uint64_t> token_count;
  for (const auto& r : raws) {
    if (!kept_authors.count(r.author)) continue;
    for (const auto& w : r.words) token_count[w]++;
    for (const auto& t : r.tags) token_count[t]++;
  }

  Corpus corpus;
  std::map<std::string, std::uint32_t> author_ix, vocab_ix;
  auto intern_author = [&](const std::string& a) {
    auto it = author_ix.find(a);
    if (it != author_ix.end()) return it->second;
    std::uint32_t ix = std::uint32_t(corpus.authors.size());
    corpus.authors.push_back(a);
    author_ix[a] = ix;
    return ix;
  };
  auto intern_token = [&](const std::string& w) {
    auto it = vocab_ix.find(w);
    if (it != vocab_ix.end()) return it->second;
    std::uint32_t ix = std::uint32_t(corpus.vocab.size());
    corpus.vocab.push_back(w);
    vocab_ix[w] = ix;
    return ix;
  };
  auto map_token = [&](const std::string& w) {
    if (token_count.at(w) >= min_token_count) return intern_token(w);
    rep.oov_tokens++;
    if (!corpus.oov) corpus.oov = intern_token("<oov>");
    return *corpus.oov;
  };

  for (const auto& r : raws) {
    if (!kept_authors.count(r.author)) {
      rep.dropped_docs++;
      continue;
    }
    Document d;
    d.id = r.id;
    d.author = intern_author(r.author);
    for (const auto& w : r.words) d.words.push_back(map_token(w));
    for (const auto& t : r.tags) d.tags.push_back(map_token(t));
    corpus.docs.push_back(std::move(d));
  }
  if (corpus.docs.empty()) throw DataError("corpus is empty after filtering: " + path);
  corpus.validate();
  if (report) *report = rep;
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  corpus.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot open corpus file for writing: " + path);
  for (const auto& d : corpus.docs) {
    json j;
    j["id"] = d.id;
    j["author"] = corpus.authors[d.author];
    json words = json::array(), tags = json::array();
    for (auto w : d.words) words.push_back(corpus.vocab[w]);
    for (auto t : d.tags) tags.push_back(corpus.vocab[t]);
    j["text-tokens"] = std::move(words);
    j["hashtags"] = std::move(tags);
    out << j.dump() << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

std::vector<AuthorPair> load_edges(const std::string& path, const Corpus& corpus,
                                   std::size_t* skipped) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge file: " + path);
  std::map<std::string, std::uint32_t> author_ix;
  for (std::uint32_t i = 0; i < corpus.authors.size(); ++i) author_ix[corpus.authors[i]] = i;
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  std::vector<AuthorPair> edges;
  std::size_t skip = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == line.size()) {
      std::ostringstream msg;
      msg << "edge file " << path << " line " << lineno << ": expected author_a,author_b";
      throw DataError(msg.str());
    }
    std::string a = line.substr(0, comma), b = line.substr(comma + 1);
    auto ia = author_ix.find(a), ib = author_ix.find(b);
    if (ia == author_ix.end() || ib == author_ix.end()) {
      skip++;
      continue;
    }
    std::uint32_t lo = std::min(ia->second, ib->second), hi = std::max(ia->second, ib->second);
    if (lo == hi) {
      skip++;  // self-loop
      continue;
    }
    if (seen.emplace(lo, hi).second) edges.push_back({lo, hi});
  }
  if (skipped) *skipped = skip;
  return edges;
}

void save_edges(const std::vector<AuthorPair>& edges, const Corpus& corpus,
                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open edge file for writing: " + path);
  for (const auto& e : edges) {
    if (e.a >= corpus.authors.size() || e.b >= corpus.authors.size())
      throw DataError("save_edges: endpoint out of range");
    out << corpus.authors[e.a] << "," << corpus.authors[e.b] << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

std::pair<Corpus, Corpus> split_train_test(const Corpus& corpus, double ratio,
                                           std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw ValidationError("split_train_test: ratio must lie in (0,1)");
  corpus.validate();
  std::vector<std::vector<std::uint32_t>> by_author(corpus.authors.size());
  for (std::uint32_t m = 0; m < corpus.docs.size(); ++m)
    by_author[corpus.docs[m].author].push_back(m);

  std::vector<bool> is_test(corpus.docs.size(), false);
  for (std::uint32_t a = 0; a < by_author.size(); ++a) {
    auto& docs = by_author[a];
    if (docs.empty()) continue;
    std::size_t n = docs.size();
    std::size_t n_test = std::min(std::size_t(std::floor((1.0 - ratio) * double(n))), n - 1);
    if (n_test == 0) continue;
    Rng rng(mix_seed(seed, a));
    for (std::size_t i = 0; i < n_test; ++i) {
      std::size_t j = i + std::size_t(uniform01(rng) * double(n - i));
      j = std::min(j, n - 1);
      std::swap(docs[i], docs[j]);
      is_test[docs[i]] = true;
    }
  }

  Corpus train, test;
  train.authors = test.authors = corpus.authors;
  train.vocab = test.vocab = corpus.vocab;
  train.oov = test.oov = corpus.oov;
  for (std::uint32_t m = 0; m < corpus.docs.size(); ++m)
    (is_test[m] ? test : train).docs.push_back(corpus.docs[m]);
  return {std::move(train), std::move(test)};
}

SynthData generate_synthetic(const SynthParams& p, Rng& rng) {
  if (p.n_authors < 1 || p.docs_per_author < 1 || p.topics < 1 || p.vocab_size < p.topics)
    throw ValidationError("generate_synthetic: sizes must be >= 1 and vocab >= topics");
  if (!(p.author_signal > 0.0 && p.author_signal <= 1.0))
    throw ValidationError("generate_synthetic: author signal must lie in (0,1]");
  if (p.topics == 1 && p.author_signal < 1.0) {
    // single topic: signal is vacuous
  }

  SynthData out;
  Corpus& c = out.corpus;
  std::uint32_t K = p.topics, V = p.vocab_size;
  std::uint32_t block = V / K;  // per-topic vocabulary slice; remainder joins the last block

  char buf[32];
  for (std::uint32_t v = 0; v < V; ++v) {
    std::snprintf(buf, sizeof buf, "w%04u", v);
    c.vocab.push_back(buf);
  }
  for (std::uint32_t a = 0; a < p.n_authors; ++a) {
    std::snprintf(buf, sizeof buf, "a%03u", a);
    c.authors.push_back(buf);
    out.author_community.push_back(a % K);
  }

  auto draw_topic = [&](std::uint32_t community) {
    if (K == 1) return std::uint32_t(0);
    double u = uniform01(rng);
    if (u < p.author_signal) return community;
    double rest = (u - p.author_signal) / (1.0 - p.author_signal);
    std::uint32_t off = std::min(std::uint32_t(rest * double(K - 1)), K - 2);
    return (community + 1 + off) % K;
  };
  auto block_lo = [&](std::uint32_t k) { return k * block; };
  auto block_hi = [&](std::uint32_t k) { return k + 1 == K ? V : (k + 1) * block; };
  auto draw_word = [&](std::uint32_t k) {
    std::uint32_t lo = block_lo(k), hi = block_hi(k);
    std::uint32_t w = lo + std::uint32_t(uniform01(rng) * double(hi - lo));
    return std::min(w, hi - 1);
  };
  // Topic-indicative hashtags: the first two symbols of each topic's block.
  auto draw_tag = [&](std::uint32_t k) {
    std::uint32_t lo = block_lo(k);
    std::uint32_t span = std::min<std::uint32_t>(2, block_hi(k) - lo);
    std::uint32_t t = lo + std::uint32_t(uniform01(rng) * double(span));
    return std::min(t, lo + span - 1);
  };

  std::uint32_t doc_counter = 0;
  for (std::uint32_t a = 0; a < p.n_authors; ++a) {
    for (std::uint32_t d = 0; d < p.docs_per_author; ++d) {
      Document doc;
      std::snprintf(buf, sizeof buf, "d%05u", doc_counter++);
      doc.id = buf;
      doc.author = a;
      std::vector<std::uint32_t> topic_count(K, 0);
      for (std::uint32_t i = 0; i < p.tags_per_doc; ++i) {
        std::uint32_t z = draw_topic(out.author_community[a]);
        topic_count[z]++;
        doc.tags.push_back(draw_tag(z));
      }
      for (std::uint32_t i = 0; i < p.words_per_doc; ++i) {
        std::uint32_t z = draw_topic(out.author_community[a]);
        topic_count[z]++;
        doc.words.push_back(draw_word(z));
      }
      std::uint32_t label = out.author_community[a];
      std::uint32_t best = 0;
      for (std::uint32_t k = 0; k < K; ++k)
        if (topic_count[k] > best) {
          best = topic_count[k];
          label = k;
        }
      out.doc_labels.push_back(label);
      c.docs.push_back(std::move(doc));
    }
  }

  for (std::uint32_t a = 0; a + 1 < p.n_authors; ++a) {
    for (std::uint32_t b = a + 1; b < p.n_authors; ++b) {
      double prob = out.author_community[a] == out.author_community[b] ? p.link_within
                                                                       : p.link_across;
      if (uniform01(rng) < prob) out.edges.push_back({a, b});
    }
  }
  c.validate();
  return out;
}

}  // namespace pdpnet
