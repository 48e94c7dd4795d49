#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "oracle.hpp"
#include "pdpnet/chain.hpp"
#include "pdpnet/model.hpp"

using namespace pdpnet;

namespace {

std::shared_ptr<const CompiledGraph> tn_graph(std::uint32_t vocab = 6,
                                              std::uint32_t truncation = 0) {
  ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.truncation = truncation;
  return std::make_shared<const CompiledGraph>(compile(build_tn_graph(cfg)));
}

// Two authors, three docs, both streams populated with a fixed pattern.
std::vector<DocTokens> small_docs(const CompiledGraph& g, std::uint32_t vocab) {
  std::vector<DocTokens> docs(3);
  std::vector<std::uint32_t> authors{0, 0, 1};
  for (std::uint32_t m = 0; m < 3; ++m) {
    docs[m].author = authors[m];
    docs[m].symbols.resize(g.leaves.size());
    docs[m].topics.resize(g.leaves.size());
    for (std::size_t l = 0; l < g.leaves.size(); ++l) {
      std::uint32_t len = g.leaves[l].stream == StreamKind::Words ? 5 : 2;
      for (std::uint32_t i = 0; i < len; ++i)
        docs[m].symbols[l].push_back((m * 3 + i * 2 + std::uint32_t(l)) % vocab);
    }
  }
  return docs;
}

ChainState make_chain(std::shared_ptr<const CompiledGraph> g, std::uint32_t vocab,
                      std::uint64_t seed) {
  ChainState chain(g, small_docs(*g, vocab), 2, vocab);
  Rng rng(seed);
  chain.init_sequential(rng);
  return chain;
}

}  // namespace

TEST_CASE("initialization seats every token and passes consistency") {
  auto g = tn_graph();
  ChainState chain = make_chain(g, 6, 11);
  chain.validate_consistency();
  CHECK(chain.n_docs() == 3);
  CHECK(chain.n_authors() == 2);
  CHECK(chain.live_topics() >= 1);

  std::uint32_t tokens = 0, refsum = 0;
  for (std::uint32_t m = 0; m < chain.n_docs(); ++m)
    for (const auto& stream : chain.doc(m).topics) {
      tokens += std::uint32_t(stream.size());
      for (std::uint32_t id : stream) CHECK(chain.dense_of(id).has_value());
    }
  for (std::uint32_t d = 0; d < chain.live_topics(); ++d) refsum += chain.tokens_with_topic(d);
  CHECK(tokens == 3 * (5 + 2));
  CHECK(refsum == tokens);
}

TEST_CASE("node census: fixed instances plus two per live topic") {
  auto g = tn_graph();
  ChainState chain = make_chain(g, 6, 5);
  std::uint32_t instances = 0;
  for (std::uint32_t t = 0; t < std::uint32_t(g->nodes.size()); ++t)
    instances += chain.replica_count(t);
  // mu0 + mu1 + 2 authors + 3 docs x (tprime, eta, theta) = 13 fixed,
  // psi and gamma replicate per live topic
  CHECK(instances == 13 + 2 * chain.live_topics());

  CHECK(chain.replica_for_doc(g->node_index("theta"), 2) == 2);
  CHECK(chain.replica_for_doc(g->node_index("nu"), 2) == 1);    // author of doc 2
  CHECK(chain.replica_for_doc(g->node_index("mu0"), 2) == 0);
}

TEST_CASE("sweeps keep the state consistent and the joint finite") {
  auto g = tn_graph();
  ChainState chain = make_chain(g, 6, 42);
  Rng rng(43);
  for (int it = 0; it < 30; ++it) {
    SweepStats stats = chain.full_sweep(rng);
    CHECK(stats.live_topics == chain.live_topics());
    CHECK(std::isfinite(stats.joint_ll));
    CHECK(stats.joint_ll < 0.0);
    if (it % 10 == 9) chain.validate_consistency();
  }
  CHECK(std::isfinite(chain.joint_log_lik()));
}

TEST_CASE("suppressed table removal still yields a consistent state") {
  auto g = tn_graph();
  ChainState chain = make_chain(g, 6, 17);
  chain.set_suppress_table_removal(true);
  Rng rng(18);
  for (int it = 0; it < 20; ++it) chain.full_sweep(rng);
  chain.validate_consistency();
}

TEST_CASE("dump and restore reproduce the state exactly") {
  auto g = tn_graph();
  ChainState chain = make_chain(g, 6, 7);
  Rng rng(8);
  for (int it = 0; it < 15; ++it) chain.full_sweep(rng);
  ChainArchive arch = chain.dump();

  ChainState copy(g, small_docs(*g, 6), 2, 6);
  copy.restore(arch);
  copy.validate_consistency();
  CHECK(copy.joint_log_lik() == chain.joint_log_lik());
  CHECK(copy.live_topics() == chain.live_topics());

  ChainArchive again = copy.dump();
  CHECK(again.live_topic_ids == arch.live_topic_ids);
  CHECK(again.next_topic_id == arch.next_topic_id);
  CHECK(again.counts == arch.counts);
  CHECK(again.tsplit == arch.tsplit);
  CHECK(again.group_concentration == arch.group_concentration);

  // restored chain continues identically under the same rng
  Rng r1(99), r2(99);
  SweepStats s1 = chain.full_sweep(r1);
  SweepStats s2 = copy.full_sweep(r2);
  CHECK(s1.joint_ll == s2.joint_ll);
  CHECK(chain.dump().counts == copy.dump().counts);
}

TEST_CASE("compaction preserves live topics and predictives") {
  auto g = tn_graph();
  ChainState chain = make_chain(g, 6, 21);
  Rng rng(22);
  for (int it = 0; it < 25; ++it) chain.full_sweep(rng);

  std::map<std::uint32_t, double> before;
  std::uint32_t theta = g->node_index("theta");
  for (std::uint32_t d = 0; d < chain.live_topics(); ++d)
    before[chain.topic_id(d)] = chain.topic_predictive(theta, 0, d);
  double ll = chain.joint_log_lik();

  chain.compact_topics();
  chain.validate_consistency();
  CHECK(chain.live_topics() == std::uint32_t(before.size()));
  for (std::uint32_t d = 0; d < chain.live_topics(); ++d) {
    CHECK(chain.dense_of(chain.topic_id(d)) == d);
    CHECK(chain.topic_predictive(theta, 0, d) ==
          doctest::Approx(before.at(chain.topic_id(d))).epsilon(1e-12));
  }
  CHECK(chain.joint_log_lik() == doctest::Approx(ll).epsilon(1e-12));
}

TEST_CASE("joint predictive at a leaf is a distribution") {
  auto g = tn_graph();
  ChainState chain = make_chain(g, 6, 31);
  for (std::uint32_t l = 0; l < std::uint32_t(g->leaves.size()); ++l) {
    Eigen::VectorXd p = chain.joint_predictive(l, 1);
    CHECK(p.size() == chain.live_topics() + 1);  // unbounded: trailing new mass
    CHECK(p.minCoeff() >= 0.0);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("symbol predictive vectors normalize over the vocabulary") {
  auto g = tn_graph();
  ChainState chain = make_chain(g, 6, 37);
  for (std::uint32_t l = 0; l < 2; ++l)
    for (std::uint32_t d = 0; d < chain.live_topics(); ++d) {
      Eigen::VectorXd p = chain.symbol_predictive_vector(l, d);
      REQUIRE(p.size() == 6);
      CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-9));
      for (std::uint32_t w = 0; w < 6; ++w)
        CHECK(p[w] == doctest::Approx(chain.symbol_predictive(l, d, w)).epsilon(1e-12));
    }
}

TEST_CASE("always-accept coupling hook leaves the trajectory untouched") {
  auto g = tn_graph();
  ChainState plain = make_chain(g, 6, 51);
  ChainState hooked = make_chain(g, 6, 51);

  CouplingHook hook;
  hook.watched_template = g->node_index("nu");
  for (std::uint32_t d = 0; d < hooked.live_topics(); ++d)
    hook.basis.push_back(hooked.topic_id(d));
  int commits = 0;
  hook.log_accept = [](std::uint32_t, const std::vector<std::uint32_t>&,
                       const std::vector<std::uint32_t>&) { return 0.0; };
  hook.committed = [&](std::uint32_t, const std::vector<std::uint32_t>&) { commits++; };

  Rng r1(60), r2(60);
  SweepStats sp = plain.full_sweep(r1);
  SweepStats sh = hooked.full_sweep(r2, &hook);
  CHECK(sp.joint_ll == sh.joint_ll);
  CHECK(plain.dump().counts == hooked.dump().counts);
  CHECK(sh.coupling_proposals > 0);
  CHECK(sh.coupling_rejections == 0);
  CHECK(commits == sh.coupling_proposals);
}

TEST_CASE("always-reject coupling hook freezes watched counts over the basis") {
  auto g = tn_graph();
  ChainState chain = make_chain(g, 6, 71);
  std::uint32_t nu = g->node_index("nu");

  CouplingHook hook;
  hook.watched_template = nu;
  for (std::uint32_t d = 0; d < chain.live_topics(); ++d) hook.basis.push_back(chain.topic_id(d));
  hook.log_accept = [](std::uint32_t, const std::vector<std::uint32_t>&,
                       const std::vector<std::uint32_t>&) {
    return -std::numeric_limits<double>::infinity();
  };

  // basis-projected author counts before
  auto projected = [&](std::uint32_t rep) {
    std::vector<std::uint32_t> out;
    for (std::uint32_t id : hook.basis) {
      auto dense = chain.dense_of(id);
      auto counts = chain.instance_counts(nu, rep);
      out.push_back(dense && *dense < counts.size() ? counts[*dense] : 0);
    }
    return out;
  };
  std::vector<std::vector<std::uint32_t>> before;
  for (std::uint32_t r = 0; r < chain.replica_count(nu); ++r) before.push_back(projected(r));

  Rng rng(72);
  SweepStats stats = chain.full_sweep(rng, &hook);
  chain.validate_consistency();
  CHECK(stats.coupling_rejections == stats.coupling_proposals);
  for (std::uint32_t r = 0; r < chain.replica_count(nu); ++r)
    CHECK(projected(r) == before[r]);
}

TEST_CASE("forward generation fills observations and stays consistent") {
  auto g = tn_graph(5, 3);  // finite topics
  auto docs = empty_docs(*g, 4, 2, {3, 3, 3, 3}, {1, 1, 1, 1});
  REQUIRE(docs.size() == 4);
  ChainState chain(g, std::move(docs), 2, 5);
  Rng rng(80);
  chain.forward_generate(rng);
  chain.validate_consistency();
  for (std::uint32_t m = 0; m < chain.n_docs(); ++m)
    for (const auto& stream : chain.doc(m).symbols)
      for (std::uint32_t s : stream) CHECK(s < 5);

  // resampling observations keeps the topic assignments in place
  auto topics_before = chain.doc(1).topics;
  chain.resample_observations(rng);
  chain.validate_consistency();
  CHECK(chain.doc(1).topics == topics_before);
}

TEST_CASE("chain posterior matches exhaustive enumeration on a two-topic toy") {
  // one document, three word tokens, K = 2 topics, V = 2 symbols
  GraphSpec spec;
  spec.hyper_groups["topic"] = PdpHyper{0.3, 0.8};
  spec.hyper_groups["vocab"] = PdpHyper{0.5, 0.6};
  spec.nodes.push_back({"root", PlateKind::Global, BaseKind::TopicFinite, 2, "topic"});
  spec.nodes.push_back({"theta", PlateKind::PerDocument, BaseKind::Parents, 0, "topic"});
  spec.nodes.push_back({"psi", PlateKind::PerTopic, BaseKind::Vocabulary, 2, "vocab"});
  spec.edges.push_back({"theta", "root", 1.0});
  spec.leaves.push_back({StreamKind::Words, "theta", "psi"});
  auto g = std::make_shared<const CompiledGraph>(compile(spec));

  const std::vector<std::uint32_t> words{0, 0, 1};
  std::vector<DocTokens> docs(1);
  docs[0].author = kNoAuthor;
  docs[0].symbols = {words};
  docs[0].topics = {{}};

  // exact posterior over the 8 assignments by enumeration
  oracle::Hyper ht{0.3, 0.8}, hv{0.5, 0.6};
  std::map<std::vector<std::uint32_t>, double> exact;
  double norm = 0.0;
  for (std::uint32_t bits = 0; bits < 8; ++bits) {
    std::vector<std::uint32_t> z{bits & 1u, (bits >> 1) & 1u, (bits >> 2) & 1u};
    double p = oracle::sequence_prob(z, 2, ht, ht);
    for (std::uint32_t k = 0; k < 2; ++k) {
      std::vector<std::uint32_t> sub;
      for (std::size_t i = 0; i < 3; ++i)
        if (z[i] == k) sub.push_back(words[i]);
      p *= oracle::crp_sequence_prob(sub, 2, hv);
    }
    exact[z] = p;
    norm += p;
  }
  for (auto& [z, p] : exact) p /= norm;

  ChainState chain(g, docs, 0, 2);
  Rng rng(321);
  chain.init_sequential(rng);
  for (int it = 0; it < 500; ++it) chain.full_sweep(rng);  // burn-in

  std::map<std::vector<std::uint32_t>, double> freq;
  const int samples = 30000;
  for (int it = 0; it < samples; ++it) {
    chain.full_sweep(rng);
    freq[chain.doc(0).topics[0]] += 1.0 / samples;
  }

  double tv = 0.0;
  for (const auto& [z, p] : exact) tv += std::abs(freq[z] - p);
  tv *= 0.5;
  CHECK(tv < 0.02);
}

TEST_CASE("group concentration resampling writes through to every node") {
  auto g = tn_graph();
  ChainState chain = make_chain(g, 6, 91);
  Rng rng(92);
  for (int it = 0; it < 10; ++it) chain.full_sweep(rng);

  auto names = chain.hyper_group_names();
  REQUIRE(names.size() == 2);
  ConcentrationPrior prior{0.1, 0.1};
  for (const auto& name : names) {
    double b = chain.resample_group_concentration(name, prior, rng);
    CHECK(b > 0.0);
    CHECK(chain.group_concentration(name) == b);
  }
  chain.validate_consistency();
  CHECK_THROWS_AS(chain.group_concentration("nope"), ValidationError);
}
