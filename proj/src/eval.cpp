#include "pdpnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace pdpnet {

namespace {

constexpr std::uint32_t kUnassigned = 0xffffffffu;

std::uint32_t sample_discrete(const std::vector<double>& w, Rng& rng) {
  double total = 0.0;
  for (double v : w)
    if (v > 0.0) total += v;
  if (total <= 0.0) throw NumericalError("discrete sample: no admissible choice");
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    u -= w[i];
    if (u <= 0.0) return std::uint32_t(i);
  }
  for (std::size_t i = w.size(); i-- > 0;)
    if (w[i] > 0.0) return std::uint32_t(i);
  throw NumericalError("discrete sample: no admissible choice");
}

std::uint32_t leaf_of_stream(const CompiledGraph& g, StreamKind stream) {
  for (std::uint32_t l = 0; l < g.leaves.size(); ++l)
    if (g.leaves[l].stream == stream) return l;
  throw ValidationError(stream == StreamKind::Words ? "graph has no words stream"
                                                    : "model has no hashtag stream");
}

std::uint32_t author_template(const CompiledGraph& g) {
  for (std::uint32_t t = 0; t < g.nodes.size(); ++t)
    if (g.nodes[t].spec.plate == PlateKind::PerAuthor && g.nodes[t].topic_space) return t;
  throw ValidationError("graph has no author-level node");
}

double cosine(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw NumericalError("cosine of a zero vector");
  return u.dot(v) / (nu * nv);
}

Eigen::VectorXd smoothed(const std::vector<std::uint32_t>& counts) {
  Eigen::VectorXd row(counts.size());
  double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  double denom = total + 0.5 * double(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k)
    row[Eigen::Index(k)] = (double(counts[k]) + 0.5) / denom;
  return row;
}

// Indices 0..n-1 ranked by value descending, ties by ascending index.
std::vector<std::uint32_t> top_indices(const Eigen::VectorXd& v, std::uint32_t n) {
  std::vector<std::uint32_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return v[a] > v[b]; });
  if (idx.size() > n) idx.resize(n);
  return idx;
}

}  // namespace

FoldContext::FoldContext(const ChainState& chain, std::uint32_t author)
    : chain_(chain), g_(chain.graph()), author_(author) {
  if (author > chain.n_authors()) throw ValidationError("fold: author out of range");
  new_author_ = author == chain.n_authors();
  local_.assign(g_.nodes.size(), false);
  states_.resize(g_.nodes.size());
  tsplit_.resize(g_.nodes.size());
  for (std::uint32_t t = 0; t < g_.nodes.size(); ++t)
    if (g_.nodes[t].topic_space && g_.nodes[t].spec.plate == PlateKind::PerDocument)
      local_[t] = true;
  if (new_author_) {
    author_tmpl_ = author_template(g_);
    local_[author_tmpl_] = true;
    const auto& spec = g_.nodes[author_tmpl_].spec;
    const auto& grp = chain_.groups_[chain_.group_index_.at(spec.hyper_group)];
    PdpHyper h = g_.spec.hyper_groups.at(spec.hyper_group);
    h.concentration = grp.concentration;
    states_[author_tmpl_].emplace_back(h, grp.cache);
    states_[author_tmpl_][0].ensure_slots(chain_.live_topics());
    if (g_.nodes[author_tmpl_].parents.size() > 1)
      tsplit_[author_tmpl_].push_back(std::vector<std::vector<std::uint32_t>>(
          chain_.live_topics(),
          std::vector<std::uint32_t>(g_.nodes[author_tmpl_].parents.size(), 0)));
  }
}

std::uint32_t FoldContext::add_document(std::vector<std::vector<std::uint32_t>> symbols) {
  if (symbols.size() != g_.leaves.size())
    throw ValidationError("fold: document has wrong leaf stream count");
  for (const auto& stream : symbols)
    for (std::uint32_t w : stream)
      if (w >= chain_.vocab_size()) throw ValidationError("fold: symbol out of vocabulary");
  std::uint32_t doc = std::uint32_t(docs_.size());
  for (std::uint32_t t = 0; t < g_.nodes.size(); ++t) {
    if (!(local_[t] && g_.nodes[t].spec.plate == PlateKind::PerDocument)) continue;
    const auto& spec = g_.nodes[t].spec;
    const auto& grp = chain_.groups_[chain_.group_index_.at(spec.hyper_group)];
    PdpHyper h = g_.spec.hyper_groups.at(spec.hyper_group);
    h.concentration = grp.concentration;
    states_[t].emplace_back(h, grp.cache);
    states_[t][doc].ensure_slots(chain_.live_topics());
    if (g_.nodes[t].parents.size() > 1)
      tsplit_[t].push_back(std::vector<std::vector<std::uint32_t>>(
          chain_.live_topics(), std::vector<std::uint32_t>(g_.nodes[t].parents.size(), 0)));
  }
  assign_.emplace_back();
  for (const auto& stream : symbols)
    assign_.back().push_back(std::vector<std::uint32_t>(stream.size(), kUnassigned));
  docs_.push_back(std::move(symbols));
  return doc;
}

FoldContext::LocalRef FoldContext::resolve(std::uint32_t tmpl, std::uint32_t doc) const {
  switch (g_.nodes[tmpl].spec.plate) {
    case PlateKind::PerDocument:
      return {true, doc};
    case PlateKind::PerAuthor:
      return new_author_ ? LocalRef{true, 0} : LocalRef{false, author_};
    case PlateKind::Global:
      return {false, 0};
    case PlateKind::PerTopic:
      break;
  }
  throw ValidationError("fold: symbol-side node reached through a topic cascade");
}

double FoldContext::base(std::uint32_t tmpl, std::uint32_t doc, std::uint32_t dense) const {
  const auto& nd = g_.nodes[tmpl];
  if (nd.parents.empty()) return chain_.root_base(tmpl, false);
  double b = 0.0;
  for (const auto& p : nd.parents) {
    LocalRef ref = resolve(p.node, doc);
    b += p.weight * (ref.local ? pred(p.node, doc, dense)
                               : chain_.topic_predictive(p.node, ref.replica, dense));
  }
  return b;
}

double FoldContext::base_new(std::uint32_t tmpl, std::uint32_t doc) const {
  const auto& nd = g_.nodes[tmpl];
  if (nd.parents.empty()) return chain_.root_base(tmpl, true);
  double b = 0.0;
  for (const auto& p : nd.parents) {
    LocalRef ref = resolve(p.node, doc);
    b += p.weight * (ref.local ? pred_new(p.node, doc)
                               : chain_.topic_predictive_new(p.node, ref.replica));
  }
  return b;
}

double FoldContext::pred(std::uint32_t tmpl, std::uint32_t doc, std::uint32_t dense) const {
  LocalRef ref = resolve(tmpl, doc);
  if (!ref.local) return chain_.topic_predictive(tmpl, ref.replica, dense);
  return predictive_one(states_[tmpl][ref.replica], dense, base(tmpl, doc, dense));
}

double FoldContext::pred_new(std::uint32_t tmpl, std::uint32_t doc) const {
  LocalRef ref = resolve(tmpl, doc);
  if (!ref.local) return chain_.topic_predictive_new(tmpl, ref.replica);
  return predictive_new(states_[tmpl][ref.replica]) * base_new(tmpl, doc);
}

void FoldContext::seat(std::uint32_t tmpl, std::uint32_t doc, std::uint32_t dense, Rng& rng) {
  const auto& nd = g_.nodes[tmpl];
  LocalRef ref = resolve(tmpl, doc);
  NodeState& s = states_[tmpl][ref.replica];
  bool create;
  if (s.customers(dense) == 0) {
    create = true;
  } else {
    double p = new_table_probability(s, dense, base(tmpl, doc, dense));
    create = p >= 1.0 ? true : (p <= 0.0 ? false : uniform01(rng) < p);
  }
  add_customer_forced(s, dense, create);
  if (!create || nd.parents.empty()) return;
  std::uint32_t j = 0;
  if (nd.parents.size() > 1) {
    std::vector<double> w(nd.parents.size());
    for (std::uint32_t i = 0; i < nd.parents.size(); ++i) {
      const auto& p = nd.parents[i];
      LocalRef pr = resolve(p.node, doc);
      w[i] = p.weight * (pr.local ? pred(p.node, doc, dense)
                                  : chain_.topic_predictive(p.node, pr.replica, dense));
    }
    j = sample_discrete(w, rng);
    tsplit_[tmpl][ref.replica][dense][j]++;
  }
  LocalRef pr = resolve(nd.parents[j].node, doc);
  if (pr.local) seat(nd.parents[j].node, doc, dense, rng);
}

void FoldContext::unseat(std::uint32_t tmpl, std::uint32_t doc, std::uint32_t dense, Rng& rng) {
  const auto& nd = g_.nodes[tmpl];
  LocalRef ref = resolve(tmpl, doc);
  NodeState& s = states_[tmpl][ref.replica];
  if (s.customers(dense) == 0) throw ValidationError("fold unseat: no customer to remove");
  double rho = table_removal_probability(s, dense);
  bool removed = rho >= 1.0 ? true : (rho <= 0.0 ? false : uniform01(rng) < rho);
  if (removed && !nd.parents.empty()) {
    std::uint32_t j = 0;
    if (nd.parents.size() > 1) {
      auto& row = tsplit_[tmpl][ref.replica][dense];
      std::vector<double> w(row.begin(), row.end());
      j = sample_discrete(w, rng);
      row[j]--;
    }
    remove_customer_forced(s, dense, true);
    LocalRef pr = resolve(nd.parents[j].node, doc);
    if (pr.local) unseat(nd.parents[j].node, doc, dense, rng);
  } else {
    remove_customer_forced(s, dense, removed);
  }
}

void FoldContext::resample_token(std::uint32_t doc, std::uint32_t leaf, std::uint32_t pos,
                                 Rng& rng) {
  std::uint32_t tn = g_.leaves[leaf].topic_node;
  std::uint32_t w = docs_[doc][leaf][pos];
  std::uint32_t& cur = assign_[doc][leaf][pos];
  if (cur != kUnassigned) unseat(tn, doc, cur, rng);
  std::uint32_t L = chain_.live_topics();
  std::vector<double> wt(L);
  for (std::uint32_t k = 0; k < L; ++k)
    wt[k] = pred(tn, doc, k) * chain_.symbol_predictive(leaf, k, w);
  std::uint32_t pick = sample_discrete(wt, rng);
  seat(tn, doc, pick, rng);
  cur = pick;
}

void FoldContext::run(std::uint32_t sweeps, Rng& rng) {
  for (std::uint32_t d = 0; d < docs_.size(); ++d)
    for (std::uint32_t l = 0; l < docs_[d].size(); ++l)
      for (std::uint32_t p = 0; p < docs_[d][l].size(); ++p)
        if (assign_[d][l][p] == kUnassigned) resample_token(d, l, p, rng);
  for (std::uint32_t s = 0; s < sweeps; ++s)
    for (std::uint32_t d = 0; d < docs_.size(); ++d)
      for (std::uint32_t l = 0; l < docs_[d].size(); ++l)
        for (std::uint32_t p = 0; p < docs_[d][l].size(); ++p) resample_token(d, l, p, rng);
}

double FoldContext::topic_weight(std::uint32_t doc, std::uint32_t leaf,
                                 std::uint32_t dense) const {
  return pred(g_.leaves.at(leaf).topic_node, doc, dense);
}

double FoldContext::new_topic_weight(std::uint32_t doc, std::uint32_t leaf) const {
  return pred_new(g_.leaves.at(leaf).topic_node, doc);
}

double FoldContext::score_symbol(std::uint32_t doc, std::uint32_t leaf,
                                 std::uint32_t symbol) const {
  std::uint32_t tn = g_.leaves.at(leaf).topic_node;
  double p = 0.0;
  for (std::uint32_t k = 0; k < chain_.live_topics(); ++k)
    p += pred(tn, doc, k) * chain_.symbol_predictive(leaf, k, symbol);
  p += pred_new(tn, doc) / double(chain_.vocab_size());
  return p;
}

std::vector<std::uint32_t> FoldContext::author_counts() const {
  if (!new_author_) throw ValidationError("fold: author counts need new-author mode");
  const NodeState& s = states_[author_tmpl_][0];
  std::vector<std::uint32_t> out(chain_.live_topics(), 0);
  for (std::uint32_t k = 0; k < out.size(); ++k) out[k] = s.customers(k);
  return out;
}

PerplexityReport perplexity(const ChainState& chain, const Corpus& test, double fold_in_fraction,
                            std::uint32_t fold_in_sweeps, std::uint64_t seed) {
  if (test.docs.empty()) throw ValidationError("perplexity: empty test corpus");
  if (!(fold_in_fraction > 0.0 && fold_in_fraction < 1.0))
    throw ValidationError("perplexity: fold_in_fraction must be in (0,1)");
  const CompiledGraph& g = chain.graph();
  std::uint32_t words_leaf = leaf_of_stream(g, StreamKind::Words);

  PerplexityReport rep;
  for (std::uint32_t m = 0; m < test.docs.size(); ++m) {
    const Document& d = test.docs[m];
    if (d.author >= chain.n_authors()) throw ValidationError("perplexity: unknown author");
    std::vector<std::vector<std::uint32_t>> prefix(g.leaves.size());
    std::uint32_t held_words = 0;
    for (std::uint32_t l = 0; l < g.leaves.size(); ++l) {
      const auto& stream = g.leaves[l].stream == StreamKind::Words ? d.words : d.tags;
      auto cut = std::uint32_t(std::ceil(fold_in_fraction * double(stream.size())));
      prefix[l].assign(stream.begin(), stream.begin() + cut);
      if (l == words_leaf) held_words = std::uint32_t(stream.size()) - cut;
    }
    if (held_words == 0) {
      rep.excluded_docs++;
      continue;
    }
    Rng rng(mix_seed(seed, m));
    FoldContext fold(chain, d.author);
    fold.add_document(prefix);
    fold.run(fold_in_sweeps, rng);
    std::uint32_t cut = std::uint32_t(d.words.size()) - held_words;
    for (std::uint32_t p = cut; p < d.words.size(); ++p) {
      rep.log_lik += std::log(fold.score_symbol(0, words_leaf, d.words[p]));
      rep.scored_tokens++;
    }
  }
  if (rep.scored_tokens == 0)
    throw ValidationError("perplexity: every test document has an empty held-out half");
  rep.perplexity = std::exp(-rep.log_lik / double(rep.scored_tokens));
  return rep;
}

double heldout_network_ll(const GpState& gp, const PairSet& heldout,
                          const Eigen::MatrixXd& embeddings) {
  if (heldout.pairs.empty()) return 0.0;
  if (heldout.x.size() != heldout.pairs.size())
    throw ValidationError("heldout pairs and labels disagree");
  Eigen::VectorXd f = gp.conditional_mean(heldout.pairs, embeddings);
  return network_loglik(f, heldout.x);
}

ClusterMetrics cluster_metrics(const std::vector<std::uint32_t>& predicted,
                               const std::vector<std::uint32_t>& truth) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw ValidationError("cluster_metrics: label lengths disagree or empty");
  double N = double(predicted.size());
  std::map<std::uint32_t, std::map<std::uint32_t, double>> table;  // pred -> truth -> count
  std::map<std::uint32_t, double> pc, tc;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    table[predicted[i]][truth[i]] += 1.0;
    pc[predicted[i]] += 1.0;
    tc[truth[i]] += 1.0;
  }
  ClusterMetrics out;
  for (const auto& [c, row] : table) {
    double best = 0.0;
    for (const auto& [l, n] : row) best = std::max(best, n);
    out.purity += best / N;
  }
  // I = H(pred) + H(truth) - H(joint), each entropy summed over sorted count
  // lists. A one-to-one labeling then yields three bitwise-equal entropies,
  // so the ratio is exactly 1.
  auto entropy = [N](std::vector<double> counts) {
    std::sort(counts.begin(), counts.end());
    double h = 0.0;
    for (double n : counts) h -= n / N * std::log(n / N);
    return h;
  };
  std::vector<double> joint, rows, cols;
  for (const auto& [c, row] : table)
    for (const auto& [l, n] : row) joint.push_back(n);
  for (const auto& [c, n] : pc) rows.push_back(n);
  for (const auto& [l, n] : tc) cols.push_back(n);
  double hp = entropy(rows), ht = entropy(cols);
  double mi = hp + ht - entropy(joint);
  double denom = 0.5 * (hp + ht);
  out.nmi = denom == 0.0 ? 1.0 : std::min(1.0, std::max(0.0, mi / denom));
  return out;
}

std::vector<std::uint32_t> doc_topic_argmax(const ChainState& chain) {
  std::vector<std::uint32_t> labels(chain.n_docs(), 0);
  std::uint32_t fallback = chain.live_topics() > 0 ? chain.topic_id(0) : 0;
  for (std::uint32_t m = 0; m < chain.n_docs(); ++m) {
    std::map<std::uint32_t, std::uint32_t> counts;
    for (const auto& stream : chain.doc(m).topics)
      for (std::uint32_t id : stream) counts[id]++;
    std::uint32_t best = fallback, best_n = 0;
    for (const auto& [id, n] : counts)
      if (n > best_n) best = id, best_n = n;
    labels[m] = best;
  }
  return labels;
}

double pmi_coherence(const std::vector<std::vector<std::uint32_t>>& topics,
                     const Corpus& reference, std::uint32_t top_n) {
  if (reference.docs.empty()) throw ValidationError("pmi: empty reference corpus");
  constexpr double kEps = 1e-12;
  // Document-granularity occurrence sets over all token streams.
  std::map<std::uint32_t, double> df;
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> co;
  std::vector<std::vector<std::uint32_t>> doc_words;
  for (const auto& d : reference.docs) {
    std::vector<std::uint32_t> w(d.words);
    w.insert(w.end(), d.tags.begin(), d.tags.end());
    std::sort(w.begin(), w.end());
    w.erase(std::unique(w.begin(), w.end()), w.end());
    for (std::uint32_t t : w) df[t] += 1.0;
    doc_words.push_back(std::move(w));
  }
  auto co_count = [&](std::uint32_t a, std::uint32_t b) {
    if (a > b) std::swap(a, b);
    auto it = co.find({a, b});
    if (it != co.end()) return it->second;
    double n = 0.0;
    for (const auto& w : doc_words)
      if (std::binary_search(w.begin(), w.end(), a) && std::binary_search(w.begin(), w.end(), b))
        n += 1.0;
    co[{a, b}] = n;
    return n;
  };
  double D = double(reference.docs.size());
  double total = 0.0;
  std::uint32_t used = 0;
  for (const auto& list : topics) {
    std::vector<std::uint32_t> words(list.begin(),
                                     list.begin() + std::min<std::size_t>(list.size(), top_n));
    if (words.size() < 2) continue;
    double sum = 0.0;
    std::uint32_t pairs = 0;
    for (std::size_t i = 0; i < words.size(); ++i)
      for (std::size_t j = i + 1; j < words.size(); ++j) {
        double pij = (co_count(words[i], words[j]) + kEps) / D;
        double pi = (df[words[i]] + kEps) / D;
        double pj = (df[words[j]] + kEps) / D;
        sum += std::log(pij / (pi * pj));
        pairs++;
      }
    total += sum / double(pairs);
    used++;
  }
  return used == 0 ? 0.0 : total / double(used);
}

std::vector<std::vector<std::uint32_t>> topic_top_words(const ChainState& chain, std::uint32_t n) {
  std::uint32_t leaf = leaf_of_stream(chain.graph(), StreamKind::Words);
  std::vector<std::vector<std::uint32_t>> out;
  for (std::uint32_t k = 0; k < chain.live_topics(); ++k)
    out.push_back(top_indices(chain.symbol_predictive_vector(leaf, k), n));
  return out;
}

std::vector<TopicLabel> label_topics(const ChainState& chain, std::uint32_t top_k_tags,
                                     std::uint32_t top_k_words) {
  const CompiledGraph& g = chain.graph();
  std::uint32_t tag_leaf = leaf_of_stream(g, StreamKind::Hashtags);
  std::uint32_t words_leaf = leaf_of_stream(g, StreamKind::Words);
  std::vector<TopicLabel> out;
  for (std::uint32_t k = 0; k < chain.live_topics(); ++k) {
    TopicLabel label;
    label.topic_id = chain.topic_id(k);
    label.tags = top_indices(chain.symbol_predictive_vector(tag_leaf, k), top_k_tags);
    label.words = top_indices(chain.symbol_predictive_vector(words_leaf, k), top_k_words);
    out.push_back(std::move(label));
  }
  return out;
}

std::vector<AuthorTopic> author_topics(const ChainState& chain, std::uint32_t author) {
  if (author >= chain.n_authors()) throw ValidationError("author_topics: unknown author");
  std::uint32_t tmpl = author_template(chain.graph());
  const NodeState& s = chain.node(tmpl, author);
  double total = double(s.total_customers());
  std::vector<AuthorTopic> out;
  if (total == 0.0) return out;
  for (std::uint32_t k = 0; k < chain.live_topics(); ++k)
    if (s.customers(k) > 0) out.push_back({chain.topic_id(k), double(s.customers(k)) / total});
  std::stable_sort(out.begin(), out.end(),
                   [](const AuthorTopic& a, const AuthorTopic& b) { return a.weight > b.weight; });
  return out;
}

Eigen::MatrixXd author_embeddings(const ChainState& chain) {
  std::uint32_t tmpl = author_template(chain.graph());
  Eigen::MatrixXd emb(chain.n_authors(), chain.live_topics());
  for (std::uint32_t a = 0; a < chain.n_authors(); ++a)
    emb.row(a) = smoothed(chain.instance_counts(tmpl, a)).transpose();
  return emb;
}

double rank_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw ValidationError("rank_auc: scores and labels disagree or empty");
  std::vector<std::uint32_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::sort(idx.begin(), idx.end(),
            [&](std::uint32_t a, std::uint32_t b) { return scores[a] < scores[b]; });
  // Midranks, then the Mann-Whitney statistic.
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) j++;
    double mid = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
    i = j + 1;
  }
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k]) {
      pos += 1.0;
      rank_sum += rank[k];
    }
  double neg = double(labels.size()) - pos;
  if (pos == 0.0 || neg == 0.0) throw ValidationError("rank_auc: need both classes");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

GpState fit_gp(KernelKind kind, const KernelParams& params, const Eigen::MatrixXd& embeddings,
               const PairSet& pairs, std::uint32_t sweeps, std::uint32_t inner_steps, double step,
               Rng& rng) {
  GpState gp(kind, params, pairs);
  gp.set_embeddings(embeddings);
  for (std::uint32_t s = 0; s < sweeps; ++s) gp.mh_sweep_f(step, int(inner_steps), rng);
  return gp;
}

RecommendationReport recommend_authors(
    const ChainState& chain, const std::vector<std::vector<std::vector<std::uint32_t>>>& new_docs,
    const PairSet& pairs, KernelKind kernel, const KernelParams& params,
    const RecommendOptions& opt) {
  std::size_t tokens = 0;
  for (const auto& doc : new_docs)
    for (const auto& stream : doc) tokens += stream.size();
  if (new_docs.empty() || tokens == 0)
    throw ValidationError("recommend: new author has zero tokens");
  std::uint32_t A = chain.n_authors();
  if (A == 0) throw ValidationError("recommend: no training authors");

  Eigen::MatrixXd emb = author_embeddings(chain);

  FoldContext fold(chain, A);
  for (const auto& doc : new_docs) fold.add_document(doc);
  Rng fold_rng(mix_seed(opt.seed, 11));
  fold.run(opt.fold_in_sweeps, fold_rng);
  Eigen::VectorXd nu_new = smoothed(fold.author_counts());

  Rng gp_rng(mix_seed(opt.seed, 13));
  GpState gp = fit_gp(kernel, params, emb, pairs, opt.gp_sweeps, opt.gp_inner_steps, opt.gp_step,
                      gp_rng);

  Eigen::MatrixXd query_emb(A + 1, emb.cols());
  query_emb.topRows(A) = emb;
  query_emb.row(A) = nu_new.transpose();
  std::vector<AuthorPair> query;
  for (std::uint32_t a = 0; a < A; ++a) query.push_back({a, A});
  Eigen::VectorXd scores = gp.conditional_mean(query, query_emb);

  std::vector<std::uint32_t> order(A);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });

  RecommendationReport rep;
  rep.new_author_nu = nu_new;
  std::uint32_t k = std::min(opt.top_k, A);
  for (std::uint32_t i = 0; i < k; ++i) {
    std::uint32_t a = order[i];
    rep.recommended.push_back({a, scores[a], cosine(nu_new, emb.row(a).transpose())});
  }
  for (std::uint32_t i = 0; i < k; ++i) {
    std::uint32_t a = order[A - 1 - i];
    rep.dissimilar.push_back({a, scores[a], cosine(nu_new, emb.row(a).transpose())});
  }
  return rep;
}

}  // namespace pdpnet
