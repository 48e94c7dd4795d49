#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pdpnet/chain.hpp"
#include "pdpnet/corpus.hpp"
#include "pdpnet/gp.hpp"

namespace pdpnet {

// Folds held-out documents into a trained chain. Fresh document-level node
// instances (and, for an unseen author, a fresh author-level instance) are
// seated by Gibbs over the live topics; every trained instance is frozen and
// consulted read-only as a base distribution.
class FoldContext {
 public:
  // author < chain.n_authors(): a trained author. author == chain.n_authors():
  // a brand-new author (requires an author-level topic node in the graph).
  FoldContext(const ChainState& chain, std::uint32_t author);

  // Register one document's token streams (graph leaf order); returns its
  // local index. Tokens start unassigned.
  std::uint32_t add_document(std::vector<std::vector<std::uint32_t>> symbols);

  // Seat any unassigned tokens sequentially, then run full Gibbs passes.
  void run(std::uint32_t sweeps, Rng& rng);

  std::uint32_t n_docs() const { return std::uint32_t(docs_.size()); }

  // Document-level predictive weight of a live topic / of a fresh topic at
  // the leaf's topic node.
  double topic_weight(std::uint32_t doc, std::uint32_t leaf, std::uint32_t dense) const;
  double new_topic_weight(std::uint32_t doc, std::uint32_t leaf) const;

  // Predictive probability of one more symbol at this leaf of a folded doc.
  double score_symbol(std::uint32_t doc, std::uint32_t leaf, std::uint32_t symbol) const;

  // Customer counts of the local author-level node over dense topics; only
  // meaningful in new-author mode.
  std::vector<std::uint32_t> author_counts() const;

 private:
  struct LocalRef {
    bool local = false;
    std::uint32_t replica = 0;  // local replica (docs) or frozen replica
  };

  LocalRef resolve(std::uint32_t tmpl, std::uint32_t doc) const;
  double base(std::uint32_t tmpl, std::uint32_t doc, std::uint32_t dense) const;
  double base_new(std::uint32_t tmpl, std::uint32_t doc) const;
  double pred(std::uint32_t tmpl, std::uint32_t doc, std::uint32_t dense) const;
  double pred_new(std::uint32_t tmpl, std::uint32_t doc) const;
  void seat(std::uint32_t tmpl, std::uint32_t doc, std::uint32_t dense, Rng& rng);
  void unseat(std::uint32_t tmpl, std::uint32_t doc, std::uint32_t dense, Rng& rng);
  void resample_token(std::uint32_t doc, std::uint32_t leaf, std::uint32_t pos, Rng& rng);

  const ChainState& chain_;
  const CompiledGraph& g_;
  std::uint32_t author_ = 0;
  bool new_author_ = false;
  std::uint32_t author_tmpl_ = 0;  // valid when new_author_

  std::vector<bool> local_;                     // template folds locally
  std::vector<std::vector<NodeState>> states_;  // [tmpl][local replica]
  // [tmpl][local replica][slot][parent] table attributions (multi-parent only)
  std::vector<std::vector<std::vector<std::vector<std::uint32_t>>>> tsplit_;

  std::vector<std::vector<std::vector<std::uint32_t>>> docs_;    // [doc][leaf][pos] symbols
  std::vector<std::vector<std::vector<std::uint32_t>>> assign_;  // dense topic or kUnassigned
};

struct PerplexityReport {
  double perplexity = 0.0;
  double log_lik = 0.0;  // sum of log predictive over scored tokens
  std::uint64_t scored_tokens = 0;
  std::uint32_t excluded_docs = 0;  // held-out half empty
};

// Document-completion perplexity: the first ceil(fraction * len) tokens of
// each stream are folded in by Gibbs, the remaining words are scored by the
// predictive. Deterministic given seed.
PerplexityReport perplexity(const ChainState& chain, const Corpus& test,
                            double fold_in_fraction = 0.5, std::uint32_t fold_in_sweeps = 50,
                            std::uint64_t seed = 1);

// Posterior-mean link score of held-out pairs under the trained GP; pair
// indices address rows of embeddings.
double heldout_network_ll(const GpState& gp, const PairSet& heldout,
                          const Eigen::MatrixXd& embeddings);

struct ClusterMetrics {
  double purity = 0.0;
  double nmi = 0.0;
};

// Purity and normalized mutual information (normalizer: arithmetic mean of
// the two entropies) of a predicted clustering against true labels.
ClusterMetrics cluster_metrics(const std::vector<std::uint32_t>& predicted,
                               const std::vector<std::uint32_t>& truth);

// Per-document dominant topic (stable ids) from the current assignments.
std::vector<std::uint32_t> doc_topic_argmax(const ChainState& chain);

// Mean pairwise pointwise mutual information of each topic's top-n word list
// against document-level co-occurrence counts in the reference corpus.
double pmi_coherence(const std::vector<std::vector<std::uint32_t>>& topics,
                     const Corpus& reference, std::uint32_t top_n = 10);

// Top-n vocabulary indices per live topic by word predictive mass.
std::vector<std::vector<std::uint32_t>> topic_top_words(const ChainState& chain, std::uint32_t n);

struct TopicLabel {
  std::uint32_t topic_id = 0;
  std::vector<std::uint32_t> tags;   // vocabulary indices, best first
  std::vector<std::uint32_t> words;  // vocabulary indices, best first
};

// Hashtag labels plus top words per live topic; requires a hashtag stream.
std::vector<TopicLabel> label_topics(const ChainState& chain, std::uint32_t top_k_tags = 3,
                                     std::uint32_t top_k_words = 7);

struct AuthorTopic {
  std::uint32_t topic_id = 0;
  double weight = 0.0;
};

// The author's topic profile: normalized author-node customer counts, sorted
// descending, zero-weight topics omitted.
std::vector<AuthorTopic> author_topics(const ChainState& chain, std::uint32_t author);

// Smoothed per-author topic proportions over the live dense topics
// ((count + 1/2) / (total + K/2)); rows are GP embedding inputs.
Eigen::MatrixXd author_embeddings(const ChainState& chain);

// Area under the ROC curve of scores against binary labels (ties get half
// credit).
double rank_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

// Fit the latent link function on a fixed pair set by repeated pCN sweeps.
GpState fit_gp(KernelKind kind, const KernelParams& params, const Eigen::MatrixXd& embeddings,
               const PairSet& pairs, std::uint32_t sweeps, std::uint32_t inner_steps, double step,
               Rng& rng);

struct RecommendOptions {
  std::uint32_t top_k = 3;
  std::uint32_t fold_in_sweeps = 50;
  std::uint32_t gp_sweeps = 200;
  std::uint32_t gp_inner_steps = 20;
  double gp_step = 0.2;
  std::uint64_t seed = 1;
};

struct RankedAuthor {
  std::uint32_t author = 0;
  double link_score = 0.0;  // GP conditional mean for the (new, author) pair
  double nu_cosine = 0.0;   // cosine of smoothed topic profiles
};

struct RecommendationReport {
  std::vector<RankedAuthor> recommended;  // best first
  std::vector<RankedAuthor> dissimilar;   // worst first
  Eigen::VectorXd new_author_nu;          // smoothed profile over dense topics
};

// Fold a new author's documents in, fit the link GP on the training pair set
// under the chosen kernel, and rank training authors by the conditional mean
// of the latent link function for the (new, existing) pair.
RecommendationReport recommend_authors(
    const ChainState& chain, const std::vector<std::vector<std::vector<std::uint32_t>>>& new_docs,
    const PairSet& pairs, KernelKind kernel, const KernelParams& params,
    const RecommendOptions& opt = {});

}  // namespace pdpnet
