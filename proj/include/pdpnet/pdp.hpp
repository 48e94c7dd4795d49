#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "pdpnet/common.hpp"
#include "pdpnet/math.hpp"

namespace pdpnet {

// Two-parameter Poisson-Dirichlet hyperparameters.
struct PdpHyper {
  double discount = 0.5;       // in [0, 1)
  double concentration = 0.5;  // > -discount

  void validate() const;
};

struct ConcentrationPrior {
  double shape = 0.1;
  double rate = 0.1;
};

// Outcome of one seat/unseat operation.
struct TableDelta {
  std::uint32_t topic = 0;
  bool table_changed = false;  // a table was created (add) or removed (remove)
};

// One restaurant in the collapsed representation: per-topic customer and
// table multiplicities. Which customers sit at which tables is never stored;
// removals impute the table indicator from its exact conditional, a ratio of
// generalized Stirling numbers served by the shared per-discount cache.
class NodeState {
 public:
  NodeState() : NodeState(PdpHyper{}) {}
  explicit NodeState(PdpHyper hyper, std::shared_ptr<StirlingCache> cache = nullptr);

  const PdpHyper& hyper() const { return hyper_; }
  void set_concentration(double b);

  std::uint32_t slots() const { return std::uint32_t(n_.size()); }
  void ensure_slots(std::uint32_t k);
  // Replace all counts at once (snapshot restore); validates per-slot t<=n
  // and n>0 <=> t>0.
  void set_counts(std::vector<std::uint32_t> n, std::vector<std::uint32_t> t);
  // Compaction support: move the last slot into position i (both must be empty
  // or the caller remaps external references accordingly).
  void swap_remove_slot(std::uint32_t i);

  std::uint32_t customers(std::uint32_t k) const { return k < n_.size() ? n_[k] : 0; }
  std::uint32_t tables(std::uint32_t k) const { return k < t_.size() ? t_[k] : 0; }
  std::uint64_t total_customers() const { return total_n_; }
  std::uint64_t total_tables() const { return total_t_; }
  bool empty() const { return total_n_ == 0; }

  std::shared_ptr<StirlingCache> cache() const { return cache_; }

  friend double predictive_one(const NodeState&, std::uint32_t, double);
  friend double predictive_new(const NodeState&);
  friend double new_table_probability(const NodeState&, std::uint32_t, double);
  friend double table_removal_probability(const NodeState&, std::uint32_t);
  friend TableDelta add_customer(NodeState&, std::uint32_t, double, Rng&);
  friend void add_customer_forced(NodeState&, std::uint32_t, bool);
  friend TableDelta remove_customer(NodeState&, std::uint32_t, Rng&);
  friend void remove_customer_forced(NodeState&, std::uint32_t, bool);
  friend double seating_log_prob(const NodeState&);
  friend double concentration_log_lik(const NodeState&, double);

 private:
  PdpHyper hyper_;
  std::shared_ptr<StirlingCache> cache_;
  std::vector<std::uint32_t> n_, t_;
  std::uint64_t total_n_ = 0, total_t_ = 0;
};

// Predictive probability of topic k given the parent's probability for k.
// (n_k - a t_k)/(N + b) + (b + a T)/(N + b) * base. Empty node: base.
double predictive_one(const NodeState& node, std::uint32_t k, double base);

// Mass multiplier for anything outside the node's own counts:
// (b + a T)/(N + b); 1 for an empty node.
double predictive_new(const NodeState& node);

// Full predictive vector. parent_probs has one entry per slot, or one extra
// trailing entry carrying the parent's new-topic mass; the result has the
// same dimension. Any other dimension is a structural error.
Eigen::VectorXd predictive(const NodeState& node, const Eigen::VectorXd& parent_probs);

// Probability that the next customer for topic k opens a new table, given the
// parent's probability of k: (b + aT) base / ((b + aT) base + n_k - a t_k).
double new_table_probability(const NodeState& node, std::uint32_t k, double base);

// Probability that removing one customer of topic k removes a table:
// S^{n-1}_{t-1}(a) / S^n_t(a).
double table_removal_probability(const NodeState& node, std::uint32_t k);

TableDelta add_customer(NodeState& node, std::uint32_t k, double parent_new_topic_prob, Rng& rng);
TableDelta remove_customer(NodeState& node, std::uint32_t k, Rng& rng);

// Deterministic replays used to reverse a rejected proposal exactly.
void add_customer_forced(NodeState& node, std::uint32_t k, bool create_table);
void remove_customer_forced(NodeState& node, std::uint32_t k, bool remove_table);

// log [ (b|a)_T / (b)_N * prod_k S^{n_k}_{t_k}(a) ]: the node's seating term
// of the collapsed joint, excluding base-measure factors.
double seating_log_prob(const NodeState& node);

// The b-dependent part of the seating probability, evaluated at candidate b.
double concentration_log_lik(const NodeState& node, double b);

// Slice-sample the shared concentration of a group of nodes under a Gamma
// prior, given their seating statistics. Writes the sampled value into every
// node and returns it. With no informative nodes the posterior is the prior,
// which is drawn directly.
double sample_concentration(std::span<NodeState* const> nodes, const ConcentrationPrior& prior,
                            Rng& rng, int slice_iterations = 8);

}  // namespace pdpnet
