#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "pdpnet/graph.hpp"

namespace pdpnet {

constexpr std::uint32_t kNoAuthor = 0xffffffffu;

// Observed (or generated) token streams of one document, one vector per leaf
// in graph order.
struct DocTokens {
  std::uint32_t author = kNoAuthor;
  std::vector<std::vector<std::uint32_t>> symbols;
  std::vector<std::vector<std::uint32_t>> topics;  // stable topic ids, filled on init
};

struct TokenRef {
  std::uint32_t doc = 0, leaf = 0, pos = 0;
};

// One node-level step of a seating cascade, recorded so a rejected proposal
// can be replayed backwards deterministically.
struct SeatStep {
  std::uint32_t tmpl = 0, replica = 0, slot = 0;
  bool table = false;
  std::uint32_t parent = 0;  // index into the node's parent list, if table
};
using SeatPath = std::vector<SeatStep>;

// Extra Metropolis-Hastings factor coupled to moves that change the counts of
// one watched node template (e.g. an author node feeding a network model).
// `basis` pins the topic ids that define embedding coordinates for the sweep;
// count vectors passed to log_accept are aligned to it.
struct CouplingHook {
  std::uint32_t watched_template = 0;
  std::vector<std::uint32_t> basis;
  std::function<double(std::uint32_t replica, const std::vector<std::uint32_t>& before,
                       const std::vector<std::uint32_t>& after)>
      log_accept;
  std::function<void(std::uint32_t replica, const std::vector<std::uint32_t>& counts)> committed;
};

struct MoveStats {
  bool coupled = false;
  bool accepted = true;
  std::uint32_t old_topic = 0, new_topic = 0;  // stable ids
  int tables_created = 0, tables_removed = 0;
};

struct SweepStats {
  double joint_ll = 0.0;
  std::uint32_t live_topics = 0;
  long tables_created = 0, tables_removed = 0;
  long coupling_proposals = 0, coupling_rejections = 0;
};

// Snapshot of everything that defines a chain's sampler state.
struct ChainArchive {
  std::vector<std::uint32_t> live_topic_ids;
  std::uint32_t next_topic_id = 0;
  std::map<std::string, double> group_concentration;
  // counts[tmpl][replica] = {n vector, t vector}
  std::vector<std::vector<std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>>>
      counts;
  // tsplit[tmpl][replica][slot][parent] for multi-parent templates (else empty)
  std::vector<std::vector<std::vector<std::vector<std::uint32_t>>>> tsplit;
  std::vector<DocTokens> docs;
};

// The collapsed sampler state of one model: every node instance's seating
// multiplicities plus the token-to-topic assignments.
class ChainState {
 public:
  ChainState(std::shared_ptr<const CompiledGraph> graph, std::vector<DocTokens> docs,
             std::uint32_t n_authors, std::uint32_t vocab_size);

  const CompiledGraph& graph() const { return *graph_; }
  std::shared_ptr<const CompiledGraph> graph_ptr() const { return graph_; }
  std::uint32_t vocab_size() const { return vocab_; }
  std::uint32_t n_docs() const { return std::uint32_t(docs_.size()); }
  std::uint32_t n_authors() const { return authors_; }
  const DocTokens& doc(std::uint32_t m) const { return docs_[m]; }

  bool finite_topics() const { return graph_->finite_topics; }
  std::uint32_t live_topics() const { return std::uint32_t(live_ids_.size()); }
  std::uint32_t topic_id(std::uint32_t dense) const { return live_ids_[dense]; }
  std::optional<std::uint32_t> dense_of(std::uint32_t topic_id) const;
  std::uint32_t tokens_with_topic(std::uint32_t dense) const { return refcount_[dense]; }

  std::uint32_t replica_count(std::uint32_t tmpl) const;
  const NodeState& node(std::uint32_t tmpl, std::uint32_t replica) const;
  std::uint32_t replica_for_doc(std::uint32_t tmpl, std::uint32_t doc) const;
  // Customer counts of one instance over dense topics.
  std::vector<std::uint32_t> instance_counts(std::uint32_t tmpl, std::uint32_t replica) const;

  // Predictive machinery; all const.
  double topic_base(std::uint32_t tmpl, std::uint32_t replica, std::uint32_t dense) const;
  double topic_base_new(std::uint32_t tmpl, std::uint32_t replica) const;
  double topic_predictive(std::uint32_t tmpl, std::uint32_t replica, std::uint32_t dense) const;
  double topic_predictive_new(std::uint32_t tmpl, std::uint32_t replica) const;
  double symbol_predictive(std::uint32_t leaf, std::uint32_t dense, std::uint32_t symbol) const;
  Eigen::VectorXd symbol_predictive_vector(std::uint32_t leaf, std::uint32_t dense) const;
  // Distribution of the next topic draw at a leaf: one entry per live topic,
  // plus a trailing new-topic mass when the topic space is unbounded.
  Eigen::VectorXd joint_predictive(std::uint32_t leaf, std::uint32_t doc) const;

  // State evolution.
  void init_sequential(Rng& rng);
  void forward_generate(Rng& rng);
  void resample_observations(Rng& rng);
  MoveStats gibbs_resample_token(const TokenRef& tok, Rng& rng,
                                 const CouplingHook* hook = nullptr);
  SweepStats full_sweep(Rng& rng, const CouplingHook* hook = nullptr);

  double joint_log_lik() const;
  void compact_topics();
  void validate_consistency() const;

  // Concentration resampling for one hyper group; returns the new value.
  double resample_group_concentration(const std::string& group, const ConcentrationPrior& prior,
                                      Rng& rng, int slice_iterations = 8);
  double group_concentration(const std::string& group) const;
  std::vector<std::string> hyper_group_names() const;

  // Correctness-harness mutation: suppress stochastic table removals (only
  // removals forced by count validity still happen).
  void set_suppress_table_removal(bool v) { suppress_removal_ = v; }

  ChainArchive dump() const;
  void restore(const ChainArchive& archive);

 private:
  friend class FoldContext;

  NodeState& node_mut(std::uint32_t tmpl, std::uint32_t replica);
  std::uint32_t parent_replica(std::uint32_t child_tmpl, std::uint32_t child_rep,
                               std::uint32_t parent_tmpl) const;
  bool multi_parent(std::uint32_t tmpl) const;
  std::vector<std::uint32_t>& tsplit_row(std::uint32_t tmpl, std::uint32_t replica,
                                         std::uint32_t slot);
  double root_base(std::uint32_t tmpl, bool new_topic) const;

  std::uint32_t allocate_topic();
  void seat_topic(std::uint32_t tmpl, std::uint32_t replica, std::uint32_t dense, Rng& rng,
                  SeatPath& path);
  void unseat_topic(std::uint32_t tmpl, std::uint32_t replica, std::uint32_t dense, Rng& rng,
                    SeatPath& path);
  void seat_symbol(std::uint32_t leaf, std::uint32_t dense, std::uint32_t symbol, Rng& rng,
                   SeatPath& path);
  void unseat_symbol(std::uint32_t leaf, std::uint32_t dense, std::uint32_t symbol, Rng& rng,
                     SeatPath& path);
  void undo_path(const SeatPath& path);    // reverse an add cascade
  void replay_path(const SeatPath& path);  // re-apply a removal cascade backwards

  std::shared_ptr<const CompiledGraph> graph_;
  std::vector<DocTokens> docs_;
  std::uint32_t authors_ = 0, vocab_ = 0;

  std::vector<std::vector<NodeState>> states_;  // [tmpl][replica]
  // [tmpl][replica][slot][parent] table attributions, multi-parent only
  std::vector<std::vector<std::vector<std::vector<std::uint32_t>>>> tsplit_;

  std::vector<std::uint32_t> live_ids_;  // dense -> stable id
  std::unordered_map<std::uint32_t, std::uint32_t> id2dense_;
  std::vector<std::uint32_t> refcount_;  // tokens per dense topic
  std::uint32_t next_id_ = 0;

  struct Group {
    std::string name;
    double concentration = 0.5;
    std::shared_ptr<StirlingCache> cache;
    std::vector<std::uint32_t> templates;
  };
  std::vector<Group> groups_;
  std::map<std::string, std::uint32_t> group_index_;

  bool suppress_removal_ = false;
  bool initialized_ = false;
};

// Convenience: DocTokens skeletons with given stream lengths (symbols zeroed,
// to be filled by forward generation).
std::vector<DocTokens> empty_docs(const CompiledGraph& graph, std::uint32_t n_docs,
                                  std::uint32_t n_authors,
                                  const std::vector<std::uint32_t>& words_per_doc,
                                  const std::vector<std::uint32_t>& tags_per_doc);

}  // namespace pdpnet
