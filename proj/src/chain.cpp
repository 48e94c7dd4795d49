#include "pdpnet/chain.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pdpnet {

namespace {

// Draw an index proportional to non-negative weights; zero-weight entries are
// never selected.
std::uint32_t sample_discrete(const std::vector<double>& w, Rng& rng) {
  double total = 0.0;
  for (double x : w) total += x;
  if (!(total > 0.0)) throw NumericalError("sample_discrete: no admissible choice");
  double u = uniform01(rng) * total;
  double acc = 0.0;
  std::uint32_t last = 0;
  bool seen = false;
  for (std::uint32_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    acc += w[i];
    last = i;
    seen = true;
    if (u < acc) return i;
  }
  if (!seen) throw NumericalError("sample_discrete: no admissible choice");
  return last;  // u landed on the rounding slack
}

}  // namespace

ChainState::ChainState(std::shared_ptr<const CompiledGraph> graph, std::vector<DocTokens> docs,
                       std::uint32_t n_authors, std::uint32_t vocab_size)
    : graph_(std::move(graph)), docs_(std::move(docs)), authors_(n_authors), vocab_(vocab_size) {
  if (!graph_) throw ValidationError("ChainState: null graph");
  if (vocab_ == 0) throw ValidationError("ChainState: vocabulary must be non-empty");
  for (std::uint32_t m = 0; m < docs_.size(); ++m) {
    auto& d = docs_[m];
    if (d.symbols.size() != graph_->leaves.size())
      throw ValidationError("ChainState: document streams do not match graph leaves");
    if (d.author != kNoAuthor && d.author >= authors_)
      throw ValidationError("ChainState: document author out of range");
    d.topics.assign(d.symbols.size(), {});
    for (std::uint32_t l = 0; l < d.symbols.size(); ++l) {
      for (auto w : d.symbols[l])
        if (w >= vocab_) throw ValidationError("ChainState: symbol out of range");
      d.topics[l].assign(d.symbols[l].size(), 0);
    }
  }

  // Hyper groups, in name order for determinism.
  for (const auto& [name, hyper] : graph_->spec.hyper_groups) {
    Group g;
    g.name = name;
    g.concentration = hyper.concentration;
    g.cache = std::make_shared<StirlingCache>(hyper.discount);
    group_index_[name] = std::uint32_t(groups_.size());
    groups_.push_back(std::move(g));
  }
  for (std::uint32_t t = 0; t < graph_->nodes.size(); ++t)
    groups_[group_index_.at(graph_->nodes[t].spec.hyper_group)].templates.push_back(t);

  // Finite topic spaces carry their whole registry from the start.
  if (graph_->finite_topics) {
    for (std::uint32_t k = 0; k < graph_->truncation; ++k) {
      live_ids_.push_back(k);
      id2dense_[k] = k;
      refcount_.push_back(0);
    }
    next_id_ = graph_->truncation;
  }

  states_.resize(graph_->nodes.size());
  tsplit_.resize(graph_->nodes.size());
  for (std::uint32_t t = 0; t < graph_->nodes.size(); ++t) {
    const auto& nd = graph_->nodes[t];
    const auto& g = groups_[group_index_.at(nd.spec.hyper_group)];
    PdpHyper h = graph_->spec.hyper_groups.at(nd.spec.hyper_group);
    h.concentration = g.concentration;
    std::uint32_t reps = 1;
    switch (nd.spec.plate) {
      case PlateKind::Global: reps = 1; break;
      case PlateKind::PerAuthor: reps = authors_; break;
      case PlateKind::PerDocument: reps = std::uint32_t(docs_.size()); break;
      case PlateKind::PerTopic: reps = live_topics(); break;
    }
    states_[t].reserve(reps);
    for (std::uint32_t r = 0; r < reps; ++r) states_[t].emplace_back(h, g.cache);
    tsplit_[t].resize(reps);
  }
}

std::optional<std::uint32_t> ChainState::dense_of(std::uint32_t topic_id) const {
  auto it = id2dense_.find(topic_id);
  if (it == id2dense_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t ChainState::replica_count(std::uint32_t tmpl) const {
  return std::uint32_t(states_.at(tmpl).size());
}

const NodeState& ChainState::node(std::uint32_t tmpl, std::uint32_t replica) const {
  return states_.at(tmpl).at(replica);
}

NodeState& ChainState::node_mut(std::uint32_t tmpl, std::uint32_t replica) {
  return states_.at(tmpl).at(replica);
}

std::uint32_t ChainState::replica_for_doc(std::uint32_t tmpl, std::uint32_t doc) const {
  switch (graph_->nodes[tmpl].spec.plate) {
    case PlateKind::Global: return 0;
    case PlateKind::PerDocument: return doc;
    case PlateKind::PerAuthor: {
      std::uint32_t a = docs_[doc].author;
      if (a == kNoAuthor) throw ValidationError("replica_for_doc: document has no author");
      return a;
    }
    default: throw ValidationError("replica_for_doc: per-topic node is not document-scoped");
  }
}

std::uint32_t ChainState::parent_replica(std::uint32_t child_tmpl, std::uint32_t child_rep,
                                         std::uint32_t parent_tmpl) const {
  switch (graph_->nodes[parent_tmpl].spec.plate) {
    case PlateKind::Global: return 0;
    case PlateKind::PerTopic: return child_rep;
    case PlateKind::PerDocument: return child_rep;
    case PlateKind::PerAuthor: {
      if (graph_->nodes[child_tmpl].spec.plate != PlateKind::PerDocument)
        throw ValidationError("parent_replica: author-plate parent of a non-document node");
      std::uint32_t a = docs_[child_rep].author;
      if (a == kNoAuthor) throw ValidationError("parent_replica: document has no author");
      return a;
    }
  }
  throw ValidationError("parent_replica: unknown plate");
}

bool ChainState::multi_parent(std::uint32_t tmpl) const {
  return graph_->nodes[tmpl].parents.size() > 1;
}

std::vector<std::uint32_t>& ChainState::tsplit_row(std::uint32_t tmpl, std::uint32_t replica,
                                                   std::uint32_t slot) {
  auto& rows = tsplit_[tmpl][replica];
  if (slot >= rows.size())
    rows.resize(slot + 1, std::vector<std::uint32_t>(graph_->nodes[tmpl].parents.size(), 0));
  return rows[slot];
}

double ChainState::root_base(std::uint32_t tmpl, bool new_topic) const {
  const auto& spec = graph_->nodes[tmpl].spec;
  switch (spec.base) {
    case BaseKind::TopicUnbounded: return new_topic ? 1.0 : 0.0;
    case BaseKind::TopicFinite: return new_topic ? 0.0 : 1.0 / double(spec.base_size);
    case BaseKind::Vocabulary: return new_topic ? 0.0 : 1.0 / double(spec.base_size);
    case BaseKind::Parents: break;
  }
  throw ValidationError("root_base: node has parents");
}

double ChainState::topic_base(std::uint32_t tmpl, std::uint32_t replica,
                              std::uint32_t slot) const {
  const auto& nd = graph_->nodes[tmpl];
  if (nd.parents.empty()) return root_base(tmpl, false);
  double b = 0.0;
  for (const auto& p : nd.parents)
    b += p.weight * topic_predictive(p.node, parent_replica(tmpl, replica, p.node), slot);
  return b;
}

double ChainState::topic_base_new(std::uint32_t tmpl, std::uint32_t replica) const {
  const auto& nd = graph_->nodes[tmpl];
  if (nd.parents.empty()) return root_base(tmpl, true);
  double b = 0.0;
  for (const auto& p : nd.parents)
    b += p.weight * topic_predictive_new(p.node, parent_replica(tmpl, replica, p.node));
  return b;
}

double ChainState::topic_predictive(std::uint32_t tmpl, std::uint32_t replica,
                                    std::uint32_t slot) const {
  return predictive_one(node(tmpl, replica), slot, topic_base(tmpl, replica, slot));
}

double ChainState::topic_predictive_new(std::uint32_t tmpl, std::uint32_t replica) const {
  return predictive_new(node(tmpl, replica)) * topic_base_new(tmpl, replica);
}

double ChainState::symbol_predictive(std::uint32_t leaf, std::uint32_t dense,
                                     std::uint32_t symbol) const {
  return topic_predictive(graph_->leaves.at(leaf).symbol_node, dense, symbol);
}

Eigen::VectorXd ChainState::symbol_predictive_vector(std::uint32_t leaf,
                                                     std::uint32_t dense) const {
  Eigen::VectorXd out(vocab_);
  for (std::uint32_t w = 0; w < vocab_; ++w)
    out[w] = symbol_predictive(leaf, dense, w);
  return out;
}

Eigen::VectorXd ChainState::joint_predictive(std::uint32_t leaf, std::uint32_t doc) const {
  std::uint32_t tn = graph_->leaves.at(leaf).topic_node;
  std::uint32_t rep = replica_for_doc(tn, doc);
  std::uint32_t K = live_topics();
  bool open = !finite_topics();
  Eigen::VectorXd out(K + (open ? 1 : 0));
  for (std::uint32_t k = 0; k < K; ++k) out[k] = topic_predictive(tn, rep, k);
  if (open) out[K] = topic_predictive_new(tn, rep);
  return out;
}

std::vector<std::uint32_t> ChainState::instance_counts(std::uint32_t tmpl,
                                                       std::uint32_t replica) const {
  const NodeState& s = node(tmpl, replica);
  std::vector<std::uint32_t> out(live_topics(), 0);
  for (std::uint32_t k = 0; k < out.size(); ++k) out[k] = s.customers(k);
  return out;
}

std::uint32_t ChainState::allocate_topic() {
  if (finite_topics()) throw ValidationError("allocate_topic: topic space is fixed");
  std::uint32_t id = next_id_++;
  std::uint32_t dense = live_topics();
  live_ids_.push_back(id);
  id2dense_[id] = dense;
  refcount_.push_back(0);
  for (std::uint32_t t = 0; t < graph_->nodes.size(); ++t) {
    if (graph_->nodes[t].spec.plate != PlateKind::PerTopic) continue;
    const auto& g = groups_[group_index_.at(graph_->nodes[t].spec.hyper_group)];
    PdpHyper h = graph_->spec.hyper_groups.at(graph_->nodes[t].spec.hyper_group);
    h.concentration = g.concentration;
    states_[t].emplace_back(h, g.cache);
    tsplit_[t].emplace_back();
  }
  return dense;
}

void ChainState::seat_topic(std::uint32_t tmpl, std::uint32_t replica, std::uint32_t slot,
                            Rng& rng, SeatPath& path) {
  const auto& nd = graph_->nodes[tmpl];
  NodeState& s = node_mut(tmpl, replica);
  s.ensure_slots(slot + 1);
  bool create;
  if (s.customers(slot) == 0) {
    create = true;
  } else {
    double p = new_table_probability(s, slot, topic_base(tmpl, replica, slot));
    create = p >= 1.0 ? true : (p <= 0.0 ? false : uniform01(rng) < p);
  }
  add_customer_forced(s, slot, create);
  if (create && !nd.parents.empty()) {
    std::uint32_t j = 0;
    if (nd.parents.size() > 1) {
      std::vector<double> w(nd.parents.size());
      double total = 0.0;
      for (std::uint32_t i = 0; i < nd.parents.size(); ++i) {
        const auto& p = nd.parents[i];
        w[i] = p.weight * topic_predictive(p.node, parent_replica(tmpl, replica, p.node), slot);
        total += w[i];
      }
      if (total <= 0.0) {
        // The dish is fresh everywhere upstream: route by each parent's total
        // fresh-dish mass (the common per-atom factor cancels).
        for (std::uint32_t i = 0; i < nd.parents.size(); ++i) {
          const auto& p = nd.parents[i];
          w[i] = p.weight *
                 topic_predictive_new(p.node, parent_replica(tmpl, replica, p.node));
        }
      }
      j = sample_discrete(w, rng);
      tsplit_row(tmpl, replica, slot)[j]++;
    }
    path.push_back({tmpl, replica, slot, true, j});
    const auto& pj = nd.parents[j];
    seat_topic(pj.node, parent_replica(tmpl, replica, pj.node), slot, rng, path);
  } else {
    path.push_back({tmpl, replica, slot, create, 0});
  }
}

void ChainState::unseat_topic(std::uint32_t tmpl, std::uint32_t replica, std::uint32_t slot,
                              Rng& rng, SeatPath& path) {
  const auto& nd = graph_->nodes[tmpl];
  NodeState& s = node_mut(tmpl, replica);
  if (s.customers(slot) == 0) throw ValidationError("unseat: no customer to remove");
  bool removed;
  if (suppress_removal_) {
    removed = s.tables(slot) == s.customers(slot);
  } else {
    double rho = table_removal_probability(s, slot);
    removed = rho >= 1.0 ? true : (rho <= 0.0 ? false : uniform01(rng) < rho);
  }
  if (removed && !nd.parents.empty()) {
    std::uint32_t j = 0;
    if (nd.parents.size() > 1) {
      auto& row = tsplit_row(tmpl, replica, slot);
      std::vector<double> w(row.begin(), row.end());
      j = sample_discrete(w, rng);
      row[j]--;
    }
    remove_customer_forced(s, slot, true);
    path.push_back({tmpl, replica, slot, true, j});
    const auto& pj = nd.parents[j];
    unseat_topic(pj.node, parent_replica(tmpl, replica, pj.node), slot, rng, path);
  } else {
    remove_customer_forced(s, slot, removed);
    path.push_back({tmpl, replica, slot, removed, 0});
  }
}

void ChainState::seat_symbol(std::uint32_t leaf, std::uint32_t dense, std::uint32_t symbol,
                             Rng& rng, SeatPath& path) {
  seat_topic(graph_->leaves.at(leaf).symbol_node, dense, symbol, rng, path);
}

void ChainState::unseat_symbol(std::uint32_t leaf, std::uint32_t dense, std::uint32_t symbol,
                               Rng& rng, SeatPath& path) {
  unseat_topic(graph_->leaves.at(leaf).symbol_node, dense, symbol, rng, path);
}

void ChainState::undo_path(const SeatPath& path) {
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    remove_customer_forced(node_mut(it->tmpl, it->replica), it->slot, it->table);
    if (it->table && multi_parent(it->tmpl)) tsplit_row(it->tmpl, it->replica, it->slot)[it->parent]--;
  }
}

void ChainState::replay_path(const SeatPath& path) {
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    NodeState& s = node_mut(it->tmpl, it->replica);
    s.ensure_slots(it->slot + 1);
    add_customer_forced(s, it->slot, it->table);
    if (it->table && multi_parent(it->tmpl)) tsplit_row(it->tmpl, it->replica, it->slot)[it->parent]++;
  }
}

void ChainState::init_sequential(Rng& rng) {
  if (initialized_) throw ValidationError("chain already initialized");
  initialized_ = true;
  for (std::uint32_t m = 0; m < docs_.size(); ++m) {
    for (std::uint32_t l = 0; l < graph_->leaves.size(); ++l) {
      std::uint32_t tn = graph_->leaves[l].topic_node;
      std::uint32_t rep = replica_for_doc(tn, m);
      for (std::uint32_t p = 0; p < docs_[m].symbols[l].size(); ++p) {
        std::uint32_t w = docs_[m].symbols[l][p];
        std::uint32_t K = live_topics();
        bool open = !finite_topics();
        std::vector<double> wt(K + (open ? 1 : 0));
        for (std::uint32_t k = 0; k < K; ++k)
          wt[k] = topic_predictive(tn, rep, k) * symbol_predictive(l, k, w);
        if (open) wt[K] = topic_predictive_new(tn, rep) / double(vocab_);
        std::uint32_t pick = sample_discrete(wt, rng);
        std::uint32_t dense = (open && pick == K) ? allocate_topic() : pick;
        SeatPath st, ss;
        seat_topic(tn, rep, dense, rng, st);
        seat_symbol(l, dense, w, rng, ss);
        refcount_[dense]++;
        docs_[m].topics[l][p] = live_ids_[dense];
      }
    }
  }
}

void ChainState::forward_generate(Rng& rng) {
  if (initialized_) throw ValidationError("chain already initialized");
  initialized_ = true;
  for (std::uint32_t m = 0; m < docs_.size(); ++m) {
    for (std::uint32_t l = 0; l < graph_->leaves.size(); ++l) {
      std::uint32_t tn = graph_->leaves[l].topic_node;
      std::uint32_t rep = replica_for_doc(tn, m);
      for (std::uint32_t p = 0; p < docs_[m].symbols[l].size(); ++p) {
        std::uint32_t K = live_topics();
        bool open = !finite_topics();
        std::vector<double> wt(K + (open ? 1 : 0));
        for (std::uint32_t k = 0; k < K; ++k) wt[k] = topic_predictive(tn, rep, k);
        if (open) wt[K] = topic_predictive_new(tn, rep);
        std::uint32_t pick = sample_discrete(wt, rng);
        std::uint32_t dense = (open && pick == K) ? allocate_topic() : pick;
        SeatPath st;
        seat_topic(tn, rep, dense, rng, st);
        std::vector<double> sw(vocab_);
        for (std::uint32_t w = 0; w < vocab_; ++w) sw[w] = symbol_predictive(l, dense, w);
        std::uint32_t w = sample_discrete(sw, rng);
        SeatPath ss;
        seat_symbol(l, dense, w, rng, ss);
        refcount_[dense]++;
        docs_[m].symbols[l][p] = w;
        docs_[m].topics[l][p] = live_ids_[dense];
      }
    }
  }
}

void ChainState::resample_observations(Rng& rng) {
  for (std::uint32_t m = 0; m < docs_.size(); ++m) {
    for (std::uint32_t l = 0; l < graph_->leaves.size(); ++l) {
      for (std::uint32_t p = 0; p < docs_[m].symbols[l].size(); ++p) {
        auto dense = dense_of(docs_[m].topics[l][p]);
        if (!dense) throw ValidationError("resample_observations: dead topic on token");
        std::uint32_t w_old = docs_[m].symbols[l][p];
        SeatPath un;
        unseat_symbol(l, *dense, w_old, rng, un);
        std::vector<double> sw(vocab_);
        for (std::uint32_t w = 0; w < vocab_; ++w) sw[w] = symbol_predictive(l, *dense, w);
        std::uint32_t w_new = sample_discrete(sw, rng);
        SeatPath se;
        seat_symbol(l, *dense, w_new, rng, se);
        docs_[m].symbols[l][p] = w_new;
      }
    }
  }
}

MoveStats ChainState::gibbs_resample_token(const TokenRef& tok, Rng& rng,
                                           const CouplingHook* hook) {
  auto& D = docs_.at(tok.doc);
  std::uint32_t w = D.symbols.at(tok.leaf).at(tok.pos);
  std::uint32_t old_id = D.topics[tok.leaf][tok.pos];
  auto old_dense_opt = dense_of(old_id);
  if (!old_dense_opt) throw ValidationError("gibbs move: dead topic on token");
  std::uint32_t old_dense = *old_dense_opt;

  std::uint32_t watch_rep = 0;
  std::vector<std::uint32_t> before;
  if (hook) {
    watch_rep = replica_for_doc(hook->watched_template, tok.doc);
    const NodeState& ws = node(hook->watched_template, watch_rep);
    before.reserve(hook->basis.size());
    for (auto id : hook->basis) {
      auto d = dense_of(id);
      before.push_back(d ? ws.customers(*d) : 0);
    }
  }

  std::uint32_t tn = graph_->leaves[tok.leaf].topic_node;
  std::uint32_t rep = replica_for_doc(tn, tok.doc);

  SeatPath un_t, un_s;
  unseat_topic(tn, rep, old_dense, rng, un_t);
  unseat_symbol(tok.leaf, old_dense, w, rng, un_s);
  refcount_[old_dense]--;

  std::uint32_t K = live_topics();
  bool open = !finite_topics();
  std::vector<double> wt(K + (open ? 1 : 0));
  for (std::uint32_t k = 0; k < K; ++k)
    wt[k] = topic_predictive(tn, rep, k) * symbol_predictive(tok.leaf, k, w);
  if (open) wt[K] = topic_predictive_new(tn, rep) / double(vocab_);
  std::uint32_t pick = sample_discrete(wt, rng);
  std::uint32_t new_dense = (open && pick == K) ? allocate_topic() : pick;

  SeatPath se_t, se_s;
  seat_topic(tn, rep, new_dense, rng, se_t);
  seat_symbol(tok.leaf, new_dense, w, rng, se_s);
  refcount_[new_dense]++;

  MoveStats st;
  st.old_topic = old_id;
  st.new_topic = live_ids_[new_dense];
  for (const auto& e : un_t) st.tables_removed += e.table;
  for (const auto& e : un_s) st.tables_removed += e.table;
  for (const auto& e : se_t) st.tables_created += e.table;
  for (const auto& e : se_s) st.tables_created += e.table;

  if (hook) {
    const NodeState& ws = node(hook->watched_template, watch_rep);
    std::vector<std::uint32_t> after;
    after.reserve(hook->basis.size());
    for (auto id : hook->basis) {
      auto d = dense_of(id);
      after.push_back(d ? ws.customers(*d) : 0);
    }
    if (after != before) {
      st.coupled = true;
      double la = hook->log_accept(watch_rep, before, after);
      bool accept = la >= 0.0 || std::log(uniform01(rng)) < la;
      if (!accept) {
        refcount_[new_dense]--;
        undo_path(se_s);
        undo_path(se_t);
        replay_path(un_s);
        replay_path(un_t);
        refcount_[old_dense]++;
        st.accepted = false;
        return st;  // a freshly allocated topic stays empty until compaction
      }
      if (hook->committed) hook->committed(watch_rep, after);
    }
  }

  D.topics[tok.leaf][tok.pos] = live_ids_[new_dense];
  return st;
}

SweepStats ChainState::full_sweep(Rng& rng, const CouplingHook* hook) {
  if (!initialized_) throw ValidationError("full_sweep: chain not initialized");
  SweepStats stats;
  for (std::uint32_t m = 0; m < docs_.size(); ++m) {
    for (std::uint32_t l = 0; l < graph_->leaves.size(); ++l) {
      for (std::uint32_t p = 0; p < docs_[m].symbols[l].size(); ++p) {
        MoveStats mv = gibbs_resample_token({m, l, p}, rng, hook);
        stats.tables_created += mv.tables_created;
        stats.tables_removed += mv.tables_removed;
        if (mv.coupled) {
          stats.coupling_proposals++;
          if (!mv.accepted) stats.coupling_rejections++;
        }
      }
    }
  }
  compact_topics();
  stats.joint_ll = joint_log_lik();
  stats.live_topics = live_topics();
  return stats;
}

double ChainState::joint_log_lik() const {
  double ll = 0.0;
  for (std::uint32_t t = 0; t < graph_->nodes.size(); ++t) {
    const auto& nd = graph_->nodes[t];
    for (std::uint32_t r = 0; r < states_[t].size(); ++r) {
      const NodeState& s = states_[t][r];
      ll += seating_log_prob(s);
      if (nd.parents.empty()) {
        // Each root table draws its dish from the base measure.
        switch (nd.spec.base) {
          case BaseKind::TopicUnbounded:
            break;  // atom labels carry no likelihood weight
          case BaseKind::TopicFinite:
          case BaseKind::Vocabulary:
            ll += double(s.total_tables()) * std::log(1.0 / double(nd.spec.base_size));
            break;
          case BaseKind::Parents:
            break;
        }
      } else if (nd.parents.size() > 1) {
        const auto& rows = tsplit_[t][r];
        for (const auto& row : rows)
          for (std::uint32_t j = 0; j < row.size(); ++j)
            if (row[j] > 0) ll += double(row[j]) * std::log(nd.parents[j].weight);
      }
    }
  }
  return ll;
}

void ChainState::compact_topics() {
  if (finite_topics()) return;
  std::uint32_t K = live_topics();
  // Uniform slot sizing so swap-removal keeps dense indices aligned.
  for (std::uint32_t t = 0; t < graph_->nodes.size(); ++t) {
    if (!graph_->nodes[t].topic_space) continue;
    for (std::uint32_t r = 0; r < states_[t].size(); ++r) {
      states_[t][r].ensure_slots(K);
      if (multi_parent(t) && !tsplit_[t][r].empty())
        tsplit_[t][r].resize(K, std::vector<std::uint32_t>(graph_->nodes[t].parents.size(), 0));
    }
  }
  for (std::uint32_t i = K; i-- > 0;) {
    if (refcount_[i] != 0) continue;
    for (std::uint32_t t = 0; t < graph_->nodes.size(); ++t) {
      const auto& nd = graph_->nodes[t];
      if (nd.spec.plate == PlateKind::PerTopic) {
        if (!states_[t][i].empty())
          throw ValidationError("compact_topics: dead topic with live symbol counts");
        states_[t][i] = std::move(states_[t].back());
        states_[t].pop_back();
        tsplit_[t][i] = std::move(tsplit_[t].back());
        tsplit_[t].pop_back();
      } else if (nd.topic_space) {
        for (std::uint32_t r = 0; r < states_[t].size(); ++r) {
          if (states_[t][r].customers(i) != 0)
            throw ValidationError("compact_topics: dead topic with live topic counts");
          states_[t][r].swap_remove_slot(i);
          if (!tsplit_[t][r].empty()) {
            tsplit_[t][r][i] = std::move(tsplit_[t][r].back());
            tsplit_[t][r].pop_back();
          }
        }
      }
    }
    id2dense_.erase(live_ids_[i]);
    live_ids_[i] = live_ids_.back();
    live_ids_.pop_back();
    refcount_[i] = refcount_.back();
    refcount_.pop_back();
    if (i < live_ids_.size()) id2dense_[live_ids_[i]] = i;
  }
}

void ChainState::validate_consistency() const {
  std::uint32_t K = live_topics();
  if (live_ids_.size() != refcount_.size() || id2dense_.size() != live_ids_.size())
    throw ValidationError("consistency: topic registry shape");
  for (std::uint32_t i = 0; i < K; ++i)
    if (id2dense_.at(live_ids_[i]) != i) throw ValidationError("consistency: registry mapping");

  // Expected customers per instance slot: leaf tokens plus child tables.
  std::vector<std::vector<std::vector<std::uint64_t>>> expect(graph_->nodes.size());
  for (std::uint32_t t = 0; t < graph_->nodes.size(); ++t) {
    std::uint32_t width = graph_->nodes[t].topic_space ? K : vocab_;
    expect[t].assign(states_[t].size(), std::vector<std::uint64_t>(width, 0));
  }
  std::vector<std::uint64_t> token_topics(K, 0);
  for (std::uint32_t m = 0; m < docs_.size(); ++m) {
    for (std::uint32_t l = 0; l < graph_->leaves.size(); ++l) {
      const auto& leaf = graph_->leaves[l];
      std::uint32_t rep = docs_[m].symbols[l].empty() ? 0 : replica_for_doc(leaf.topic_node, m);
      for (std::uint32_t p = 0; p < docs_[m].symbols[l].size(); ++p) {
        auto d = dense_of(docs_[m].topics[l][p]);
        if (!d) throw ValidationError("consistency: token holds a dead topic");
        expect[leaf.topic_node][rep][*d]++;
        expect[leaf.symbol_node][*d][docs_[m].symbols[l][p]]++;
        token_topics[*d]++;
      }
    }
  }
  for (std::uint32_t i = 0; i < K; ++i)
    if (token_topics[i] != refcount_[i]) throw ValidationError("consistency: topic refcount");

  for (std::uint32_t t = 0; t < graph_->nodes.size(); ++t) {
    const auto& nd = graph_->nodes[t];
    if (nd.parents.empty()) continue;
    for (std::uint32_t r = 0; r < states_[t].size(); ++r) {
      const NodeState& s = states_[t][r];
      std::uint32_t width = nd.topic_space ? K : vocab_;
      for (std::uint32_t k = 0; k < width; ++k) {
        std::uint32_t tables = s.tables(k);
        if (nd.parents.size() > 1) {
          std::uint64_t split_sum = 0;
          const auto& rows = tsplit_[t][r];
          for (std::uint32_t j = 0; j < nd.parents.size(); ++j) {
            std::uint32_t c = k < rows.size() ? rows[k][j] : 0;
            split_sum += c;
            expect[nd.parents[j].node][parent_replica(t, r, nd.parents[j].node)][k] += c;
          }
          if (split_sum != tables)
            throw ValidationError("consistency: table attribution does not sum to tables");
        } else if (tables > 0) {
          expect[nd.parents[0].node][parent_replica(t, r, nd.parents[0].node)][k] += tables;
        }
      }
    }
  }

  for (std::uint32_t t = 0; t < graph_->nodes.size(); ++t) {
    for (std::uint32_t r = 0; r < states_[t].size(); ++r) {
      const NodeState& s = states_[t][r];
      std::uint64_t sum_n = 0, sum_t = 0;
      std::uint32_t width = std::max<std::uint32_t>(s.slots(),
                                                    std::uint32_t(expect[t][r].size()));
      for (std::uint32_t k = 0; k < width; ++k) {
        std::uint32_t n = s.customers(k), tb = s.tables(k);
        std::uint64_t e = k < expect[t][r].size() ? expect[t][r][k] : 0;
        if (n != e) throw ValidationError("consistency: customer count mismatch");
        if (tb > n || (n > 0) != (tb > 0))
          throw ValidationError("consistency: table count invariant");
        sum_n += n;
        sum_t += tb;
      }
      if (sum_n != s.total_customers() || sum_t != s.total_tables())
        throw ValidationError("consistency: totals out of sync");
    }
  }
}

double ChainState::resample_group_concentration(const std::string& group,
                                                const ConcentrationPrior& prior, Rng& rng,
                                                int slice_iterations) {
  auto it = group_index_.find(group);
  if (it == group_index_.end()) throw ValidationError("unknown hyper group: " + group);
  Group& g = groups_[it->second];
  std::vector<NodeState*> nodes;
  for (auto t : g.templates)
    for (auto& s : states_[t]) nodes.push_back(&s);
  double b = sample_concentration(std::span<NodeState* const>(nodes.data(), nodes.size()),
                                  prior, rng, slice_iterations);
  g.concentration = b;
  return b;
}

double ChainState::group_concentration(const std::string& group) const {
  auto it = group_index_.find(group);
  if (it == group_index_.end()) throw ValidationError("unknown hyper group: " + group);
  return groups_[it->second].concentration;
}

std::vector<std::string> ChainState::hyper_group_names() const {
  std::vector<std::string> out;
  out.reserve(groups_.size());
  for (const auto& g : groups_) out.push_back(g.name);
  return out;
}

ChainArchive ChainState::dump() const {
  ChainArchive a;
  a.live_topic_ids = live_ids_;
  a.next_topic_id = next_id_;
  for (const auto& g : groups_) a.group_concentration[g.name] = g.concentration;
  a.counts.resize(states_.size());
  a.tsplit = tsplit_;
  for (std::uint32_t t = 0; t < states_.size(); ++t) {
    a.counts[t].reserve(states_[t].size());
    for (const auto& s : states_[t]) {
      std::vector<std::uint32_t> n(s.slots()), tb(s.slots());
      for (std::uint32_t k = 0; k < s.slots(); ++k) {
        n[k] = s.customers(k);
        tb[k] = s.tables(k);
      }
      a.counts[t].emplace_back(std::move(n), std::move(tb));
    }
  }
  a.docs = docs_;
  return a;
}

void ChainState::restore(const ChainArchive& a) {
  if (a.counts.size() != graph_->nodes.size() || a.tsplit.size() != graph_->nodes.size())
    throw DataError("restore: template count mismatch");
  if (a.docs.size() != docs_.size()) throw DataError("restore: document count mismatch");
  if (finite_topics()) {
    if (a.live_topic_ids.size() != graph_->truncation)
      throw DataError("restore: finite topic registry mismatch");
  }

  live_ids_ = a.live_topic_ids;
  next_id_ = a.next_topic_id;
  id2dense_.clear();
  for (std::uint32_t i = 0; i < live_ids_.size(); ++i) {
    if (!id2dense_.emplace(live_ids_[i], i).second)
      throw DataError("restore: duplicate topic id");
    if (live_ids_[i] >= next_id_) throw DataError("restore: topic id beyond allocator");
  }

  for (const auto& [name, b] : a.group_concentration) {
    auto it = group_index_.find(name);
    if (it == group_index_.end()) throw DataError("restore: unknown hyper group " + name);
    groups_[it->second].concentration = b;
  }
  for (const auto& g : groups_)
    if (!a.group_concentration.count(g.name))
      throw DataError("restore: missing hyper group " + g.name);

  docs_ = a.docs;
  refcount_.assign(live_ids_.size(), 0);
  for (std::uint32_t m = 0; m < docs_.size(); ++m) {
    auto& d = docs_[m];
    if (d.symbols.size() != graph_->leaves.size() || d.topics.size() != graph_->leaves.size())
      throw DataError("restore: document stream shape");
    for (std::uint32_t l = 0; l < d.symbols.size(); ++l) {
      if (d.symbols[l].size() != d.topics[l].size())
        throw DataError("restore: token/topic length mismatch");
      for (std::uint32_t p = 0; p < d.topics[l].size(); ++p) {
        auto dd = dense_of(d.topics[l][p]);
        if (!dd) throw DataError("restore: token holds unknown topic");
        refcount_[*dd]++;
      }
    }
  }

  for (std::uint32_t t = 0; t < graph_->nodes.size(); ++t) {
    const auto& nd = graph_->nodes[t];
    std::uint32_t reps;
    switch (nd.spec.plate) {
      case PlateKind::Global: reps = 1; break;
      case PlateKind::PerAuthor: reps = authors_; break;
      case PlateKind::PerDocument: reps = std::uint32_t(docs_.size()); break;
      case PlateKind::PerTopic: reps = live_topics(); break;
      default: reps = 0; break;
    }
    if (a.counts[t].size() != reps || a.tsplit[t].size() != reps)
      throw DataError("restore: replica count mismatch");
    const auto& g = groups_[group_index_.at(nd.spec.hyper_group)];
    PdpHyper h = graph_->spec.hyper_groups.at(nd.spec.hyper_group);
    h.concentration = g.concentration;
    states_[t].clear();
    for (std::uint32_t r = 0; r < reps; ++r) {
      NodeState s(h, g.cache);
      s.set_counts(a.counts[t][r].first, a.counts[t][r].second);
      states_[t].push_back(std::move(s));
    }
    tsplit_[t] = a.tsplit[t];
    for (const auto& rows : tsplit_[t])
      for (const auto& row : rows)
        if (!row.empty() && row.size() != nd.parents.size())
          throw DataError("restore: table attribution width mismatch");
  }

  initialized_ = true;
  try {
    validate_consistency();
  } catch (const ValidationError& e) {
    throw DataError(std::string("restore: state rejected: ") + e.what());
  }
}

std::vector<DocTokens> empty_docs(const CompiledGraph& graph, std::uint32_t n_docs,
                                  std::uint32_t n_authors,
                                  const std::vector<std::uint32_t>& words_per_doc,
                                  const std::vector<std::uint32_t>& tags_per_doc) {
  if (words_per_doc.size() != n_docs || (!tags_per_doc.empty() && tags_per_doc.size() != n_docs))
    throw ValidationError("empty_docs: per-document lengths must match n_docs");
  std::vector<DocTokens> docs(n_docs);
  for (std::uint32_t m = 0; m < n_docs; ++m) {
    docs[m].author = n_authors == 0 ? kNoAuthor : m % n_authors;
    docs[m].symbols.resize(graph.leaves.size());
    docs[m].topics.resize(graph.leaves.size());
    for (std::uint32_t l = 0; l < graph.leaves.size(); ++l) {
      std::uint32_t len = 0;
      if (graph.leaves[l].stream == StreamKind::Words)
        len = words_per_doc[m];
      else
        len = tags_per_doc.empty() ? 0 : tags_per_doc[m];
      docs[m].symbols[l].assign(len, 0);
      docs[m].topics[l].assign(len, 0);
    }
  }
  return docs;
}

}  // namespace pdpnet
