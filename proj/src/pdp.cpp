#include "pdpnet/pdp.hpp"

#include <cmath>
#include <limits>

namespace pdpnet {

void PdpHyper::validate() const {
  if (!(discount >= 0.0 && discount < 1.0))
    throw ValidationError("PdpHyper: discount must lie in [0, 1)");
  if (!(concentration > -discount))
    throw ValidationError("PdpHyper: concentration must exceed -discount");
}

NodeState::NodeState(PdpHyper hyper, std::shared_ptr<StirlingCache> cache)
    : hyper_(hyper), cache_(std::move(cache)) {
  hyper_.validate();
  if (!cache_) cache_ = std::make_shared<StirlingCache>(hyper_.discount);
  if (cache_->discount() != hyper_.discount)
    throw ValidationError("NodeState: cache discount mismatch");
}

void NodeState::set_concentration(double b) {
  PdpHyper h{hyper_.discount, b};
  h.validate();
  hyper_ = h;
}

void NodeState::ensure_slots(std::uint32_t k) {
  if (k > n_.size()) {
    n_.resize(k, 0);
    t_.resize(k, 0);
  }
}

void NodeState::swap_remove_slot(std::uint32_t i) {
  if (i >= n_.size()) throw ValidationError("swap_remove_slot: index out of range");
  n_[i] = n_.back();
  t_[i] = t_.back();
  n_.pop_back();
  t_.pop_back();
}

void NodeState::set_counts(std::vector<std::uint32_t> n, std::vector<std::uint32_t> t) {
  if (n.size() != t.size()) throw ValidationError("set_counts: n/t size mismatch");
  std::uint64_t sum_n = 0, sum_t = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (t[i] > n[i] || (n[i] > 0) != (t[i] > 0))
      throw ValidationError("set_counts: invalid slot counts");
    sum_n += n[i];
    sum_t += t[i];
  }
  n_ = std::move(n);
  t_ = std::move(t);
  total_n_ = sum_n;
  total_t_ = sum_t;
}

double predictive_one(const NodeState& node, std::uint32_t k, double base) {
  const auto& h = node.hyper_;
  if (node.total_n_ == 0) return base;
  double n_k = node.customers(k), t_k = node.tables(k);
  double own = std::max(0.0, n_k - h.discount * t_k);
  double spill = h.concentration + h.discount * double(node.total_t_);
  return (own + spill * base) / (double(node.total_n_) + h.concentration);
}

double predictive_new(const NodeState& node) {
  const auto& h = node.hyper_;
  if (node.total_n_ == 0) return 1.0;
  return (h.concentration + h.discount * double(node.total_t_)) /
         (double(node.total_n_) + h.concentration);
}

Eigen::VectorXd predictive(const NodeState& node, const Eigen::VectorXd& parent_probs) {
  auto k = node.slots();
  if (parent_probs.size() != k && parent_probs.size() != k + 1)
    throw ValidationError("predictive: parent probability dimension mismatch");
  Eigen::VectorXd out(parent_probs.size());
  for (std::uint32_t i = 0; i < k; ++i) out[i] = predictive_one(node, i, parent_probs[i]);
  if (parent_probs.size() == k + 1) out[k] = predictive_new(node) * parent_probs[k];
  return out;
}

double new_table_probability(const NodeState& node, std::uint32_t k, double base) {
  const auto& h = node.hyper_;
  if (node.customers(k) == 0) return 1.0;
  double w_new = (h.concentration + h.discount * double(node.total_t_)) * base;
  double w_old = std::max(0.0, double(node.customers(k)) - h.discount * double(node.tables(k)));
  double total = w_new + w_old;
  if (total <= 0.0) throw NumericalError("new_table_probability: zero total mass");
  return w_new / total;
}

double table_removal_probability(const NodeState& node, std::uint32_t k) {
  if (node.customers(k) == 0) throw ValidationError("table_removal_probability: empty topic");
  return node.cache_->removal_probability(node.customers(k), node.tables(k));
}

TableDelta add_customer(NodeState& node, std::uint32_t k, double parent_new_topic_prob,
                        Rng& rng) {
  node.ensure_slots(k + 1);
  bool create = node.n_[k] == 0 ||
                uniform01(rng) < new_table_probability(node, k, parent_new_topic_prob);
  add_customer_forced(node, k, create);
  return TableDelta{k, create};
}

void add_customer_forced(NodeState& node, std::uint32_t k, bool create_table) {
  node.ensure_slots(k + 1);
  node.n_[k] += 1;
  node.total_n_ += 1;
  if (create_table) {
    node.t_[k] += 1;
    node.total_t_ += 1;
  }
}

TableDelta remove_customer(NodeState& node, std::uint32_t k, Rng& rng) {
  if (node.customers(k) == 0) throw ValidationError("remove_customer: empty topic");
  bool removed = uniform01(rng) < table_removal_probability(node, k);
  remove_customer_forced(node, k, removed);
  return TableDelta{k, removed};
}

void remove_customer_forced(NodeState& node, std::uint32_t k, bool remove_table) {
  if (node.customers(k) == 0) throw ValidationError("remove_customer: empty topic");
  node.n_[k] -= 1;
  node.total_n_ -= 1;
  if (remove_table) {
    if (node.t_[k] == 0) throw ValidationError("remove_customer: no table to remove");
    node.t_[k] -= 1;
    node.total_t_ -= 1;
  }
  if (node.n_[k] < node.t_[k])
    throw ValidationError("remove_customer: table count exceeds customer count");
}

namespace {

// log [ (b|a)_T / (b)_N ] arranged as prod_{t=1}^{T-1}(b + t a) / (b+1)_{N-1}
// so every factor stays positive for any valid b > -a.
double log_factorial_ratio(double b, double a, std::uint64_t T, std::uint64_t N) {
  if (N == 0) return 0.0;
  double num = 0.0;
  if (T >= 2) num = log_rising_step(b + a, a, T - 1);
  return num - log_rising(b + 1.0, N - 1);
}

}  // namespace

double seating_log_prob(const NodeState& node) {
  const auto& h = node.hyper_;
  double ll = log_factorial_ratio(h.concentration, h.discount, node.total_t_, node.total_n_);
  for (std::size_t k = 0; k < node.n_.size(); ++k)
    if (node.n_[k] > 0) ll += node.cache_->log_s(node.n_[k], node.t_[k]);
  return ll;
}

double concentration_log_lik(const NodeState& node, double b) {
  const auto& h = node.hyper_;
  if (node.total_n_ == 0) return 0.0;
  return log_factorial_ratio(b, h.discount, node.total_t_, node.total_n_);
}

double sample_concentration(std::span<NodeState* const> nodes, const ConcentrationPrior& prior,
                            Rng& rng, int slice_iterations) {
  if (prior.shape <= 0.0 || prior.rate <= 0.0)
    throw ValidationError("sample_concentration: prior parameters must be positive");

  std::vector<NodeState*> informative;
  for (NodeState* n : nodes)
    if (n && !n->empty()) informative.push_back(n);

  double b;
  if (informative.empty()) {
    b = std::gamma_distribution<double>(prior.shape, 1.0 / prior.rate)(rng);
    if (b <= 0.0) b = std::numeric_limits<double>::min();
  } else {
    // Slice sampling on u = log b; the Jacobian adds +u to the log density.
    auto log_post = [&](double u) {
      double bb = std::exp(u);
      double lp = prior.shape * u - prior.rate * bb;
      for (NodeState* n : informative) lp += concentration_log_lik(*n, bb);
      return lp;
    };
    double u = std::log(std::max(informative.front()->hyper().concentration, 1e-8));
    const double w = 2.0;
    const int max_steps = 64;
    for (int it = 0; it < slice_iterations; ++it) {
      double y = log_post(u) + std::log(uniform01(rng) + 1e-300);
      double lo = u - w * uniform01(rng);
      double hi = lo + w;
      for (int s = 0; s < max_steps && log_post(lo) > y; ++s) lo -= w;
      for (int s = 0; s < max_steps && log_post(hi) > y; ++s) hi += w;
      for (;;) {
        double cand = lo + uniform01(rng) * (hi - lo);
        if (log_post(cand) > y) {
          u = cand;
          break;
        }
        (cand < u ? lo : hi) = cand;
      }
    }
    b = std::exp(u);
  }

  for (NodeState* n : nodes)
    if (n) n->set_concentration(b);
  return b;
}

}  // namespace pdpnet
