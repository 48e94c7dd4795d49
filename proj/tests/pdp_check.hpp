#pragma once

// Compares the library's collapsed predictive / table-removal machinery
// against the enumeration oracle on a two-level hierarchy whose root draws
// from a uniform base over K topics. Both levels share one (a, b).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "oracle.hpp"
#include "pdpnet/pdp.hpp"

namespace pdp_check {

struct Result {
  double max_err = 0.0;
  long comparisons = 0;
  void absorb(double err) {
    max_err = std::max(max_err, std::abs(err));
    comparisons++;
  }
  void merge(const Result& o) {
    max_err = std::max(max_err, o.max_err);
    comparisons += o.comparisons;
  }
};

// Library nodes for one count signature.
struct Nodes {
  pdpnet::NodeState child, root;
};

inline Nodes make_nodes(const oracle::Sig& sig, double a, double b) {
  auto cache = std::make_shared<pdpnet::StirlingCache>(a);
  Nodes n{pdpnet::NodeState(pdpnet::PdpHyper{a, b}, cache),
          pdpnet::NodeState(pdpnet::PdpHyper{a, b}, cache)};
  n.child.set_counts(sig.n_child, sig.t_child);
  n.root.set_counts(sig.t_child, sig.t_root);  // root customers are child tables
  return n;
}

inline std::vector<double> formula_predictive(const oracle::Sig& sig, double a, double b,
                                              std::uint32_t K) {
  Nodes n = make_nodes(sig, a, b);
  std::vector<double> p(K);
  for (std::uint32_t k = 0; k < K; ++k)
    p[k] = pdpnet::predictive_one(n.child, k, pdpnet::predictive_one(n.root, k, 1.0 / K));
  return p;
}

// Post-removal signature distribution for removing one customer of topic c,
// composed from the library's Stirling-ratio removal probabilities.
struct Branch {
  oracle::Sig sig;
  double w = 0.0;
};

inline std::vector<Branch> removal_branches(const oracle::Sig& sig, std::uint32_t c, double a,
                                            double b) {
  Nodes n = make_nodes(sig, a, b);
  double rho_c = pdpnet::table_removal_probability(n.child, c);
  std::vector<Branch> out;
  if (rho_c < 1.0) {
    Branch keep{sig, 1.0 - rho_c};
    keep.sig.n_child[c]--;
    out.push_back(std::move(keep));
  }
  if (rho_c > 0.0) {
    double rho_r = pdpnet::table_removal_probability(n.root, c);
    if (rho_r < 1.0) {
      Branch b1{sig, rho_c * (1.0 - rho_r)};
      b1.sig.n_child[c]--;
      b1.sig.t_child[c]--;
      out.push_back(std::move(b1));
    }
    if (rho_r > 0.0) {
      Branch b2{sig, rho_c * rho_r};
      b2.sig.n_child[c]--;
      b2.sig.t_child[c]--;
      b2.sig.t_root[c]--;
      out.push_back(std::move(b2));
    }
  }
  return out;
}

// (a) For every count signature reachable with up to max_n customers, the
// closed-form predictive must equal explicit per-table sums on an arrangement
// with those counts.
inline Result check_micro_identity(std::uint32_t K, double a, double b, std::uint32_t max_n) {
  Result res;
  oracle::Hyper h{a, b};
  std::map<oracle::Sig, oracle::Micro> examples;
  for (std::uint32_t n = 1; n <= max_n; ++n)
    for (const auto& z : oracle::all_sequences(K, n))
      examples.merge(oracle::signature_examples(z, K, h, h));
  for (const auto& [sig, micro] : examples) {
    auto brute = oracle::micro_predictive(micro, K, h, h);
    auto formula = formula_predictive(sig, a, b, K);
    for (std::uint32_t k = 0; k < K; ++k) res.absorb(formula[k] - brute[k]);
  }
  return res;
}

// (b) Marginal next-topic predictive: averaging the closed form over the
// oracle's signature posterior must reproduce p(z + k) / p(z).
// (c) Gibbs marginal: removal branches followed by the closed-form predictive,
// averaged the same way, must reproduce p(z_0 = k | z_{1:}).
inline Result check_sequences(std::uint32_t K, double a, double b, std::uint32_t max_n) {
  Result res;
  oracle::Hyper h{a, b};
  for (std::uint32_t n = 1; n <= max_n; ++n) {
    for (const auto& z : oracle::all_sequences(K, n)) {
      auto post = oracle::signature_posterior(z, K, h, h);
      double pz = 0.0;
      for (const auto& [sig, p] : post) pz += p;

      std::vector<double> pred_ours(K, 0.0), gibbs_ours(K, 0.0);
      for (const auto& [sig, p] : post) {
        auto formula = formula_predictive(sig, a, b, K);
        for (std::uint32_t k = 0; k < K; ++k) pred_ours[k] += p / pz * formula[k];
        for (const auto& br : removal_branches(sig, z[0], a, b)) {
          auto bp = formula_predictive(br.sig, a, b, K);
          for (std::uint32_t k = 0; k < K; ++k) gibbs_ours[k] += p / pz * br.w * bp[k];
        }
      }

      std::vector<double> marg(K, 0.0);
      double msum = 0.0;
      for (std::uint32_t k = 0; k < K; ++k) {
        auto zk = z;
        zk.push_back(k);
        pred_ours[k] -= oracle::sequence_prob(zk, K, h, h) / pz;
        res.absorb(pred_ours[k]);
        auto zi = z;
        zi[0] = k;
        marg[k] = oracle::sequence_prob(zi, K, h, h);
        msum += marg[k];
      }
      for (std::uint32_t k = 0; k < K; ++k) res.absorb(gibbs_ours[k] - marg[k] / msum);
    }
  }
  return res;
}

}  // namespace pdp_check
