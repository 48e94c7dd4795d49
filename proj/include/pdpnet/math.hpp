#pragma once

#include <cstdint>
#include <vector>

#include "pdpnet/common.hpp"

namespace pdpnet {

// log(exp(a) + exp(b)) with -inf guards.
double log_add(double a, double b);

// log of the rising factorial (x)_n = x (x+1) ... (x+n-1), x > 0.
double log_rising(double x, std::uint64_t n);

// log of prod_{i=0}^{T-1} (b + i*a): the generalized rising factorial (b|a)_T.
// Handles a == 0 (returns T log b) and uses lgamma for large T.
double log_rising_step(double b, double a, std::uint64_t T);

// Memoized table of generalized Stirling numbers S^n_t(a) in log space,
// following the recurrence S^{n+1}_t = S^n_{t-1} + (n - t a) S^n_t.
// One instance per discount value; rows grow on demand.
class StirlingCache {
 public:
  explicit StirlingCache(double discount);

  double discount() const { return a_; }

  // log S^n_t(a); -inf outside the support (t == 0 && n > 0, or t > n).
  double log_s(std::uint64_t n, std::uint64_t t);

  // Probability that removing a uniformly random customer also removes a
  // table, given multiplicities (n, t):  S^{n-1}_{t-1} / S^n_t.
  double removal_probability(std::uint64_t n, std::uint64_t t);

 private:
  void grow(std::uint64_t n);

  double a_;
  std::vector<std::vector<double>> rows_;  // rows_[n][t], t in [0, n]
};

// Regularized lower incomplete gamma P(s, x); used by the chi-square CDF.
double regularized_gamma_p(double s, double x);

// Chi-square upper-tail p-value with k degrees of freedom.
double chi_square_tail(double stat, int dof);

// Standard normal upper-tail probability.
double normal_tail(double z);

}  // namespace pdpnet
