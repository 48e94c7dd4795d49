#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "pdpnet/common.hpp"

namespace pdpnet {

enum class KernelKind { Cosine, Original };

struct KernelParams {
  double signal = 1.0;      // s
  double lengthscale = 1.0; // l, squared-exponential kernel only
  double noise = 1.0;       // sigma, additive diagonal sigma^2
  double jitter = 1e-6;
  void validate() const;
};

struct AuthorPair {
  std::uint32_t a = 0, b = 0;  // unordered, stored a < b
};

// Unordered author pairs with binary link observations.
struct PairSet {
  std::vector<AuthorPair> pairs;
  std::vector<std::uint8_t> x;  // 1 = linked
  void validate(std::uint32_t n_authors) const;
  std::size_t size() const { return pairs.size(); }
};

// All observed links plus an equal-size uniform sample of non-links
// (or every pair when full_pairing is set).
PairSet make_pair_set(const std::vector<AuthorPair>& links, std::uint32_t n_authors,
                      bool full_pairing, Rng& rng);

// Pair-to-pair kernels over author embedding vectors.
double cosine_kernel(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                     const Eigen::VectorXd& u2, const Eigen::VectorXd& v2,
                     const KernelParams& p);
double original_kernel(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                       const Eigen::VectorXd& u2, const Eigen::VectorXd& v2,
                       const KernelParams& p);
double pair_kernel(KernelKind kind, const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                   const Eigen::VectorXd& u2, const Eigen::VectorXd& v2,
                   const KernelParams& p);

// Rows are per-author topic counts; returns rows smoothed by +1/2 and
// normalized to the simplex.
Eigen::MatrixXd smoothed_embeddings(const Eigen::MatrixXd& counts);

// Bernoulli-logistic log-likelihood of latent values against link labels.
double network_loglik(const Eigen::VectorXd& f, const std::vector<std::uint8_t>& x);

struct MhStats {
  long proposals = 0;
  long accepts = 0;
  double rate() const { return proposals == 0 ? 0.0 : double(accepts) / double(proposals); }
};

// Latent link function over a pair set: prior N(0, K + sigma^2 I) with the
// Gram matrix built from current author embeddings.
class GpState {
 public:
  GpState(KernelKind kind, KernelParams params, PairSet pairs);

  KernelKind kind() const { return kind_; }
  const KernelParams& params() const { return params_; }
  const PairSet& pairs() const { return pairs_; }
  bool factor_valid() const { return factor_valid_; }
  double applied_jitter() const { return applied_jitter_; }
  const Eigen::MatrixXd& covariance() const;
  const Eigen::MatrixXd& embeddings() const;

  // Rebuild the Gram matrix and its Cholesky factor from per-author
  // embedding rows (jitter escalates x10 until the factorization succeeds).
  void set_embeddings(const Eigen::MatrixXd& emb);

  const Eigen::VectorXd& f() const { return f_; }
  void set_f(const Eigen::VectorXd& f);

  double loglik() const;

  // Preconditioned Crank-Nicolson sweep: f' = sqrt(1-eps^2) f + eps g with
  // g ~ N(0, K + sigma^2 I); accepts on the likelihood ratio alone.
  // constant_likelihood pins that ratio to zero (every proposal accepted
  // through the same code path), which makes the sweep sample the prior
  // exactly; used by the correctness harness to test invariance.
  MhStats mh_sweep_f(double eps, int inner_steps, Rng& rng, bool constant_likelihood = false);

  // Gaussian prior log-density ratio of f when author i's embedding row is
  // replaced: log N(f; 0, C_new) - log N(f; 0, C_old). Returns -inf when the
  // proposed covariance cannot be factorized.
  double nu_move_log_ratio(std::uint32_t author, const Eigen::VectorXd& new_embedding);
  // Apply the replacement evaluated by the last matching nu_move_log_ratio
  // (or rebuild from scratch when no evaluation matches).
  void commit_nu_move(std::uint32_t author, const Eigen::VectorXd& new_embedding);

  // Posterior-mean extension of f to query pairs: K_* C^{-1} f. Query pair
  // indices address rows of query_embeddings; the training side keeps the
  // embeddings the Gram was built from.
  Eigen::VectorXd conditional_mean(const std::vector<AuthorPair>& query,
                                   const Eigen::MatrixXd& query_embeddings) const;

 private:
  void require_factor() const;
  Eigen::MatrixXd build_cov(const Eigen::MatrixXd& emb) const;
  void update_cov_for_author(Eigen::MatrixXd& cov, const Eigen::MatrixXd& emb,
                             std::uint32_t author) const;
  double gaussian_logdens(const Eigen::VectorXd& f, const Eigen::LLT<Eigen::MatrixXd>& llt,
                          double logdet) const;

  KernelKind kind_;
  KernelParams params_;
  PairSet pairs_;
  Eigen::MatrixXd emb_;
  Eigen::MatrixXd cov_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double logdet_ = 0.0;
  double applied_jitter_ = 0.0;
  bool factor_valid_ = false;
  Eigen::VectorXd f_;

  // cache of the last nu-move evaluation so commit reuses its factorization
  struct PendingMove {
    bool valid = false;
    std::uint32_t author = 0;
    Eigen::VectorXd embedding;
    Eigen::MatrixXd cov;
    Eigen::LLT<Eigen::MatrixXd> llt;
    double logdet = 0.0, jitter = 0.0;
  };
  PendingMove pending_;
};

// Lower-triangular factor of base + jitter I with x10 escalation up to
// max_jitter; returns the jitter actually applied, throws NumericalError
// (reporting the minimum eigenvalue) when every attempt fails.
double factor_spd(const Eigen::MatrixXd& base, double initial_jitter,
                  Eigen::LLT<Eigen::MatrixXd>& llt, double max_jitter = 1e-2);

}  // namespace pdpnet
