#include "pdpnet/gp.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace pdpnet {

namespace {
constexpr double kPi = 3.14159265358979323846;

double cosine_sim(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw ValidationError("kernel: zero-norm embedding");
  return a.dot(b) / (na * nb);
}

double normal_draw(Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  return d(rng);
}
}  // namespace

void KernelParams::validate() const {
  if (!(signal > 0.0)) throw ValidationError("KernelParams: signal must be positive");
  if (!(lengthscale > 0.0)) throw ValidationError("KernelParams: lengthscale must be positive");
  if (!(noise >= 0.0)) throw ValidationError("KernelParams: noise must be nonnegative");
  if (!(jitter > 0.0)) throw ValidationError("KernelParams: jitter must be positive");
}

void PairSet::validate(std::uint32_t n_authors) const {
  if (pairs.size() != x.size()) throw ValidationError("PairSet: label count mismatch");
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  for (const auto& p : pairs) {
    if (p.a >= p.b) throw ValidationError("PairSet: pairs must be stored with a < b");
    if (p.b >= n_authors) throw ValidationError("PairSet: author index out of range");
    if (!seen.emplace(p.a, p.b).second) throw ValidationError("PairSet: duplicate pair");
  }
  for (auto v : x)
    if (v > 1) throw ValidationError("PairSet: labels must be 0/1");
}

PairSet make_pair_set(const std::vector<AuthorPair>& links, std::uint32_t n_authors,
                      bool full_pairing, Rng& rng) {
  if (n_authors < 2) throw ValidationError("make_pair_set: need at least two authors");
  std::set<std::pair<std::uint32_t, std::uint32_t>> link_set;
  for (const auto& l : links) {
    std::uint32_t a = std::min(l.a, l.b), b = std::max(l.a, l.b);
    if (a == b) throw ValidationError("make_pair_set: self-link");
    if (b >= n_authors) throw ValidationError("make_pair_set: author index out of range");
    link_set.emplace(a, b);
  }
  PairSet out;
  if (full_pairing) {
    for (std::uint32_t a = 0; a + 1 < n_authors; ++a)
      for (std::uint32_t b = a + 1; b < n_authors; ++b) {
        out.pairs.push_back({a, b});
        out.x.push_back(link_set.count({a, b}) ? 1 : 0);
      }
    return out;
  }
  for (const auto& [a, b] : link_set) {
    out.pairs.push_back({a, b});
    out.x.push_back(1);
  }
  std::vector<std::pair<std::uint32_t, std::uint32_t>> non_links;
  for (std::uint32_t a = 0; a + 1 < n_authors; ++a)
    for (std::uint32_t b = a + 1; b < n_authors; ++b)
      if (!link_set.count({a, b})) non_links.emplace_back(a, b);
  std::size_t want = std::min(link_set.size(), non_links.size());
  // partial Fisher-Yates draw of `want` non-links
  for (std::size_t i = 0; i < want; ++i) {
    std::size_t j = i + std::size_t(uniform01(rng) * double(non_links.size() - i));
    j = std::min(j, non_links.size() - 1);
    std::swap(non_links[i], non_links[j]);
    out.pairs.push_back({non_links[i].first, non_links[i].second});
    out.x.push_back(0);
  }
  return out;
}

double cosine_kernel(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                     const Eigen::VectorXd& u2, const Eigen::VectorXd& v2,
                     const KernelParams& p) {
  double s2 = p.signal * p.signal;
  return s2 *
         (cosine_sim(u, u2) * cosine_sim(v, v2) + cosine_sim(u, v2) * cosine_sim(v, u2)) / 2.0;
}

double original_kernel(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                       const Eigen::VectorXd& u2, const Eigen::VectorXd& v2,
                       const KernelParams& p) {
  double s2 = p.signal * p.signal;
  double two_l2 = 2.0 * p.lengthscale * p.lengthscale;
  double direct = (u - u2).squaredNorm() + (v - v2).squaredNorm();
  double crossed = (u - v2).squaredNorm() + (v - u2).squaredNorm();
  return s2 * (std::exp(-direct / two_l2) + std::exp(-crossed / two_l2)) / 2.0;
}

double pair_kernel(KernelKind kind, const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                   const Eigen::VectorXd& u2, const Eigen::VectorXd& v2,
                   const KernelParams& p) {
  return kind == KernelKind::Cosine ? cosine_kernel(u, v, u2, v2, p)
                                    : original_kernel(u, v, u2, v2, p);
}

Eigen::MatrixXd smoothed_embeddings(const Eigen::MatrixXd& counts) {
  Eigen::MatrixXd out = counts.array() + 0.5;
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) /= out.row(i).sum();
  return out;
}

double network_loglik(const Eigen::VectorXd& f, const std::vector<std::uint8_t>& x) {
  if (std::size_t(f.size()) != x.size()) throw ValidationError("network_loglik: length mismatch");
  double ll = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    // log sigma(z) = -log(1 + e^{-z}), evaluated stably
    double z = x[i] ? f[i] : -f[i];
    ll += z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
  }
  return ll;
}

double factor_spd(const Eigen::MatrixXd& base, double initial_jitter,
                  Eigen::LLT<Eigen::MatrixXd>& llt, double max_jitter) {
  double jitter = initial_jitter;
  while (true) {
    Eigen::MatrixXd m = base;
    m.diagonal().array() += jitter;
    llt.compute(m);
    if (llt.info() == Eigen::Success) return jitter;
    if (jitter >= max_jitter) break;
    jitter = std::min(jitter * 10.0, max_jitter);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(base, Eigen::EigenvaluesOnly);
  std::ostringstream msg;
  msg << "Gram factorization failed after jitter escalation to " << max_jitter
      << " (min eigenvalue " << es.eigenvalues().minCoeff() << ")";
  throw NumericalError(msg.str());
}

GpState::GpState(KernelKind kind, KernelParams params, PairSet pairs)
    : kind_(kind), params_(params), pairs_(std::move(pairs)) {
  params_.validate();
  if (pairs_.size() == 0) throw ValidationError("GpState: empty pair set");
  if (pairs_.pairs.size() != pairs_.x.size()) throw ValidationError("GpState: label mismatch");
  f_ = Eigen::VectorXd::Zero(Eigen::Index(pairs_.size()));
}

const Eigen::MatrixXd& GpState::covariance() const {
  require_factor();
  return cov_;
}

const Eigen::MatrixXd& GpState::embeddings() const {
  require_factor();
  return emb_;
}

void GpState::require_factor() const {
  if (!factor_valid_) throw ValidationError("GpState: Gram factor is stale; set embeddings first");
}

Eigen::MatrixXd GpState::build_cov(const Eigen::MatrixXd& emb) const {
  const Eigen::Index n = Eigen::Index(pairs_.size());
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    Eigen::VectorXd u = emb.row(Eigen::Index(pairs_.pairs[p].a));
    Eigen::VectorXd v = emb.row(Eigen::Index(pairs_.pairs[p].b));
    for (Eigen::Index q = p; q < n; ++q) {
      Eigen::VectorXd u2 = emb.row(Eigen::Index(pairs_.pairs[q].a));
      Eigen::VectorXd v2 = emb.row(Eigen::Index(pairs_.pairs[q].b));
      double k = pair_kernel(kind_, u, v, u2, v2, params_);
      cov(p, q) = k;
      cov(q, p) = k;
    }
  }
  cov.diagonal().array() += params_.noise * params_.noise;
  return cov;
}

void GpState::update_cov_for_author(Eigen::MatrixXd& cov, const Eigen::MatrixXd& emb,
                                    std::uint32_t author) const {
  const Eigen::Index n = Eigen::Index(pairs_.size());
  double sigma2 = params_.noise * params_.noise;
  for (Eigen::Index p = 0; p < n; ++p) {
    if (pairs_.pairs[p].a != author && pairs_.pairs[p].b != author) continue;
    Eigen::VectorXd u = emb.row(Eigen::Index(pairs_.pairs[p].a));
    Eigen::VectorXd v = emb.row(Eigen::Index(pairs_.pairs[p].b));
    for (Eigen::Index q = 0; q < n; ++q) {
      Eigen::VectorXd u2 = emb.row(Eigen::Index(pairs_.pairs[q].a));
      Eigen::VectorXd v2 = emb.row(Eigen::Index(pairs_.pairs[q].b));
      double k = pair_kernel(kind_, u, v, u2, v2, params_);
      cov(p, q) = k;
      cov(q, p) = k;
      if (p == q) cov(p, p) = k + sigma2;
    }
  }
}

void GpState::set_embeddings(const Eigen::MatrixXd& emb) {
  if (emb.rows() == 0 || emb.cols() == 0)
    throw ValidationError("GpState: embeddings must be non-empty");
  for (const auto& p : pairs_.pairs)
    if (Eigen::Index(p.b) >= emb.rows())
      throw ValidationError("GpState: embedding rows do not cover all pair authors");
  emb_ = emb;
  cov_ = build_cov(emb_);
  applied_jitter_ = factor_spd(cov_, params_.jitter, llt_);
  cov_.diagonal().array() += applied_jitter_;
  logdet_ = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  factor_valid_ = true;
  pending_.valid = false;
}

void GpState::set_f(const Eigen::VectorXd& f) {
  if (f.size() != Eigen::Index(pairs_.size()))
    throw ValidationError("GpState: latent vector length mismatch");
  f_ = f;
}

double GpState::loglik() const { return network_loglik(f_, pairs_.x); }

MhStats GpState::mh_sweep_f(double eps, int inner_steps, Rng& rng, bool constant_likelihood) {
  require_factor();
  if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("mh_sweep_f: step must lie in (0,1)");
  if (inner_steps < 1) throw ValidationError("mh_sweep_f: need at least one inner step");
  MhStats stats;
  const Eigen::Index n = f_.size();
  double keep = std::sqrt(1.0 - eps * eps);
  double cur_ll = loglik();
  for (int it = 0; it < inner_steps; ++it) {
    Eigen::VectorXd xi(n);
    for (Eigen::Index i = 0; i < n; ++i) xi[i] = normal_draw(rng);
    Eigen::VectorXd g = llt_.matrixL() * xi;
    Eigen::VectorXd prop = keep * f_ + eps * g;
    double prop_ll = constant_likelihood ? cur_ll : network_loglik(prop, pairs_.x);
    stats.proposals++;
    double la = prop_ll - cur_ll;
    if (la >= 0.0 || std::log(uniform01(rng)) < la) {
      f_ = prop;
      cur_ll = prop_ll;
      stats.accepts++;
    }
  }
  return stats;
}

double GpState::gaussian_logdens(const Eigen::VectorXd& f, const Eigen::LLT<Eigen::MatrixXd>& llt,
                                 double logdet) const {
  Eigen::VectorXd alpha = llt.solve(f);
  return -0.5 * f.dot(alpha) - 0.5 * logdet - 0.5 * double(f.size()) * std::log(2.0 * kPi);
}

double GpState::nu_move_log_ratio(std::uint32_t author, const Eigen::VectorXd& new_embedding) {
  require_factor();
  if (Eigen::Index(author) >= emb_.rows())
    throw ValidationError("nu_move_log_ratio: author out of range");
  if (new_embedding.size() != emb_.cols())
    throw ValidationError("nu_move_log_ratio: embedding dimension mismatch");
  bool touches = false;
  for (const auto& p : pairs_.pairs)
    if (p.a == author || p.b == author) {
      touches = true;
      break;
    }
  if (!touches) return 0.0;
  if ((new_embedding - emb_.row(Eigen::Index(author)).transpose()).cwiseAbs().maxCoeff() == 0.0)
    return 0.0;

  Eigen::MatrixXd emb_new = emb_;
  emb_new.row(Eigen::Index(author)) = new_embedding.transpose();
  Eigen::MatrixXd cov_new = cov_;
  cov_new.diagonal().array() -= applied_jitter_;  // back to K + sigma^2 I
  update_cov_for_author(cov_new, emb_new, author);
  Eigen::LLT<Eigen::MatrixXd> llt_new;
  double jit;
  try {
    jit = factor_spd(cov_new, params_.jitter, llt_new);
  } catch (const NumericalError&) {
    pending_.valid = false;
    return -std::numeric_limits<double>::infinity();
  }
  cov_new.diagonal().array() += jit;
  double logdet_new = 2.0 * llt_new.matrixLLT().diagonal().array().log().sum();
  double ratio = gaussian_logdens(f_, llt_new, logdet_new) - gaussian_logdens(f_, llt_, logdet_);

  pending_.valid = true;
  pending_.author = author;
  pending_.embedding = new_embedding;
  pending_.cov = std::move(cov_new);
  pending_.llt = std::move(llt_new);
  pending_.logdet = logdet_new;
  pending_.jitter = jit;
  return ratio;
}

void GpState::commit_nu_move(std::uint32_t author, const Eigen::VectorXd& new_embedding) {
  require_factor();
  if (pending_.valid && pending_.author == author &&
      pending_.embedding.size() == new_embedding.size() &&
      (pending_.embedding - new_embedding).cwiseAbs().maxCoeff() == 0.0) {
    emb_.row(Eigen::Index(author)) = new_embedding.transpose();
    cov_ = std::move(pending_.cov);
    llt_ = std::move(pending_.llt);
    logdet_ = pending_.logdet;
    applied_jitter_ = pending_.jitter;
    pending_.valid = false;
    return;
  }
  Eigen::MatrixXd emb_new = emb_;
  emb_new.row(Eigen::Index(author)) = new_embedding.transpose();
  set_embeddings(emb_new);
}

Eigen::VectorXd GpState::conditional_mean(const std::vector<AuthorPair>& query,
                                          const Eigen::MatrixXd& query_embeddings) const {
  require_factor();
  if (query.empty()) return Eigen::VectorXd(0);
  for (const auto& p : query)
    if (Eigen::Index(std::max(p.a, p.b)) >= query_embeddings.rows())
      throw ValidationError("conditional_mean: query author outside embedding matrix");
  if (query_embeddings.cols() != emb_.cols())
    throw ValidationError("conditional_mean: embedding dimension mismatch");
  Eigen::VectorXd alpha = llt_.solve(f_);
  Eigen::VectorXd out(Eigen::Index(query.size()));
  for (std::size_t qi = 0; qi < query.size(); ++qi) {
    Eigen::VectorXd u = query_embeddings.row(Eigen::Index(query[qi].a));
    Eigen::VectorXd v = query_embeddings.row(Eigen::Index(query[qi].b));
    double acc = 0.0;
    for (std::size_t p = 0; p < pairs_.size(); ++p) {
      Eigen::VectorXd u2 = emb_.row(Eigen::Index(pairs_.pairs[p].a));
      Eigen::VectorXd v2 = emb_.row(Eigen::Index(pairs_.pairs[p].b));
      acc += pair_kernel(kind_, u, v, u2, v2, params_) * alpha[Eigen::Index(p)];
    }
    out[Eigen::Index(qi)] = acc;
  }
  return out;
}

}  // namespace pdpnet
