#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "pdpnet/gp.hpp"

using namespace pdpnet;

namespace {

Eigen::MatrixXd random_embeddings(std::uint32_t rows, std::uint32_t dim, Rng& rng) {
  Eigen::MatrixXd e(rows, dim);
  for (std::uint32_t i = 0; i < rows; ++i) {
    double total = 0.0;
    for (std::uint32_t j = 0; j < dim; ++j) {
      e(i, j) = 0.05 + uniform01(rng);
      total += e(i, j);
    }
    e.row(i) /= total;  // simplex rows, like smoothed topic profiles
  }
  return e;
}

PairSet ring_pairs(std::uint32_t n, std::uint32_t count) {
  PairSet ps;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t a = i % n, b = (i + 1 + i / n) % n;
    if (a == b) b = (b + 1) % n;
    AuthorPair p{std::min(a, b), std::max(a, b)};
    bool dup = false;
    for (const auto& q : ps.pairs) dup |= (q.a == p.a && q.b == p.b);
    if (dup) continue;
    ps.pairs.push_back(p);
    ps.x.push_back(i % 2 == 0 ? 1 : 0);
  }
  return ps;
}

Eigen::MatrixXd brute_cov(KernelKind kind, const KernelParams& p, const PairSet& ps,
                          const Eigen::MatrixXd& emb, double jitter) {
  const std::size_t n = ps.size();
  Eigen::MatrixXd c(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c(i, j) = pair_kernel(kind, emb.row(ps.pairs[i].a), emb.row(ps.pairs[i].b),
                            emb.row(ps.pairs[j].a), emb.row(ps.pairs[j].b), p);
  for (std::size_t i = 0; i < n; ++i) c(i, i) += p.noise * p.noise + jitter;
  return c;
}

double gauss_logdens(const Eigen::VectorXd& f, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  REQUIRE(llt.info() == Eigen::Success);
  Eigen::VectorXd alpha = llt.solve(f);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * f.dot(alpha) - 0.5 * logdet -
         0.5 * double(f.size()) * std::log(2.0 * 3.14159265358979323846);
}

}  // namespace

TEST_CASE("kernel parameter validation") {
  KernelParams p;
  CHECK_NOTHROW(p.validate());
  p.signal = 0.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = KernelParams{};
  p.lengthscale = -1.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = KernelParams{};
  p.noise = -0.5;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = KernelParams{};
  p.jitter = -1e-9;
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("cosine kernel: hand values and symmetries") {
  KernelParams p;
  Eigen::VectorXd e0(2), e1(2);
  e0 << 1.0, 0.0;
  e1 << 0.0, 1.0;
  // orthogonal pair against itself: (cos(u,u)cos(v,v) + cos(u,v)cos(v,u))/2
  CHECK(cosine_kernel(e0, e1, e0, e1, p) == doctest::Approx(0.5).epsilon(1e-12));
  // identical endpoints: (1*1 + 1*1)/2 = 1
  CHECK(cosine_kernel(e0, e0, e0, e0, p) == doctest::Approx(1.0).epsilon(1e-12));
  // signal scales quadratically
  KernelParams p2;
  p2.signal = 3.0;
  CHECK(cosine_kernel(e0, e1, e0, e1, p2) == doctest::Approx(4.5).epsilon(1e-12));

  Rng rng(31);
  Eigen::MatrixXd emb = random_embeddings(4, 3, rng);
  auto u = emb.row(0), v = emb.row(1), u2 = emb.row(2), v2 = emb.row(3);
  for (KernelKind kind : {KernelKind::Cosine, KernelKind::Original}) {
    // symmetric in the two pairs
    CHECK(pair_kernel(kind, u, v, u2, v2, p) == pair_kernel(kind, u2, v2, u, v, p));
    // invariant to swapping the endpoints inside either pair
    CHECK(pair_kernel(kind, u, v, u2, v2, p) == pair_kernel(kind, v, u, u2, v2, p));
    CHECK(pair_kernel(kind, u, v, u2, v2, p) == pair_kernel(kind, u, v, v2, u2, p));
  }
}

TEST_CASE("distance kernel: hand value") {
  KernelParams p;  // signal 1, lengthscale 1
  Eigen::VectorXd u(2), v(2);
  u << 1.0, 0.0;
  v << 0.0, 1.0;
  // self-covariance of a pair: (1 + exp(-|u-v|^2 / l^2)) * s^2 / 2
  double expected = 0.5 * (1.0 + std::exp(-2.0));
  CHECK(original_kernel(u, v, u, v, p) == doctest::Approx(expected).epsilon(1e-12));
  // identical endpoints: s^2
  CHECK(original_kernel(u, u, u, u, p) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gram matrices are positive semidefinite") {
  Rng rng(77);
  for (int rep = 0; rep < 20; ++rep) {
    std::uint32_t n = 3 + rep % 5;
    Eigen::MatrixXd emb = random_embeddings(n, 2 + rep % 4, rng);
    PairSet ps = ring_pairs(n, 2 * n);
    for (KernelKind kind : {KernelKind::Cosine, KernelKind::Original}) {
      KernelParams p;
      p.noise = 0.0;
      p.jitter = 0.0;
      Eigen::MatrixXd gram = brute_cov(kind, p, ps, emb, 0.0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
      CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
    }
  }
}

TEST_CASE("smoothed embeddings") {
  Eigen::MatrixXd counts(2, 2);
  counts << 1, 3, 0, 0;
  Eigen::MatrixXd emb = smoothed_embeddings(counts);
  CHECK(emb(0, 0) == doctest::Approx(1.5 / 5.0).epsilon(1e-12));
  CHECK(emb(0, 1) == doctest::Approx(3.5 / 5.0).epsilon(1e-12));
  // empty rows fall back to uniform
  CHECK(emb(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(emb.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(emb.row(1).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("link log likelihood") {
  Eigen::VectorXd f(3);
  f.setZero();
  std::vector<std::uint8_t> x{1, 0, 1};
  CHECK(network_loglik(f, x) == doctest::Approx(3.0 * std::log(0.5)).epsilon(1e-15));
  Eigen::VectorXd g(2);
  g << 2.0, -1.0;
  std::vector<std::uint8_t> y{1, 0};
  double expected = -std::log1p(std::exp(-2.0)) - std::log1p(std::exp(-1.0));
  CHECK(network_loglik(g, y) == doctest::Approx(expected).epsilon(1e-12));
  std::vector<std::uint8_t> wrong{1};
  CHECK_THROWS_AS(network_loglik(g, wrong), ValidationError);
}

TEST_CASE("pair set construction") {
  std::vector<AuthorPair> links{{0, 1}, {1, 2}, {2, 3}};
  Rng rng(5);
  PairSet ps = make_pair_set(links, 6, false, rng);
  ps.validate(6);
  CHECK(ps.size() == 6);  // 3 links + 3 sampled non-links
  int linked = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) linked += ps.x[i];
  CHECK(linked == 3);

  PairSet full = make_pair_set(links, 5, true, rng);
  full.validate(5);
  CHECK(full.size() == 10);  // C(5,2)
  int pos = 0;
  for (auto v : full.x) pos += v;
  CHECK(pos == 3);

  // duplicate links collapse
  std::vector<AuthorPair> dup{{0, 1}, {0, 1}};
  PairSet d = make_pair_set(dup, 3, true, rng);
  CHECK(d.size() == 3);
}

TEST_CASE("gp state: covariance, likelihood, factorization") {
  Rng rng(13);
  Eigen::MatrixXd emb = random_embeddings(5, 3, rng);
  PairSet ps = ring_pairs(5, 7);
  KernelParams p;
  GpState gp(KernelKind::Cosine, p, ps);
  CHECK_FALSE(gp.factor_valid());
  gp.set_embeddings(emb);
  REQUIRE(gp.factor_valid());

  Eigen::MatrixXd expected = brute_cov(KernelKind::Cosine, p, ps, emb, gp.applied_jitter());
  CHECK((gp.covariance() - expected).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::VectorXd f(Eigen::Index(ps.size()));
  for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = 0.1 * double(i) - 0.3;
  gp.set_f(f);
  CHECK(gp.loglik() == doctest::Approx(network_loglik(f, ps.x)).epsilon(1e-15));

  Eigen::VectorXd bad(2);
  bad.setZero();
  CHECK_THROWS_AS(gp.set_f(bad), ValidationError);
}

TEST_CASE("pCN sweeps move the latent function and accept within bounds") {
  Rng rng(17);
  Eigen::MatrixXd emb = random_embeddings(6, 3, rng);
  PairSet ps = ring_pairs(6, 8);
  GpState gp(KernelKind::Cosine, KernelParams{}, ps);
  gp.set_embeddings(emb);
  Eigen::VectorXd before = gp.f();
  MhStats stats = gp.mh_sweep_f(0.3, 200, rng);
  CHECK(stats.proposals == 200);
  CHECK(stats.accepts > 0);
  CHECK(stats.accepts <= stats.proposals);
  CHECK((gp.f() - before).norm() > 0.0);

  CHECK_THROWS_AS(gp.mh_sweep_f(0.0, 10, rng), ValidationError);
  CHECK_THROWS_AS(gp.mh_sweep_f(1.0, 10, rng), ValidationError);
  CHECK_THROWS_AS(gp.mh_sweep_f(0.3, 0, rng), ValidationError);
}

TEST_CASE("embedding move ratio matches a dense two-factorization computation") {
  Rng rng(23);
  Eigen::MatrixXd emb = random_embeddings(6, 4, rng);
  PairSet ps = ring_pairs(6, 8);
  KernelParams p;
  GpState gp(KernelKind::Cosine, p, ps);
  gp.set_embeddings(emb);
  Rng frng(24);
  gp.mh_sweep_f(0.5, 50, frng);
  Eigen::VectorXd f = gp.f();

  for (int rep = 0; rep < 5; ++rep) {
    std::uint32_t author = rep % 6;
    Eigen::MatrixXd emb2 = emb;
    Eigen::VectorXd row = random_embeddings(1, 4, rng).row(0);
    emb2.row(author) = row;

    double ours = gp.nu_move_log_ratio(author, row);
    double brute = gauss_logdens(f, brute_cov(KernelKind::Cosine, p, ps, emb2, p.jitter)) -
                   gauss_logdens(f, brute_cov(KernelKind::Cosine, p, ps, emb, p.jitter));
    CHECK(ours == doctest::Approx(brute).epsilon(1e-8));
  }
}

TEST_CASE("embedding move ratio is antisymmetric after commit") {
  Rng rng(29);
  Eigen::MatrixXd emb = random_embeddings(5, 3, rng);
  PairSet ps = ring_pairs(5, 6);
  GpState gp(KernelKind::Cosine, KernelParams{}, ps);
  gp.set_embeddings(emb);
  Rng frng(30);
  gp.mh_sweep_f(0.5, 30, frng);

  Eigen::VectorXd old_row = emb.row(2);
  Eigen::VectorXd new_row = random_embeddings(1, 3, rng).row(0);
  double forward = gp.nu_move_log_ratio(2, new_row);
  gp.commit_nu_move(2, new_row);
  double backward = gp.nu_move_log_ratio(2, old_row);
  CHECK(forward == doctest::Approx(-backward).epsilon(1e-12));

  // committing brings the covariance to what a fresh rebuild would give
  Eigen::MatrixXd emb2 = emb;
  emb2.row(2) = new_row;
  GpState fresh(KernelKind::Cosine, KernelParams{}, ps);
  fresh.set_embeddings(emb2);
  CHECK((gp.covariance() - fresh.covariance()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("conditional mean matches the direct solve") {
  Rng rng(37);
  Eigen::MatrixXd emb = random_embeddings(6, 3, rng);
  PairSet ps = ring_pairs(6, 7);
  KernelParams p;
  GpState gp(KernelKind::Cosine, p, ps);
  gp.set_embeddings(emb);
  Rng frng(38);
  gp.mh_sweep_f(0.5, 40, frng);
  Eigen::VectorXd f = gp.f();

  std::vector<AuthorPair> query{{0, 3}, {1, 4}, {2, 5}};
  Eigen::VectorXd got = gp.conditional_mean(query, emb);

  Eigen::MatrixXd cov = brute_cov(KernelKind::Cosine, p, ps, emb, gp.applied_jitter());
  Eigen::MatrixXd kstar(query.size(), ps.size());
  for (std::size_t q = 0; q < query.size(); ++q)
    for (std::size_t j = 0; j < ps.size(); ++j)
      kstar(Eigen::Index(q), Eigen::Index(j)) =
          pair_kernel(KernelKind::Cosine, emb.row(query[q].a), emb.row(query[q].b),
                      emb.row(ps.pairs[j].a), emb.row(ps.pairs[j].b), p);
  Eigen::VectorXd expected = kstar * cov.llt().solve(f);
  CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("spd factorization escalates jitter and reports failure") {
  Eigen::MatrixXd good = Eigen::MatrixXd::Identity(3, 3);
  Eigen::LLT<Eigen::MatrixXd> llt;
  double applied = factor_spd(good, 1e-6, llt);
  CHECK(applied == doctest::Approx(1e-6));

  // rank-one matrix: needs some escalation but succeeds
  Eigen::MatrixXd rank1 = Eigen::MatrixXd::Constant(3, 3, 1.0);
  CHECK_NOTHROW(factor_spd(rank1, 1e-10, llt));

  // strongly indefinite: must throw rather than silently degrade
  Eigen::MatrixXd indef = Eigen::MatrixXd::Identity(3, 3);
  indef(0, 0) = -5.0;
  CHECK_THROWS_AS(factor_spd(indef, 1e-10, llt, 1e-4), NumericalError);
}

TEST_CASE("constant-likelihood sweeps accept every proposal") {
  Rng rng(41);
  Eigen::MatrixXd emb = random_embeddings(4, 3, rng);
  PairSet ps = ring_pairs(4, 4);
  GpState gp(KernelKind::Cosine, KernelParams{}, ps);
  gp.set_embeddings(emb);
  MhStats stats = gp.mh_sweep_f(0.4, 500, rng, true);
  CHECK(stats.proposals == 500);
  CHECK(stats.accepts == 500);
}
