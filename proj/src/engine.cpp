#include "pdpnet/engine.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>

namespace pdpnet {

void Schedule::validate() const {
  if (total_iterations < 1) throw ValidationError("Schedule: need at least one iteration");
  if (text_only_burnin > total_iterations)
    throw ValidationError("Schedule: burn-in exceeds total iterations");
  if (hyper_resample_every < 1 || gp_inner_steps < 1 || snapshot_every < 1)
    throw ValidationError("Schedule: periods must be >= 1");
  if (!(gp_step > 0.0 && gp_step < 1.0))
    throw ValidationError("Schedule: GP step must lie in (0,1)");
}

namespace {

void append_double(std::string& out, double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  out += buf;
}

}  // namespace

std::string Trace::to_csv() const {
  std::string out = "iter,text_ll,net_ll,topics,beta_topic,beta_vocab,gp_accept,ms\n";
  for (const auto& r : rows) {
    out += std::to_string(r.iter);
    out += ',';
    append_double(out, r.text_ll, "%.10g");
    out += ',';
    if (r.net_ll) append_double(out, *r.net_ll, "%.10g");
    out += ',';
    out += std::to_string(r.topics);
    out += ',';
    append_double(out, r.beta_topic, "%.10g");
    out += ',';
    append_double(out, r.beta_vocab, "%.10g");
    out += ',';
    if (r.gp_accept) append_double(out, *r.gp_accept, "%.6f");
    out += ',';
    append_double(out, r.ms, "%.3f");
    out += '\n';
  }
  return out;
}

std::vector<DocTokens> docs_from_corpus(const CompiledGraph& graph, const Corpus& corpus) {
  corpus.validate();
  std::vector<DocTokens> docs;
  docs.reserve(corpus.docs.size());
  for (const auto& d : corpus.docs) {
    DocTokens dt;
    dt.author = d.author;
    dt.symbols.resize(graph.leaves.size());
    for (std::uint32_t l = 0; l < graph.leaves.size(); ++l)
      dt.symbols[l] = graph.leaves[l].stream == StreamKind::Words ? d.words : d.tags;
    docs.push_back(std::move(dt));
  }
  return docs;
}

bool network_runs(const EngineConfig& cfg) {
  return cfg.kind == ModelKind::Tn && !cfg.model.flags.no_network && !cfg.model.flags.no_author;
}

namespace {

struct LoopState {
  EngineConfig cfg;
  std::shared_ptr<const CompiledGraph> graph;
  std::unique_ptr<ChainState> chain;
  std::optional<GpState> gp;
  Rng rng_text, rng_net;
  Trace trace;
  std::vector<std::uint32_t> basis;
};

std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_string(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw DataError("snapshot: invalid rng state");
  return rng;
}

Snapshot make_snapshot(const LoopState& ls, std::uint32_t iteration) {
  Snapshot snap;
  snap.iteration = iteration;
  snap.graph = ls.graph->spec;
  snap.n_authors = ls.chain->n_authors();
  snap.vocab = ls.chain->vocab_size();
  snap.chain = ls.chain->dump();
  snap.has_gp = ls.gp.has_value();
  if (ls.gp) {
    snap.kernel = ls.gp->kind();
    snap.kernel_params = ls.gp->params();
    snap.pairs = ls.gp->pairs();
    const auto& f = ls.gp->f();
    snap.f.assign(f.data(), f.data() + f.size());
  }
  snap.rng_text = rng_to_string(ls.rng_text);
  snap.rng_net = rng_to_string(ls.rng_net);
  snap.text_only_burnin = ls.cfg.schedule.text_only_burnin;
  snap.hyper_resample_every = ls.cfg.schedule.hyper_resample_every;
  snap.gp_inner_steps = ls.cfg.schedule.gp_inner_steps;
  snap.gp_step = ls.cfg.schedule.gp_step;
  snap.prior_shape = ls.cfg.concentration_prior.shape;
  snap.prior_rate = ls.cfg.concentration_prior.rate;
  return snap;
}

// Matrix of per-author topic counts over the given basis ids.
Eigen::MatrixXd author_counts(const ChainState& chain, std::uint32_t nu_tmpl,
                              const std::vector<std::uint32_t>& basis) {
  Eigen::MatrixXd counts(chain.replica_count(nu_tmpl), basis.size());
  for (std::uint32_t a = 0; a < chain.replica_count(nu_tmpl); ++a) {
    const NodeState& s = chain.node(nu_tmpl, a);
    for (std::uint32_t k = 0; k < basis.size(); ++k) {
      auto d = chain.dense_of(basis[k]);
      counts(a, k) = d ? double(s.customers(*d)) : 0.0;
    }
  }
  return counts;
}

Eigen::VectorXd smoothed_row(const std::vector<std::uint32_t>& counts) {
  Eigen::VectorXd row(counts.size());
  double total = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) total += double(counts[k]);
  double denom = total + 0.5 * double(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) row[Eigen::Index(k)] = (double(counts[k]) + 0.5) / denom;
  return row;
}

// Run iterations first..total on an initialized LoopState.
RunResult run_loop(LoopState ls, std::uint32_t first, std::uint32_t total,
                   std::uint32_t snapshot_every, const std::string& snapshot_dir) {
  const Schedule& sched = ls.cfg.schedule;
  bool net = ls.gp.has_value();
  std::uint32_t nu_tmpl = net ? ls.graph->node_index("nu") : 0;
  auto groups = ls.chain->hyper_group_names();

  for (std::uint32_t it = first; it <= total; ++it) {
    auto t0 = std::chrono::steady_clock::now();
    bool coupled = net && it > sched.text_only_burnin;

    CouplingHook hook;
    if (coupled) {
      ls.basis.clear();
      for (std::uint32_t k = 0; k < ls.chain->live_topics(); ++k)
        ls.basis.push_back(ls.chain->topic_id(k));
      ls.gp->set_embeddings(smoothed_embeddings(author_counts(*ls.chain, nu_tmpl, ls.basis)));
      hook.watched_template = nu_tmpl;
      hook.basis = ls.basis;
      GpState* gp = &*ls.gp;
      hook.log_accept = [gp](std::uint32_t rep, const std::vector<std::uint32_t>&,
                             const std::vector<std::uint32_t>& after) {
        return gp->nu_move_log_ratio(rep, smoothed_row(after));
      };
      hook.committed = [gp](std::uint32_t rep, const std::vector<std::uint32_t>& after) {
        gp->commit_nu_move(rep, smoothed_row(after));
      };
    }

    SweepStats sweep = ls.chain->full_sweep(ls.rng_text, coupled ? &hook : nullptr);

    TraceRow row;
    row.iter = it;
    row.text_ll = sweep.joint_ll;
    row.topics = sweep.live_topics;
    if (coupled) {
      MhStats mh = ls.gp->mh_sweep_f(sched.gp_step, int(sched.gp_inner_steps), ls.rng_net);
      row.net_ll = ls.gp->loglik();
      row.gp_accept = mh.rate();
    }
    if (it % sched.hyper_resample_every == 0)
      for (const auto& g : groups)
        ls.chain->resample_group_concentration(g, ls.cfg.concentration_prior, ls.rng_text);
    row.beta_topic = ls.chain->group_concentration("topic");
    row.beta_vocab = ls.chain->group_concentration("vocab");
    if (ls.cfg.timing) {
      auto t1 = std::chrono::steady_clock::now();
      row.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    ls.trace.rows.push_back(row);

    if (!snapshot_dir.empty() && it % snapshot_every == 0) {
      char name[40];
      std::snprintf(name, sizeof name, "snap_%06u.json", it);
      write_snapshot(make_snapshot(ls, it), (std::filesystem::path(snapshot_dir) / name).string());
    }
  }

  RunResult out;
  out.final_snapshot = make_snapshot(ls, total);
  out.graph = std::move(ls.graph);
  out.chain = std::move(ls.chain);
  out.gp = std::move(ls.gp);
  out.gp_basis = std::move(ls.basis);
  out.trace = std::move(ls.trace);
  return out;
}

}  // namespace

RunResult run_engine(const EngineConfig& cfg, const Corpus& train,
                     const std::vector<AuthorPair>& links, const std::string& snapshot_dir) {
  cfg.schedule.validate();
  cfg.kernel_params.validate();
  if (train.docs.empty()) throw ValidationError("run_engine: empty training corpus");

  LoopState ls;
  ls.cfg = cfg;
  ModelConfig mc = cfg.model;
  mc.vocab_size = std::uint32_t(train.vocab.size());
  ls.graph = std::make_shared<const CompiledGraph>(compile(build_model(cfg.kind, mc)));
  ls.rng_text = Rng(mix_seed(cfg.schedule.seed, 0));
  ls.rng_net = Rng(mix_seed(cfg.schedule.seed, 1));

  ls.chain = std::make_unique<ChainState>(ls.graph, docs_from_corpus(*ls.graph, train),
                                          std::uint32_t(train.authors.size()),
                                          std::uint32_t(train.vocab.size()));
  ls.chain->init_sequential(ls.rng_text);

  if (network_runs(cfg)) {
    if (links.empty())
      throw ValidationError("run_engine: network phase enabled but the edge list is empty");
    PairSet pairs = make_pair_set(links, std::uint32_t(train.authors.size()), cfg.full_pairing,
                                  ls.rng_net);
    ls.gp.emplace(cfg.kernel, cfg.kernel_params, std::move(pairs));
  }

  return run_loop(std::move(ls), 1, cfg.schedule.total_iterations, cfg.schedule.snapshot_every,
                  snapshot_dir);
}

LoadedState load_state(const Snapshot& snap) {
  LoadedState out;
  out.graph = std::make_shared<const CompiledGraph>(compile(snap.graph));
  out.chain = std::make_unique<ChainState>(out.graph, snap.chain.docs, snap.n_authors, snap.vocab);
  out.chain->restore(snap.chain);
  if (snap.has_gp) {
    out.gp.emplace(snap.kernel, snap.kernel_params, snap.pairs);
    Eigen::VectorXd f(Eigen::Index(snap.f.size()));
    for (std::size_t i = 0; i < snap.f.size(); ++i) f[Eigen::Index(i)] = snap.f[i];
    out.gp->set_f(f);
  }
  return out;
}

RunResult resume_engine(const Snapshot& snap, std::uint32_t schedule_total,
                        std::uint32_t snapshot_every, bool timing,
                        const std::string& snapshot_dir) {
  if (schedule_total <= snap.iteration)
    throw ValidationError("resume_engine: snapshot already reached the requested iteration");

  LoopState ls;
  ls.cfg.kind = ModelKind::Tn;  // not used past this point; graph comes from the snapshot
  ls.cfg.schedule.total_iterations = schedule_total;
  ls.cfg.schedule.text_only_burnin = snap.text_only_burnin;
  ls.cfg.schedule.hyper_resample_every = snap.hyper_resample_every;
  ls.cfg.schedule.gp_inner_steps = snap.gp_inner_steps;
  ls.cfg.schedule.gp_step = snap.gp_step;
  ls.cfg.schedule.snapshot_every = snapshot_every;
  ls.cfg.timing = timing;
  ls.cfg.concentration_prior = ConcentrationPrior{snap.prior_shape, snap.prior_rate};
  ls.cfg.kernel = snap.kernel;
  ls.cfg.kernel_params = snap.kernel_params;

  ls.graph = std::make_shared<const CompiledGraph>(compile(snap.graph));
  ls.chain = std::make_unique<ChainState>(ls.graph, snap.chain.docs, snap.n_authors, snap.vocab);
  ls.chain->restore(snap.chain);
  ls.rng_text = rng_from_string(snap.rng_text);
  ls.rng_net = rng_from_string(snap.rng_net);
  if (snap.has_gp) {
    ls.gp.emplace(snap.kernel, snap.kernel_params, snap.pairs);
    Eigen::VectorXd f(Eigen::Index(snap.f.size()));
    for (std::size_t i = 0; i < snap.f.size(); ++i) f[Eigen::Index(i)] = snap.f[i];
    ls.gp->set_f(f);
  }

  return run_loop(std::move(ls), snap.iteration + 1, schedule_total, snapshot_every,
                  snapshot_dir);
}

std::vector<GewekeStat> geweke_compare(const GraphSpec& spec, const GewekeOptions& opt) {
  auto graph = std::make_shared<const CompiledGraph>(compile(spec));
  if (!graph->finite_topics)
    throw ValidationError("geweke_compare: requires a truncated (finite) topic space");
  if (opt.rounds < 10) throw ValidationError("geweke_compare: too few rounds");

  std::vector<std::uint32_t> words(opt.docs, opt.words_per_doc), tags(opt.docs, opt.tags_per_doc);
  bool has_tag_leaf = false;
  for (const auto& l : graph->leaves)
    if (l.stream == StreamKind::Hashtags) has_tag_leaf = true;
  if (!has_tag_leaf) tags.assign(opt.docs, 0);

  const char* names[3] = {"live_topics", "root_tables", "topic0_share"};
  auto collect = [&](const ChainState& chain, double* s) {
    std::uint32_t live = 0;
    std::uint64_t tokens = 0;
    for (std::uint32_t k = 0; k < chain.live_topics(); ++k) {
      if (chain.tokens_with_topic(k) > 0) live++;
      tokens += chain.tokens_with_topic(k);
    }
    s[0] = double(live);
    s[1] = double(chain.node(graph->topic_root, 0).total_tables());
    auto d0 = chain.dense_of(0);
    s[2] = tokens == 0 ? 0.0 : double(d0 ? chain.tokens_with_topic(*d0) : 0) / double(tokens);
  };

  // Forward side: independent ancestral draws.
  Rng rng_f(mix_seed(opt.seed, 100));
  std::vector<std::array<double, 3>> fwd(opt.rounds);
  for (std::uint32_t r = 0; r < opt.rounds; ++r) {
    ChainState chain(graph, empty_docs(*graph, opt.docs, opt.authors, words, tags), opt.authors,
                     graph_vocab_size(*graph));
    chain.forward_generate(rng_f);
    collect(chain, fwd[r].data());
  }

  // Successive side: alternate latent sweeps and data resampling.
  Rng rng_s(mix_seed(opt.seed, 200));
  ChainState chain(graph, empty_docs(*graph, opt.docs, opt.authors, words, tags), opt.authors,
                   graph_vocab_size(*graph));
  chain.forward_generate(rng_s);
  if (opt.mutate_removal) chain.set_suppress_table_removal(true);
  std::vector<std::array<double, 3>> suc(opt.rounds);
  for (std::uint32_t r = 0; r < opt.rounds; ++r) {
    for (std::uint32_t s = 0; s < opt.sweeps_between; ++s) chain.full_sweep(rng_s);
    chain.resample_observations(rng_s);
    collect(chain, suc[r].data());
  }

  auto mean_of = [](const std::vector<std::array<double, 3>>& v, int j) {
    double m = 0.0;
    for (const auto& s : v) m += s[j];
    return m / double(v.size());
  };
  auto iid_se = [&](const std::vector<std::array<double, 3>>& v, int j, double m) {
    double var = 0.0;
    for (const auto& s : v) var += (s[j] - m) * (s[j] - m);
    var /= double(v.size() - 1);
    return std::sqrt(var / double(v.size()));
  };
  // Correlated chain: batch-means standard error.
  auto batch_se = [&](const std::vector<std::array<double, 3>>& v, int j, double m) {
    std::size_t B = 100;
    if (v.size() < 2 * B) B = std::max<std::size_t>(2, v.size() / 10);
    std::size_t len = v.size() / B;
    double var = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      double bm = 0.0;
      for (std::size_t i = b * len; i < (b + 1) * len; ++i) bm += v[i][j];
      bm /= double(len);
      var += (bm - m) * (bm - m);
    }
    var /= double(B - 1);
    return std::sqrt(var / double(B));
  };

  std::vector<GewekeStat> out;
  for (int j = 0; j < 3; ++j) {
    GewekeStat st;
    st.name = names[j];
    st.forward_mean = mean_of(fwd, j);
    st.successive_mean = mean_of(suc, j);
    double se_f = iid_se(fwd, j, st.forward_mean);
    double se_s = batch_se(suc, j, st.successive_mean);
    double denom = std::sqrt(se_f * se_f + se_s * se_s);
    if (denom == 0.0)
      st.z = st.forward_mean == st.successive_mean
                 ? 0.0
                 : std::numeric_limits<double>::infinity();
    else
      st.z = (st.forward_mean - st.successive_mean) / denom;
    out.push_back(std::move(st));
  }
  return out;
}

}  // namespace pdpnet
