// Command-line surface: train / eval / label / recommend / synth / geweke.
// Exit codes: 0 success, 1 usage or invalid configuration, 2 data error,
// 3 numerical failure.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pdpnet/engine.hpp"
#include "pdpnet/eval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pdpnet;

namespace {

// ---------------------------------------------------------------------------
// Config file support: a flat JSON object whose keys are long option names of
// the active subcommand. Command-line flags override config values.

std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string config_path;
  for (std::size_t i = 1; i + 1 < args.size(); ++i)
    if (args[i] == "--config") {
      config_path = args[i + 1];
      args.erase(args.begin() + long(i), args.begin() + long(i) + 2);
      break;
    }
  if (config_path.empty()) return args;
  if (args.size() < 2 || args[1].empty() || args[1][0] == '-')
    throw ValidationError("--config requires a subcommand");

  std::ifstream in(config_path);
  if (!in) throw DataError("cannot open config file: " + config_path);
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("config file " + config_path + ": " + e.what());
  }
  if (!cfg.is_object()) throw ValidationError("config file must hold a single object");

  // Insert config pairs right after the subcommand; later (user) flags win.
  std::vector<std::string> injected;
  for (const auto& [key, value] : cfg.items()) {
    if (value.is_boolean())
      injected.push_back("--" + key + "=" + (value.get<bool>() ? "true" : "false"));
    else if (value.is_string())
      injected.push_back("--" + key + "=" + value.get<std::string>());
    else if (value.is_number() || value.is_number_float())
      injected.push_back("--" + key + "=" + value.dump());
    else
      throw ValidationError("config key '" + key + "' must be a scalar");
  }
  args.insert(args.begin() + 2, injected.begin(), injected.end());
  return args;
}

// ---------------------------------------------------------------------------
// Shared knobs. Defaults follow the reference experiment settings: 2000
// iterations with a 1000-iteration text-only phase, concentrations started at
// 0.5 under a Gamma(0.1, 0.1) prior, unit kernel scales, five seeds.

struct RunSettings {
  std::string model = "tn";
  std::string ablate = "none";
  std::string corpus_path, edges_path, labels_path, out_dir = "runs";
  std::string seeds = "1,2,3,4,5";
  std::uint32_t workers = 4;

  std::uint32_t iterations = 2000, burnin = 1000, hyper_every = 1, gp_inner = 20;
  std::uint32_t snapshot_every = 100;
  double gp_step = 0.2;

  std::uint32_t truncation = 0;
  double topic_discount = 0.5, vocab_discount = 0.7, init_concentration = 0.5;
  double prior_shape = 0.1, prior_rate = 0.1;

  std::string kernel = "cosine";
  double signal = 1.0, lengthscale = 1.0, noise = 1.0, jitter = 1e-6;
  bool full_pairing = false, timing = false;

  std::uint32_t min_author_tweets = 100, min_token_count = 1;
  double train_fraction = 0.9;
  std::uint64_t split_seed = 42;

  double fold_fraction = 0.5;
  std::uint32_t fold_sweeps = 50, pmi_top_n = 10;
};

void add_data_options(CLI::App* cmd, RunSettings& s) {
  cmd->add_option("--corpus", s.corpus_path, "line-delimited corpus file")->required();
  cmd->add_option("--edges", s.edges_path, "author_a,author_b link list");
  cmd->add_option("--labels", s.labels_path, "doc_id,label ground-truth file");
  cmd->add_option("--min-author-tweets", s.min_author_tweets,
                  "drop authors with fewer documents (default 100)");
  cmd->add_option("--min-token-count", s.min_token_count,
                  "map rarer tokens to the out-of-vocabulary sink (default 1)");
  cmd->add_option("--train-fraction", s.train_fraction,
                  "per-author train share of the document split (default 0.9)");
  cmd->add_option("--split-seed", s.split_seed, "seed of the train/test split (default 42)");
}

void add_eval_options(CLI::App* cmd, RunSettings& s) {
  cmd->add_option("--fold-fraction", s.fold_fraction,
                  "fraction of each test document folded in (default 0.5)");
  cmd->add_option("--fold-sweeps", s.fold_sweeps, "fold-in Gibbs sweeps (default 50)");
  cmd->add_option("--pmi-top-n", s.pmi_top_n, "words per topic for PMI coherence (default 10)");
}

void add_model_options(CLI::App* cmd, RunSettings& s) {
  cmd->add_option("--model", s.model, "tn | hdp-lda | npatm (default tn)");
  cmd->add_option("--truncation", s.truncation,
                  "fixed topic count; 0 keeps the topic space unbounded (default 0)");
  cmd->add_option("--topic-discount", s.topic_discount,
                  "discount of every topic-level node (default 0.5)");
  cmd->add_option("--vocab-discount", s.vocab_discount,
                  "discount of the word/tag nodes (default 0.7)");
  cmd->add_option("--init-concentration", s.init_concentration,
                  "initial concentration of every node (default 0.5)");
  cmd->add_option("--prior-shape", s.prior_shape,
                  "Gamma prior shape for concentrations (default 0.1)");
  cmd->add_option("--prior-rate", s.prior_rate,
                  "Gamma prior rate for concentrations (default 0.1)");
  cmd->add_option("--kernel", s.kernel, "network kernel: cosine | original (default cosine)");
  cmd->add_option("--signal", s.signal, "kernel signal scale s (default 1)");
  cmd->add_option("--lengthscale", s.lengthscale,
                  "squared-exponential lengthscale l (default 1)");
  cmd->add_option("--noise", s.noise, "observation noise sigma (default 1)");
  cmd->add_option("--jitter", s.jitter, "initial Cholesky jitter (default 1e-6)");
  cmd->add_flag("--full-pairing", s.full_pairing,
                "use every author pair instead of links + sampled non-links");
}

void add_schedule_options(CLI::App* cmd, RunSettings& s) {
  cmd->add_option("--iterations", s.iterations, "total Gibbs iterations (default 2000)");
  cmd->add_option("--burnin", s.burnin, "text-only iterations before coupling (default 1000)");
  cmd->add_option("--hyper-every", s.hyper_every,
                  "concentration resampling period (default 1)");
  cmd->add_option("--gp-inner", s.gp_inner, "pCN proposals per iteration (default 20)");
  cmd->add_option("--gp-step", s.gp_step, "pCN step size (default 0.2)");
  cmd->add_option("--snapshot-every", s.snapshot_every, "snapshot period (default 100)");
  cmd->add_flag("--timing", s.timing, "record wall-clock ms in traces (off for stable bytes)");
}

KernelKind kernel_from_string(const std::string& s) {
  if (s == "cosine") return KernelKind::Cosine;
  if (s == "original") return KernelKind::Original;
  throw ValidationError("unknown kernel: " + s);
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoull(item));
  }
  if (out.empty()) throw ValidationError("--seeds must name at least one seed");
  return out;
}

EngineConfig make_engine_config(const RunSettings& s, ModelKind kind, ModelFlags flags,
                                std::uint32_t vocab, std::uint64_t seed) {
  EngineConfig cfg;
  cfg.kind = kind;
  cfg.model.vocab_size = vocab;
  cfg.model.truncation = s.truncation;
  cfg.model.topic_discount = s.topic_discount;
  cfg.model.vocab_discount = s.vocab_discount;
  cfg.model.init_concentration = s.init_concentration;
  cfg.model.flags = flags;
  cfg.schedule.total_iterations = s.iterations;
  cfg.schedule.text_only_burnin = s.burnin;
  cfg.schedule.hyper_resample_every = s.hyper_every;
  cfg.schedule.gp_inner_steps = s.gp_inner;
  cfg.schedule.snapshot_every = s.snapshot_every;
  cfg.schedule.gp_step = s.gp_step;
  cfg.schedule.seed = seed;
  cfg.kernel = kernel_from_string(s.kernel);
  cfg.kernel_params = KernelParams{s.signal, s.lengthscale, s.noise, s.jitter};
  cfg.full_pairing = s.full_pairing;
  cfg.timing = s.timing;
  cfg.concentration_prior = ConcentrationPrior{s.prior_shape, s.prior_rate};
  return cfg;
}

struct Variant {
  std::string name;
  ModelKind kind = ModelKind::Tn;
  ModelFlags flags;
};

std::vector<Variant> variants_for(const RunSettings& s) {
  ModelKind kind = model_kind_from_string(s.model);
  if (s.ablate == "none") return {{to_string(kind), kind, ModelFlags{}}};
  if (kind != ModelKind::Tn)
    throw ValidationError("--ablate applies to the tn model only");
  std::vector<Variant> out;
  if (s.ablate == "all") {
    for (const auto& entry : ablation_roster()) out.push_back({entry.name, kind, entry.flags});
    return out;
  }
  std::stringstream ss(s.ablate);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back({item, kind, ablation_flags(item)});
  if (out.empty()) throw ValidationError("--ablate names no variant");
  return out;
}

std::map<std::string, std::uint32_t> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels file: " + path);
  std::map<std::string, std::uint32_t> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw DataError("labels file line " + std::to_string(lineno) + ": expected doc_id,label");
    out[line.substr(0, comma)] = std::uint32_t(std::stoul(line.substr(comma + 1)));
  }
  return out;
}

std::optional<ClusterMetrics> train_cluster_metrics(
    const ChainState& chain, const Corpus& train,
    const std::map<std::string, std::uint32_t>& labels) {
  if (labels.empty()) return std::nullopt;
  auto predicted = doc_topic_argmax(chain);
  std::vector<std::uint32_t> pred, truth;
  for (std::uint32_t m = 0; m < train.docs.size(); ++m) {
    auto it = labels.find(train.docs[m].id);
    if (it == labels.end()) continue;
    pred.push_back(predicted[m]);
    truth.push_back(it->second);
  }
  if (pred.empty()) return std::nullopt;
  return cluster_metrics(pred, truth);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open output file: " + path);
  out << text;
  if (!out.good()) throw DataError("failed writing " + path);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// train

struct SeedOutcome {
  std::optional<double> perplexity;
  std::optional<double> net_ll;
  std::optional<ClusterMetrics> clusters;
  double pmi = 0.0;
  std::uint32_t excluded_docs = 0;
  std::uint32_t live_topics = 0;
};

struct VariantSummary {
  std::string name;
  std::vector<SeedOutcome> seeds;
};

double mean_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  return v.empty() ? 0.0 : m / double(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v), var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  return std::sqrt(var / double(v.size() - 1));
}

int cmd_train(const RunSettings& s) {
  Corpus full = load_corpus(s.corpus_path, s.min_author_tweets, s.min_token_count);
  auto [train, test] = split_train_test(full, s.train_fraction, s.split_seed);
  std::vector<AuthorPair> links;
  if (!s.edges_path.empty()) links = load_edges(s.edges_path, full);
  auto labels = s.labels_path.empty() ? std::map<std::string, std::uint32_t>{}
                                      : load_labels(s.labels_path);
  auto seeds = parse_seeds(s.seeds);
  auto variants = variants_for(s);
  fs::create_directories(s.out_dir);

  struct Job {
    std::uint32_t variant, seed_ix;
  };
  std::vector<Job> jobs;
  for (std::uint32_t v = 0; v < variants.size(); ++v)
    for (std::uint32_t i = 0; i < seeds.size(); ++i) jobs.push_back({v, i});

  std::vector<SeedOutcome> outcomes(jobs.size());
  std::vector<std::string> failures(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex io_mutex;

  auto worker = [&]() {
    for (;;) {
      std::size_t ix = next.fetch_add(1);
      if (ix >= jobs.size()) return;
      const Variant& var = variants[jobs[ix].variant];
      std::uint64_t seed = seeds[jobs[ix].seed_ix];
      fs::path dir = fs::path(s.out_dir) / var.name / ("seed_" + std::to_string(seed));
      try {
        fs::create_directories(dir);
        EngineConfig cfg = make_engine_config(s, var.kind, var.flags,
                                              std::uint32_t(train.vocab.size()), seed);
        bool net = network_runs(cfg);
        RunResult res = run_engine(cfg, train, net ? links : std::vector<AuthorPair>{},
                                   dir.string());
        write_text((dir / "trace.csv").string(), res.trace.to_csv());
        write_snapshot(res.final_snapshot, (dir / "final_snapshot.json").string());

        SeedOutcome oc;
        PerplexityReport pr;
        if (!test.docs.empty()) {
          pr = perplexity(*res.chain, test, s.fold_fraction, s.fold_sweeps, seed);
          oc.perplexity = pr.perplexity;
          oc.excluded_docs = pr.excluded_docs;
        }
        oc.live_topics = res.chain->live_topics();
        if (net && !res.trace.rows.empty() && res.trace.rows.back().net_ll)
          oc.net_ll = *res.trace.rows.back().net_ll;
        oc.clusters = train_cluster_metrics(*res.chain, train, labels);
        oc.pmi = pmi_coherence(topic_top_words(*res.chain, s.pmi_top_n), train, s.pmi_top_n);
        outcomes[ix] = oc;

        json rep;
        rep["variant"] = var.name;
        rep["seed"] = seed;
        if (oc.perplexity) {
          rep["perplexity"] = *oc.perplexity;
          rep["scored_tokens"] = pr.scored_tokens;
          rep["excluded_docs"] = pr.excluded_docs;
          rep["perplexity_counts_words_only"] = true;
        }
        if (oc.net_ll) rep["network_ll"] = *oc.net_ll;
        if (oc.clusters) {
          rep["purity"] = oc.clusters->purity;
          rep["nmi"] = oc.clusters->nmi;
        }
        rep["pmi"] = oc.pmi;
        rep["live_topics"] = oc.live_topics;
        write_text((dir / "report.json").string(), rep.dump(2) + "\n");
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(io_mutex);
        failures[ix] = e.what();
      }
    }
  };

  std::uint32_t n_workers = std::max<std::uint32_t>(1, std::min<std::uint32_t>(
      s.workers, std::uint32_t(jobs.size())));
  std::vector<std::thread> pool;
  for (std::uint32_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  for (std::size_t ix = 0; ix < jobs.size(); ++ix)
    if (!failures[ix].empty()) {
      std::cerr << "run failed (" << variants[jobs[ix].variant].name << ", seed "
                << seeds[jobs[ix].seed_ix] << "): " << failures[ix] << "\n";
      return 2;
    }

  // Aggregate across seeds: one row per variant, full model last by roster order.
  std::string csv = "variant,perplexity_mean,perplexity_sd,network_ll_mean,network_ll_sd,"
                    "purity_mean,nmi_mean,pmi_mean\n";
  std::string txt;
  for (std::uint32_t v = 0; v < variants.size(); ++v) {
    std::vector<double> perp, net, purity, nmi, pmi;
    for (std::size_t ix = 0; ix < jobs.size(); ++ix) {
      if (jobs[ix].variant != v) continue;
      if (outcomes[ix].perplexity) perp.push_back(*outcomes[ix].perplexity);
      if (outcomes[ix].net_ll) net.push_back(*outcomes[ix].net_ll);
      if (outcomes[ix].clusters) {
        purity.push_back(outcomes[ix].clusters->purity);
        nmi.push_back(outcomes[ix].clusters->nmi);
      }
      pmi.push_back(outcomes[ix].pmi);
    }
    csv += variants[v].name + ",";
    csv += perp.empty() ? "NA,NA," : fmt(mean_of(perp)) + "," + fmt(sd_of(perp)) + ",";
    csv += net.empty() ? "NA,NA," : fmt(mean_of(net)) + "," + fmt(sd_of(net)) + ",";
    csv += purity.empty() ? "NA,NA," : fmt(mean_of(purity)) + "," + fmt(mean_of(nmi)) + ",";
    csv += fmt(mean_of(pmi)) + "\n";
    txt += variants[v].name + ": perplexity ";
    txt += perp.empty() ? "n/a" : fmt(mean_of(perp)) + " +- " + fmt(sd_of(perp));
    txt += net.empty() ? ", network LL n/a"
                       : ", network LL " + fmt(mean_of(net)) + " +- " + fmt(sd_of(net));
    if (!purity.empty())
      txt += ", purity " + fmt(mean_of(purity)) + ", NMI " + fmt(mean_of(nmi));
    txt += ", PMI " + fmt(mean_of(pmi)) + "\n";
  }
  write_text((fs::path(s.out_dir) / "summary.csv").string(), csv);
  write_text((fs::path(s.out_dir) / "summary.txt").string(), txt);
  std::cout << txt;
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const RunSettings& s, const std::string& snapshot_path,
             const std::string& heldout_edges) {
  Snapshot snap = read_snapshot(snapshot_path);
  LoadedState state = load_state(snap);
  Corpus full = load_corpus(s.corpus_path, s.min_author_tweets, s.min_token_count);
  auto [train, test] = split_train_test(full, s.train_fraction, s.split_seed);
  auto labels = s.labels_path.empty() ? std::map<std::string, std::uint32_t>{}
                                      : load_labels(s.labels_path);
  fs::create_directories(s.out_dir);

  json rep;
  rep["snapshot"] = snapshot_path;
  rep["iteration"] = snap.iteration;
  PerplexityReport pr = perplexity(*state.chain, test, s.fold_fraction, s.fold_sweeps,
                                   snap.iteration + 1);
  rep["perplexity"] = pr.perplexity;
  rep["scored_tokens"] = pr.scored_tokens;
  rep["excluded_docs"] = pr.excluded_docs;
  rep["perplexity_counts_words_only"] = true;
  if (state.gp) {
    Eigen::MatrixXd emb = author_embeddings(*state.chain);
    state.gp->set_embeddings(emb);
    rep["network_ll"] = state.gp->loglik();
    if (!heldout_edges.empty()) {
      auto held_links = load_edges(heldout_edges, full);
      Rng rng(mix_seed(snap.iteration, 7));
      PairSet held = make_pair_set(held_links, std::uint32_t(full.authors.size()), false, rng);
      rep["heldout_network_ll"] = heldout_network_ll(*state.gp, held, emb);
    }
  }
  if (auto cm = train_cluster_metrics(*state.chain, train, labels)) {
    rep["purity"] = cm->purity;
    rep["nmi"] = cm->nmi;
  }
  rep["pmi"] = pmi_coherence(topic_top_words(*state.chain, s.pmi_top_n), train, s.pmi_top_n);
  rep["live_topics"] = state.chain->live_topics();
  write_text((fs::path(s.out_dir) / "report.json").string(), rep.dump(2) + "\n");
  std::cout << rep.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// label

int cmd_label(const RunSettings& s, const std::string& snapshot_path, std::uint32_t top_tags,
              std::uint32_t top_words) {
  Snapshot snap = read_snapshot(snapshot_path);
  LoadedState state = load_state(snap);
  Corpus full = load_corpus(s.corpus_path, s.min_author_tweets, s.min_token_count);
  if (full.vocab.size() != state.chain->vocab_size())
    throw DataError("corpus vocabulary does not match the snapshot");
  auto labels = label_topics(*state.chain, top_tags, top_words);
  fs::create_directories(s.out_dir);
  std::string csv = "topic,tags,words\n";
  for (const auto& l : labels) {
    csv += std::to_string(l.topic_id) + ",";
    for (std::size_t i = 0; i < l.tags.size(); ++i)
      csv += (i ? " " : "") + full.vocab[l.tags[i]];
    csv += ",";
    for (std::size_t i = 0; i < l.words.size(); ++i)
      csv += (i ? " " : "") + full.vocab[l.words[i]];
    csv += "\n";
  }
  write_text((fs::path(s.out_dir) / "topic_labels.csv").string(), csv);
  std::cout << csv;
  return 0;
}

// ---------------------------------------------------------------------------
// recommend

std::vector<std::vector<std::vector<std::uint32_t>>> parse_new_docs(const std::string& path,
                                                                    const Corpus& corpus,
                                                                    const CompiledGraph& graph) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open new-author documents: " + path);
  std::map<std::string, std::uint32_t> vocab_index;
  for (std::uint32_t i = 0; i < corpus.vocab.size(); ++i) vocab_index[corpus.vocab[i]] = i;
  auto map_token = [&](std::string t, bool tag) -> std::optional<std::uint32_t> {
    for (auto& c : t) c = char(std::tolower(static_cast<unsigned char>(c)));
    if (tag) {
      std::size_t h = 0;
      while (h < t.size() && t[h] == '#') h++;
      t = t.substr(h);
    }
    auto it = vocab_index.find(t);
    if (it != vocab_index.end()) return it->second;
    return corpus.oov;  // unknown tokens fall into the sink when one exists
  };

  std::vector<std::vector<std::vector<std::uint32_t>>> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("new-docs line " + std::to_string(lineno) + ": " + e.what());
    }
    std::vector<std::uint32_t> words, tags;
    for (const auto& t : rec.value("text-tokens", json::array()))
      if (auto ix = map_token(t.get<std::string>(), false)) words.push_back(*ix);
    for (const auto& t : rec.value("hashtags", json::array()))
      if (auto ix = map_token(t.get<std::string>(), true)) tags.push_back(*ix);
    std::vector<std::vector<std::uint32_t>> streams;
    for (const auto& leaf : graph.leaves)
      streams.push_back(leaf.stream == StreamKind::Words ? words : tags);
    docs.push_back(std::move(streams));
  }
  if (docs.empty()) throw DataError("new-docs file holds no documents");
  return docs;
}

int cmd_recommend(const RunSettings& s, const std::string& snapshot_path,
                  const std::string& new_docs_path, std::uint32_t top_k,
                  std::uint32_t gp_sweeps, std::uint64_t seed) {
  Snapshot snap = read_snapshot(snapshot_path);
  LoadedState state = load_state(snap);
  Corpus full = load_corpus(s.corpus_path, s.min_author_tweets, s.min_token_count);
  if (full.vocab.size() != state.chain->vocab_size())
    throw DataError("corpus vocabulary does not match the snapshot");
  if (s.edges_path.empty()) throw ValidationError("recommend needs --edges");
  auto links = load_edges(s.edges_path, full);
  Rng pair_rng(mix_seed(seed, 3));
  PairSet pairs = make_pair_set(links, std::uint32_t(full.authors.size()), s.full_pairing,
                                pair_rng);
  auto new_docs = parse_new_docs(new_docs_path, full, state.chain->graph());

  RecommendOptions opt;
  opt.top_k = top_k;
  opt.fold_in_sweeps = s.fold_sweeps;
  opt.gp_sweeps = gp_sweeps;
  opt.gp_inner_steps = s.gp_inner;
  opt.gp_step = s.gp_step;
  opt.seed = seed;
  KernelParams kp{s.signal, s.lengthscale, s.noise, s.jitter};

  // Both kernels, mirroring the similarity-table layout: per kernel a
  // recommended row and a not-recommended row of per-rank profile cosines.
  fs::create_directories(s.out_dir);
  std::string csv = "kernel,row";
  for (std::uint32_t r = 1; r <= top_k; ++r) csv += ",rank" + std::to_string(r);
  csv += "\n";
  json rep;
  for (KernelKind kind : {KernelKind::Original, KernelKind::Cosine}) {
    const char* kname = kind == KernelKind::Cosine ? "cosine" : "original";
    RecommendationReport r = recommend_authors(*state.chain, new_docs, pairs, kind, kp, opt);
    csv += std::string(kname) + ",recommended";
    for (const auto& a : r.recommended) csv += "," + fmt(a.nu_cosine);
    csv += "\n" + std::string(kname) + ",not-recommended";
    for (const auto& a : r.dissimilar) csv += "," + fmt(a.nu_cosine);
    csv += "\n";
    json jk;
    for (const auto& a : r.recommended)
      jk["recommended"].push_back({{"author", full.authors[a.author]},
                                   {"link_score", a.link_score},
                                   {"cosine", a.nu_cosine}});
    for (const auto& a : r.dissimilar)
      jk["not_recommended"].push_back({{"author", full.authors[a.author]},
                                       {"link_score", a.link_score},
                                       {"cosine", a.nu_cosine}});
    rep[kname] = std::move(jk);
  }
  write_text((fs::path(s.out_dir) / "recommend.csv").string(), csv);
  write_text((fs::path(s.out_dir) / "recommend.json").string(), rep.dump(2) + "\n");
  std::cout << csv;
  return 0;
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(const SynthParams& params, const std::string& out_dir, std::uint64_t seed) {
  Rng rng(seed);
  SynthData data = generate_synthetic(params, rng);
  fs::create_directories(out_dir);
  save_corpus(data.corpus, (fs::path(out_dir) / "corpus.jsonl").string());
  save_edges(data.edges, data.corpus, (fs::path(out_dir) / "edges.csv").string());
  std::string labels;
  for (std::size_t m = 0; m < data.corpus.docs.size(); ++m)
    labels += data.corpus.docs[m].id + "," + std::to_string(data.doc_labels[m]) + "\n";
  write_text((fs::path(out_dir) / "labels.csv").string(), labels);
  std::string comm;
  for (std::size_t a = 0; a < data.corpus.authors.size(); ++a)
    comm += data.corpus.authors[a] + "," + std::to_string(data.author_community[a]) + "\n";
  write_text((fs::path(out_dir) / "communities.csv").string(), comm);
  std::cout << "wrote " << data.corpus.docs.size() << " documents, " << data.edges.size()
            << " links, " << data.corpus.vocab.size() << " tokens to " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// geweke

int cmd_geweke(const RunSettings& s, const GewekeOptions& opt, std::uint32_t vocab) {
  if (s.truncation == 0)
    throw ValidationError("geweke needs --truncation (a finite topic space)");
  ModelConfig mc;
  mc.vocab_size = vocab;
  mc.truncation = s.truncation;
  mc.topic_discount = s.topic_discount;
  mc.vocab_discount = s.vocab_discount;
  mc.init_concentration = s.init_concentration;
  if (s.ablate != "none") mc.flags = ablation_flags(s.ablate);
  GraphSpec spec = build_model(model_kind_from_string(s.model), mc);

  auto stats = geweke_compare(spec, opt);
  bool bad = false;
  std::printf("%-14s %14s %14s %10s\n", "statistic", "forward", "successive", "z");
  for (const auto& st : stats) {
    std::printf("%-14s %14.6f %14.6f %10.3f\n", st.name.c_str(), st.forward_mean,
                st.successive_mean, st.z);
    if (std::abs(st.z) >= 4.0) bad = true;
  }
  if (bad) {
    std::cerr << "geweke: sampler and forward draws disagree (|z| >= 4)\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical Poisson-Dirichlet topic network with a Gaussian-process link model"};
  app.require_subcommand(1);
  app.option_defaults()->take_last();

  RunSettings s;

  auto* train = app.add_subcommand("train", "train one or more model variants over seeds");
  train->option_defaults()->take_last();
  add_data_options(train, s);
  add_model_options(train, s);
  add_schedule_options(train, s);
  add_eval_options(train, s);
  train->add_option("--ablate", s.ablate,
                    "none | all | comma list of tn ablations (default none)");
  train->add_option("--out", s.out_dir, "output directory (default runs)");
  train->add_option("--seeds", s.seeds, "comma-separated seeds (default 1,2,3,4,5)");
  train->add_option("--workers", s.workers, "parallel chains (default 4)");

  std::string snapshot_path, heldout_edges, new_docs_path;
  auto* evalc = app.add_subcommand("eval", "evaluate a snapshot against a corpus");
  evalc->option_defaults()->take_last();
  add_data_options(evalc, s);
  add_eval_options(evalc, s);
  evalc->add_option("--snapshot", snapshot_path, "snapshot file")->required();
  evalc->add_option("--heldout-edges", heldout_edges, "held-out link list to score");
  evalc->add_option("--out", s.out_dir, "output directory (default runs)");

  std::uint32_t top_tags = 3, top_words = 7;
  auto* label = app.add_subcommand("label", "hashtag labels and top words per topic");
  label->option_defaults()->take_last();
  add_data_options(label, s);
  label->add_option("--snapshot", snapshot_path, "snapshot file")->required();
  label->add_option("--tags", top_tags, "hashtag labels per topic (default 3)");
  label->add_option("--words", top_words, "top words per topic (default 7)");
  label->add_option("--out", s.out_dir, "output directory (default runs)");

  std::uint32_t top_k = 3, gp_sweeps = 200;
  std::uint64_t rec_seed = 1;
  auto* rec = app.add_subcommand("recommend",
                                 "rank training authors for a new author's documents");
  rec->option_defaults()->take_last();
  add_data_options(rec, s);
  add_model_options(rec, s);
  add_eval_options(rec, s);
  rec->add_option("--snapshot", snapshot_path, "snapshot file")->required();
  rec->add_option("--new-docs", new_docs_path, "line-delimited documents of the new author")
      ->required();
  rec->add_option("--top-k", top_k, "authors per direction (default 3)");
  rec->add_option("--gp-sweeps", gp_sweeps, "pCN sweeps of the link fit (default 200)");
  rec->add_option("--seed", rec_seed, "seed of the fold-in and link fit (default 1)");
  rec->add_option("--out", s.out_dir, "output directory (default runs)");

  SynthParams sp;
  std::string synth_out = "synth";
  std::uint64_t synth_seed = 1;
  auto* synth = app.add_subcommand("synth", "generate a planted-structure corpus");
  synth->option_defaults()->take_last();
  synth->add_option("--authors", sp.n_authors, "authors (default 40)");
  synth->add_option("--docs-per-author", sp.docs_per_author, "documents per author (default 15)");
  synth->add_option("--words-per-doc", sp.words_per_doc, "words per document (default 12)");
  synth->add_option("--tags-per-doc", sp.tags_per_doc, "hashtags per document (default 2)");
  synth->add_option("--topics", sp.topics, "planted topics (default 4)");
  synth->add_option("--vocab", sp.vocab_size, "vocabulary size (default 120)");
  synth->add_option("--author-signal", sp.author_signal,
                    "author mass on the community topic (default 0.85)");
  synth->add_option("--link-within", sp.link_within,
                    "link probability inside a community (default 0.8)");
  synth->add_option("--link-across", sp.link_across,
                    "link probability across communities (default 0.1)");
  synth->add_option("--seed", synth_seed, "generator seed (default 1)");
  synth->add_option("--out", synth_out, "output directory (default synth)");

  GewekeOptions go;
  std::uint32_t geweke_vocab = 5;
  bool mutate = false;
  auto* gew = app.add_subcommand("geweke", "forward vs successive-conditional sampler check");
  gew->option_defaults()->take_last();
  add_model_options(gew, s);
  gew->add_option("--ablate", s.ablate, "single tn ablation to check (default none)");
  gew->add_option("--vocab", geweke_vocab, "vocabulary size (default 5)");
  gew->add_option("--docs", go.docs, "documents (default 3)");
  gew->add_option("--words-per-doc", go.words_per_doc, "words per document (default 3)");
  gew->add_option("--tags-per-doc", go.tags_per_doc, "hashtags per document (default 1)");
  gew->add_option("--authors", go.authors, "authors (default 2)");
  gew->add_option("--rounds", go.rounds, "sampling rounds per side (default 10000)");
  gew->add_option("--sweeps-between", go.sweeps_between,
                  "Gibbs sweeps between successive samples (default 1)");
  gew->add_option("--seed", go.seed, "seed (default 1)");
  gew->add_flag("--mutate", mutate, "deliberately break table removal (self-test)");

  try {
    auto args = expand_config(argc, argv);
    std::vector<const char*> raw;
    for (const auto& a : args) raw.push_back(a.c_str());
    app.parse(int(raw.size()), raw.data());

    if (app.got_subcommand(train)) return cmd_train(s);
    if (app.got_subcommand(evalc)) return cmd_eval(s, snapshot_path, heldout_edges);
    if (app.got_subcommand(label)) return cmd_label(s, snapshot_path, top_tags, top_words);
    if (app.got_subcommand(rec))
      return cmd_recommend(s, snapshot_path, new_docs_path, top_k, gp_sweeps, rec_seed);
    if (app.got_subcommand(synth)) return cmd_synth(sp, synth_out, synth_seed);
    if (app.got_subcommand(gew)) {
      go.mutate_removal = mutate;
      return cmd_geweke(s, go, geweke_vocab);
    }
    return 1;
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
