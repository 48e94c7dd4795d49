#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pdpnet/chain.hpp"
#include "pdpnet/corpus.hpp"
#include "pdpnet/gp.hpp"
#include "pdpnet/model.hpp"

namespace pdpnet {

struct Schedule {
  std::uint32_t total_iterations = 2000;
  std::uint32_t text_only_burnin = 1000;
  std::uint32_t hyper_resample_every = 1;
  std::uint32_t gp_inner_steps = 20;
  std::uint32_t snapshot_every = 100;
  double gp_step = 0.2;  // pCN step, targets 20-40% acceptance
  std::uint64_t seed = 1;
  void validate() const;
};

struct TraceRow {
  std::uint32_t iter = 0;
  double text_ll = 0.0;
  std::optional<double> net_ll;  // empty before the coupled phase
  std::uint32_t topics = 0;
  double beta_topic = 0.0, beta_vocab = 0.0;
  std::optional<double> gp_accept;
  double ms = 0.0;
};

struct Trace {
  std::vector<TraceRow> rows;
  std::string to_csv() const;
};

struct EngineConfig {
  ModelKind kind = ModelKind::Tn;
  ModelConfig model;
  Schedule schedule;
  KernelKind kernel = KernelKind::Cosine;
  KernelParams kernel_params;
  bool full_pairing = false;  // PairSet = every author pair instead of link-balanced
  bool timing = false;        // real wall-clock ms in the trace (default 0 for stable bytes)
  ConcentrationPrior concentration_prior;
};

// Serializable full sampler state (content of a snapshot file).
struct Snapshot {
  std::uint32_t version = 1;
  std::uint32_t iteration = 0;
  GraphSpec graph;
  std::uint32_t n_authors = 0, vocab = 0;
  ChainArchive chain;
  bool has_gp = false;
  KernelKind kernel = KernelKind::Cosine;
  KernelParams kernel_params;
  PairSet pairs;
  std::vector<double> f;
  std::string rng_text, rng_net;
  // engine config needed to continue the run
  std::uint32_t text_only_burnin = 0, hyper_resample_every = 1, gp_inner_steps = 20;
  double gp_step = 0.2;
  double prior_shape = 0.1, prior_rate = 0.1;
};

std::string encode_snapshot(const Snapshot& snap);
Snapshot decode_snapshot(const std::string& blob);
void write_snapshot(const Snapshot& snap, const std::string& path);
Snapshot read_snapshot(const std::string& path);

struct RunResult {
  std::shared_ptr<const CompiledGraph> graph;
  std::unique_ptr<ChainState> chain;
  std::optional<GpState> gp;
  std::vector<std::uint32_t> gp_basis;  // topic ids behind the final embeddings
  Trace trace;
  Snapshot final_snapshot;
};

// Map corpus documents onto the graph's leaf streams.
std::vector<DocTokens> docs_from_corpus(const CompiledGraph& graph, const Corpus& corpus);

// Whether this configuration runs the network phase (needs the full author
// level and the network switch on).
bool network_runs(const EngineConfig& cfg);

// Alternating sampler: text-only burn-in, then coupled Gibbs/GP iterations
// with hyperparameter resampling. Deterministic given schedule.seed.
// Snapshots are written to snapshot_dir (if non-empty) every snapshot_every
// iterations as snap_<iter>.json.
RunResult run_engine(const EngineConfig& cfg, const Corpus& train,
                     const std::vector<AuthorPair>& links, const std::string& snapshot_dir = "");

// Continue a run from a snapshot up to schedule_total iterations; the
// continued trace is bit-identical to the uninterrupted run's tail.
RunResult resume_engine(const Snapshot& snap, std::uint32_t schedule_total,
                        std::uint32_t snapshot_every = 100, bool timing = false,
                        const std::string& snapshot_dir = "");

// Rebuilt sampler state of a snapshot, for evaluation without iterating.
// The GP (when present) carries the stored f; its Gram matrix is not built
// until set_embeddings is called.
struct LoadedState {
  std::shared_ptr<const CompiledGraph> graph;
  std::unique_ptr<ChainState> chain;
  std::optional<GpState> gp;
};
LoadedState load_state(const Snapshot& snap);

struct GewekeOptions {
  std::uint32_t docs = 3;
  std::uint32_t words_per_doc = 3;
  std::uint32_t tags_per_doc = 1;
  std::uint32_t authors = 2;
  std::uint32_t rounds = 10000;
  std::uint32_t sweeps_between = 1;
  std::uint64_t seed = 1;
  bool mutate_removal = false;  // deliberately broken table removal
};

struct GewekeStat {
  std::string name;
  double forward_mean = 0.0, successive_mean = 0.0;
  double z = 0.0;
};

// Forward ancestral samples vs successive-conditional Gibbs samples of the
// same joint; matching distributions give |z| < 3 on every statistic.
// Requires a finite (truncated) topic space.
std::vector<GewekeStat> geweke_compare(const GraphSpec& spec, const GewekeOptions& opt);

}  // namespace pdpnet
