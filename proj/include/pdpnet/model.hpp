#pragma once

#include <string>

#include "pdpnet/graph.hpp"

namespace pdpnet {

// Switches that remove one ingredient of the full model at a time.
struct ModelFlags {
  bool no_author = false;     // documents draw straight from the shared level
  bool no_hashtag = false;    // drop the hashtag stream and its nodes
  bool no_mu1 = false;        // drop the shared document-level mixture component
  bool no_wordtag = false;    // words no longer condition on the tag distribution
  bool no_powerlaw = false;   // all discounts zero (plain Dirichlet-process case)
  bool no_network = false;    // network coupling off (sampler-level, graph unchanged)
};

struct ModelConfig {
  std::uint32_t vocab_size = 0;
  std::uint32_t truncation = 0;  // 0 = unbounded topic space
  double topic_discount = 0.5;
  double vocab_discount = 0.7;
  double init_concentration = 0.5;
  ModelFlags flags;
};

// The full author/tweet/hashtag graph, with any requested ablations applied.
GraphSpec build_tn_graph(const ModelConfig& cfg);

// Baselines: a flat topic model (documents share one global topic root) and a
// hierarchical author-topic model (documents draw through their author).
GraphSpec build_hdp_lda_graph(const ModelConfig& cfg);
GraphSpec build_npatm_graph(const ModelConfig& cfg);

enum class ModelKind { Tn, HdpLda, NpAtm };
GraphSpec build_model(ModelKind kind, const ModelConfig& cfg);
ModelKind model_kind_from_string(const std::string& s);
const char* to_string(ModelKind);

// Ablation registry for sweep tooling: flag-set variants in report order,
// full model last.
struct AblationEntry {
  std::string name;
  ModelFlags flags;
};
std::vector<AblationEntry> ablation_roster();
ModelFlags ablation_flags(const std::string& name);

}  // namespace pdpnet
