#include "pdpnet/model.hpp"

#include <algorithm>

namespace pdpnet {

namespace {

void add_hyper_groups(GraphSpec& g, const ModelConfig& cfg) {
  double td = cfg.flags.no_powerlaw ? 0.0 : cfg.topic_discount;
  double vd = cfg.flags.no_powerlaw ? 0.0 : cfg.vocab_discount;
  g.hyper_groups["topic"] = PdpHyper{td, cfg.init_concentration};
  g.hyper_groups["vocab"] = PdpHyper{vd, cfg.init_concentration};
}

NodeSpec topic_root_spec(const ModelConfig& cfg) {
  NodeSpec root;
  root.id = "mu0";
  root.plate = PlateKind::Global;
  root.hyper_group = "topic";
  if (cfg.truncation > 0) {
    root.base = BaseKind::TopicFinite;
    root.base_size = cfg.truncation;
  } else {
    root.base = BaseKind::TopicUnbounded;
  }
  return root;
}

void check_vocab(const ModelConfig& cfg) {
  if (cfg.vocab_size == 0) throw ValidationError("model: vocabulary size must be positive");
}

}  // namespace

GraphSpec build_tn_graph(const ModelConfig& cfg) {
  check_vocab(cfg);
  const auto& fl = cfg.flags;
  if (fl.no_author && fl.no_mu1)
    throw ValidationError("model: cannot drop both the author level and the shared level");

  GraphSpec g;
  add_hyper_groups(g, cfg);
  g.nodes.push_back(topic_root_spec(cfg));
  if (!fl.no_author)
    g.nodes.push_back({"nu", PlateKind::PerAuthor, BaseKind::Parents, 0, "topic"});
  if (!fl.no_mu1)
    g.nodes.push_back({"mu1", PlateKind::Global, BaseKind::Parents, 0, "topic"});
  g.nodes.push_back({"tprime", PlateKind::PerDocument, BaseKind::Parents, 0, "topic"});
  if (!fl.no_hashtag)
    g.nodes.push_back({"eta", PlateKind::PerDocument, BaseKind::Parents, 0, "topic"});
  g.nodes.push_back({"theta", PlateKind::PerDocument, BaseKind::Parents, 0, "topic"});
  g.nodes.push_back({"psi", PlateKind::PerTopic, BaseKind::Vocabulary, cfg.vocab_size, "vocab"});
  if (!fl.no_hashtag)
    g.nodes.push_back({"gamma", PlateKind::PerTopic, BaseKind::Parents, 0, "vocab"});

  if (!fl.no_author) g.edges.push_back({"nu", "mu0", 1.0});
  if (!fl.no_mu1) g.edges.push_back({"mu1", "mu0", 1.0});
  if (!fl.no_author) g.edges.push_back({"tprime", "nu", 1.0});
  if (!fl.no_mu1) g.edges.push_back({"tprime", "mu1", 1.0});
  if (!fl.no_hashtag) g.edges.push_back({"eta", "tprime", 1.0});
  g.edges.push_back({"theta", "tprime", 1.0});
  if (!fl.no_hashtag && !fl.no_wordtag) g.edges.push_back({"theta", "eta", 1.0});
  if (!fl.no_hashtag) g.edges.push_back({"gamma", "psi", 1.0});

  // Hashtags are scanned before words within each document.
  if (!fl.no_hashtag) g.leaves.push_back({StreamKind::Hashtags, "eta", "gamma"});
  g.leaves.push_back({StreamKind::Words, "theta", "psi"});
  return g;
}

GraphSpec build_hdp_lda_graph(const ModelConfig& cfg) {
  check_vocab(cfg);
  GraphSpec g;
  add_hyper_groups(g, cfg);
  g.nodes.push_back(topic_root_spec(cfg));
  g.nodes.push_back({"theta", PlateKind::PerDocument, BaseKind::Parents, 0, "topic"});
  g.nodes.push_back({"psi", PlateKind::PerTopic, BaseKind::Vocabulary, cfg.vocab_size, "vocab"});
  g.edges.push_back({"theta", "mu0", 1.0});
  g.leaves.push_back({StreamKind::Words, "theta", "psi"});
  return g;
}

GraphSpec build_npatm_graph(const ModelConfig& cfg) {
  check_vocab(cfg);
  GraphSpec g;
  add_hyper_groups(g, cfg);
  g.nodes.push_back(topic_root_spec(cfg));
  g.nodes.push_back({"nu", PlateKind::PerAuthor, BaseKind::Parents, 0, "topic"});
  g.nodes.push_back({"theta", PlateKind::PerDocument, BaseKind::Parents, 0, "topic"});
  g.nodes.push_back({"psi", PlateKind::PerTopic, BaseKind::Vocabulary, cfg.vocab_size, "vocab"});
  g.edges.push_back({"nu", "mu0", 1.0});
  g.edges.push_back({"theta", "nu", 1.0});
  g.leaves.push_back({StreamKind::Words, "theta", "psi"});
  return g;
}

GraphSpec build_model(ModelKind kind, const ModelConfig& cfg) {
  switch (kind) {
    case ModelKind::Tn: return build_tn_graph(cfg);
    case ModelKind::HdpLda: return build_hdp_lda_graph(cfg);
    case ModelKind::NpAtm: return build_npatm_graph(cfg);
  }
  throw ValidationError("build_model: unknown kind");
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "tn") return ModelKind::Tn;
  if (s == "hdp-lda") return ModelKind::HdpLda;
  if (s == "npatm") return ModelKind::NpAtm;
  throw ValidationError("unknown model kind: " + s + " (expected tn, hdp-lda, or npatm)");
}

const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Tn: return "tn";
    case ModelKind::HdpLda: return "hdp-lda";
    case ModelKind::NpAtm: return "npatm";
  }
  return "?";
}

std::vector<AblationEntry> ablation_roster() {
  std::vector<AblationEntry> out;
  ModelFlags f;
  f = {}; f.no_author = true;   out.push_back({"no-author", f});
  f = {}; f.no_hashtag = true;  out.push_back({"no-hashtag", f});
  f = {}; f.no_mu1 = true;      out.push_back({"no-mu1", f});
  f = {}; f.no_wordtag = true;  out.push_back({"no-wordtag", f});
  f = {}; f.no_powerlaw = true; out.push_back({"no-powerlaw", f});
  f = {}; f.no_network = true;  out.push_back({"no-network", f});
  out.push_back({"full", ModelFlags{}});
  return out;
}

ModelFlags ablation_flags(const std::string& name) {
  for (const auto& e : ablation_roster())
    if (e.name == name) return e.flags;
  throw ValidationError("unknown ablation: " + name);
}

}  // namespace pdpnet
