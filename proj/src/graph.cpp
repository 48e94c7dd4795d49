#include "pdpnet/graph.hpp"

#include <algorithm>
#include <functional>

#include "json.hpp"

namespace pdpnet {

namespace {

using nlohmann::ordered_json;

PlateKind plate_from(const std::string& s) {
  if (s == "global") return PlateKind::Global;
  if (s == "author") return PlateKind::PerAuthor;
  if (s == "document") return PlateKind::PerDocument;
  if (s == "topic") return PlateKind::PerTopic;
  throw ValidationError("unknown plate kind: " + s);
}

BaseKind base_from(const std::string& s) {
  if (s == "parents") return BaseKind::Parents;
  if (s == "topic-unbounded") return BaseKind::TopicUnbounded;
  if (s == "topic-finite") return BaseKind::TopicFinite;
  if (s == "vocabulary") return BaseKind::Vocabulary;
  throw ValidationError("unknown base kind: " + s);
}

StreamKind stream_from(const std::string& s) {
  if (s == "words") return StreamKind::Words;
  if (s == "hashtags") return StreamKind::Hashtags;
  throw ValidationError("unknown stream kind: " + s);
}

}  // namespace

const char* to_string(PlateKind p) {
  switch (p) {
    case PlateKind::Global: return "global";
    case PlateKind::PerAuthor: return "author";
    case PlateKind::PerDocument: return "document";
    case PlateKind::PerTopic: return "topic";
  }
  return "?";
}

const char* to_string(BaseKind b) {
  switch (b) {
    case BaseKind::Parents: return "parents";
    case BaseKind::TopicUnbounded: return "topic-unbounded";
    case BaseKind::TopicFinite: return "topic-finite";
    case BaseKind::Vocabulary: return "vocabulary";
  }
  return "?";
}

const char* to_string(StreamKind s) {
  return s == StreamKind::Words ? "words" : "hashtags";
}

std::string GraphSpec::to_json() const {
  ordered_json j;
  j["nodes"] = ordered_json::array();
  for (const auto& n : nodes) {
    ordered_json node{{"id", n.id},
                      {"plate", to_string(n.plate)},
                      {"base", to_string(n.base)},
                      {"hyper_group", n.hyper_group}};
    if (n.base == BaseKind::TopicFinite || n.base == BaseKind::Vocabulary)
      node["base_size"] = n.base_size;
    j["nodes"].push_back(node);
  }
  j["edges"] = ordered_json::array();
  for (const auto& e : edges)
    j["edges"].push_back({{"child", e.child}, {"parent", e.parent}, {"lambda", e.lambda}});
  j["leaves"] = ordered_json::array();
  for (const auto& l : leaves)
    j["leaves"].push_back({{"stream", to_string(l.stream)},
                           {"topic_node", l.topic_node},
                           {"symbol_node", l.symbol_node}});
  j["hyper_groups"] = ordered_json::object();
  for (const auto& [name, h] : hyper_groups)
    j["hyper_groups"][name] = {{"discount", h.discount}, {"concentration", h.concentration}};
  return j.dump(2);
}

GraphSpec GraphSpec::from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw DataError(std::string("graph spec parse failure: ") + e.what());
  }
  GraphSpec g;
  for (const auto& node : j.at("nodes")) {
    NodeSpec n;
    n.id = node.at("id").get<std::string>();
    n.plate = plate_from(node.at("plate").get<std::string>());
    n.base = base_from(node.at("base").get<std::string>());
    n.base_size = node.value("base_size", 0u);
    n.hyper_group = node.at("hyper_group").get<std::string>();
    g.nodes.push_back(std::move(n));
  }
  for (const auto& edge : j.at("edges"))
    g.edges.push_back({edge.at("child").get<std::string>(), edge.at("parent").get<std::string>(),
                       edge.value("lambda", 1.0)});
  for (const auto& leaf : j.at("leaves"))
    g.leaves.push_back({stream_from(leaf.at("stream").get<std::string>()),
                        leaf.at("topic_node").get<std::string>(),
                        leaf.at("symbol_node").get<std::string>()});
  for (const auto& [name, h] : j.at("hyper_groups").items())
    g.hyper_groups[name] =
        PdpHyper{h.at("discount").get<double>(), h.at("concentration").get<double>()};
  return g;
}

std::uint32_t CompiledGraph::node_index(const std::string& id) const {
  auto it = index.find(id);
  if (it == index.end()) throw ValidationError("unknown node id: " + id);
  return it->second;
}

CompiledGraph compile(const GraphSpec& spec) {
  CompiledGraph g;
  g.spec = spec;

  for (std::uint32_t i = 0; i < spec.nodes.size(); ++i) {
    const NodeSpec& n = spec.nodes[i];
    if (n.id.empty()) throw ValidationError("node with empty id");
    if (!g.index.emplace(n.id, i).second) throw ValidationError("duplicate node id: " + n.id);
    if (spec.hyper_groups.find(n.hyper_group) == spec.hyper_groups.end())
      throw ValidationError("node " + n.id + " references unknown hyper group '" +
                            n.hyper_group + "'");
    if ((n.base == BaseKind::TopicFinite || n.base == BaseKind::Vocabulary) && n.base_size == 0)
      throw ValidationError("node " + n.id + " needs base_size > 0");
    g.nodes.push_back({n, {}, false});
  }
  for (const auto& [name, hyper] : spec.hyper_groups) {
    (void)name;
    hyper.validate();
  }

  for (const auto& e : spec.edges) {
    auto c = g.node_index(e.child), p = g.node_index(e.parent);
    if (c == p) throw ValidationError("self edge on node " + e.child);
    if (e.lambda <= 0.0) throw ValidationError("edge weight must be positive: " + e.child);
    if (g.nodes[c].spec.base != BaseKind::Parents)
      throw ValidationError("node " + e.child + " has both a root base and parents");
    g.nodes[c].parents.push_back({p, e.lambda});
  }
  for (auto& node : g.nodes) {
    if (node.spec.base == BaseKind::Parents && node.parents.empty())
      throw ValidationError("node " + node.spec.id + " has neither parents nor a base");
    double total = 0.0;
    for (auto& p : node.parents) total += p.weight;
    for (auto& p : node.parents) p.weight /= total;
  }

  // Plate compatibility of each edge.
  for (const auto& node : g.nodes) {
    for (const auto& par : node.parents) {
      PlateKind c = node.spec.plate, p = g.nodes[par.node].spec.plate;
      bool ok = false;
      switch (c) {
        case PlateKind::Global: ok = p == PlateKind::Global; break;
        case PlateKind::PerAuthor: ok = p == PlateKind::Global; break;
        case PlateKind::PerDocument:
          ok = p == PlateKind::PerDocument || p == PlateKind::PerAuthor || p == PlateKind::Global;
          break;
        case PlateKind::PerTopic: ok = p == PlateKind::PerTopic; break;
      }
      if (!ok)
        throw ValidationError("edge " + node.spec.id + " -> " + g.nodes[par.node].spec.id +
                              " joins incompatible plates");
    }
  }

  // Acyclicity via DFS; also classify topic-space vs symbol-space nodes.
  std::vector<int> mark(g.nodes.size(), 0);
  std::function<void(std::uint32_t)> visit = [&](std::uint32_t i) {
    if (mark[i] == 1) throw ValidationError("cycle through node " + g.nodes[i].spec.id);
    if (mark[i] == 2) return;
    mark[i] = 1;
    for (const auto& p : g.nodes[i].parents) visit(p.node);
    mark[i] = 2;
    g.topic_order.push_back(i);  // parents precede children
  };
  for (std::uint32_t i = 0; i < g.nodes.size(); ++i) visit(i);

  for (auto& node : g.nodes)
    node.topic_space = node.spec.plate != PlateKind::PerTopic;
  for (const auto& node : g.nodes)
    for (const auto& p : node.parents)
      if (node.topic_space != g.nodes[p.node].topic_space)
        throw ValidationError("edge " + node.spec.id + " crosses topic/symbol spaces");

  {
    std::vector<std::uint32_t> order;
    for (auto i : g.topic_order)
      if (g.nodes[i].topic_space) order.push_back(i);
    g.topic_order = std::move(order);
  }

  // Exactly one topic-space root, carrying the topic base.
  std::vector<std::uint32_t> topic_roots;
  for (std::uint32_t i = 0; i < g.nodes.size(); ++i) {
    const auto& node = g.nodes[i];
    if (node.topic_space && node.parents.empty()) {
      if (node.spec.base != BaseKind::TopicUnbounded && node.spec.base != BaseKind::TopicFinite)
        throw ValidationError("topic-space root " + node.spec.id + " needs a topic base");
      topic_roots.push_back(i);
    }
    if (!node.topic_space && node.parents.empty() && node.spec.base != BaseKind::Vocabulary)
      throw ValidationError("symbol-space root " + node.spec.id + " needs a vocabulary base");
  }
  if (topic_roots.size() != 1)
    throw ValidationError("graph must have exactly one topic-space root");
  g.topic_root = topic_roots[0];
  g.finite_topics = g.nodes[g.topic_root].spec.base == BaseKind::TopicFinite;
  g.truncation = g.finite_topics ? g.nodes[g.topic_root].spec.base_size : 0;

  // Leaves: a words leaf is required; streams must not repeat; attachments
  // must land on the right plates.
  if (spec.leaves.empty()) throw ValidationError("graph has no observation leaves");
  bool seen_words = false, seen_tags = false;
  for (const auto& l : spec.leaves) {
    auto t = g.node_index(l.topic_node), s = g.node_index(l.symbol_node);
    if (g.nodes[t].spec.plate != PlateKind::PerDocument || !g.nodes[t].topic_space)
      throw ValidationError("leaf topic node " + l.topic_node +
                            " must be a per-document topic node");
    if (g.nodes[s].spec.plate != PlateKind::PerTopic)
      throw ValidationError("leaf symbol node " + l.symbol_node + " must be a per-topic node");
    bool& seen = l.stream == StreamKind::Words ? seen_words : seen_tags;
    if (seen) throw ValidationError("duplicate leaf stream");
    seen = true;
    g.leaves.push_back({l.stream, t, s});
  }
  if (!seen_words) throw ValidationError("graph must attach a words stream");

  // Symbol-space vocabulary sizes must agree.
  std::uint32_t vocab = 0;
  for (const auto& node : g.nodes)
    if (node.spec.base == BaseKind::Vocabulary) {
      if (vocab == 0) vocab = node.spec.base_size;
      if (vocab != node.spec.base_size)
        throw ValidationError("vocabulary base sizes disagree");
    }
  if (vocab == 0) throw ValidationError("no vocabulary base in graph");

  return g;
}

std::uint32_t graph_vocab_size(const CompiledGraph& graph) {
  for (const auto& node : graph.nodes)
    if (node.spec.base == BaseKind::Vocabulary) return node.spec.base_size;
  throw ValidationError("no vocabulary base in graph");
}

}  // namespace pdpnet
