#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pdpnet/common.hpp"
#include "pdpnet/pdp.hpp"

namespace pdpnet {

// Replication pattern of a node template.
enum class PlateKind { Global, PerAuthor, PerDocument, PerTopic };

// What a node without parents draws its dishes from. Nodes with parent edges
// use BaseKind::Parents.
enum class BaseKind {
  Parents,
  TopicUnbounded,  // uniform over an unbounded topic space: new-topic mass 1
  TopicFinite,     // uniform over a fixed set of base_size topics
  Vocabulary,      // uniform over base_size symbols
};

enum class StreamKind { Words, Hashtags };

struct NodeSpec {
  std::string id;
  PlateKind plate = PlateKind::Global;
  BaseKind base = BaseKind::Parents;
  std::uint32_t base_size = 0;  // TopicFinite / Vocabulary only
  std::string hyper_group;
};

struct EdgeSpec {
  std::string child;
  std::string parent;
  double lambda = 1.0;  // unnormalized mixture weight
};

struct LeafSpec {
  StreamKind stream = StreamKind::Words;
  std::string topic_node;   // per-document node receiving the topic customer
  std::string symbol_node;  // per-topic node receiving the symbol customer
};

struct GraphSpec {
  std::vector<NodeSpec> nodes;
  std::vector<EdgeSpec> edges;
  std::vector<LeafSpec> leaves;
  std::map<std::string, PdpHyper> hyper_groups;

  std::string to_json() const;
  static GraphSpec from_json(const std::string& text);
};

// Validated, index-resolved form of a GraphSpec.
struct CompiledGraph {
  struct Parent {
    std::uint32_t node = 0;  // template index
    double weight = 0.0;     // lambda normalized over the child's parents
  };
  struct Node {
    NodeSpec spec;
    std::vector<Parent> parents;
    bool topic_space = false;  // slots indexed by topics (else by symbols)
  };
  struct Leaf {
    StreamKind stream;
    std::uint32_t topic_node = 0;
    std::uint32_t symbol_node = 0;
  };

  GraphSpec spec;
  std::vector<Node> nodes;
  std::vector<Leaf> leaves;
  std::map<std::string, std::uint32_t> index;       // id -> template index
  std::vector<std::uint32_t> topic_order;           // topic-space nodes, parents first
  std::uint32_t topic_root = 0;                     // the single topic-space root
  bool finite_topics = false;
  std::uint32_t truncation = 0;                     // K when finite_topics

  std::uint32_t node_index(const std::string& id) const;
};

// Structural validation: endpoint existence, acyclicity, base/edge coherence,
// plate compatibility, hyper group references, leaf attachment validity.
CompiledGraph compile(const GraphSpec& spec);

// Size of the shared symbol vocabulary (the Vocabulary-base root's base_size);
// throws when the graph has no vocabulary root.
std::uint32_t graph_vocab_size(const CompiledGraph& graph);

const char* to_string(PlateKind);
const char* to_string(BaseKind);
const char* to_string(StreamKind);

}  // namespace pdpnet
