#pragma once

// Whole-document dependency graph: per-sentence trees (edges head -> dependent)
// joined by one edge from each sentence root to the previous sentence root.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "mabsa/conllu.hpp"
#include "mabsa/error.hpp"

namespace mabsa::graph {

using Gid = std::size_t;

// Relation label carried by the root-chaining edges.
inline constexpr const char* kNextRoot = "next-root";

enum class Errc { EmptyDocument, UnknownNode };

inline const char* to_string(Errc e) {
  switch (e) {
    case Errc::EmptyDocument: return "EmptyDocument";
    case Errc::UnknownNode: return "UnknownNode";
  }
  return "Unknown";
}

using Error = CategorizedError<Errc>;

struct NodeRef {
  Gid gid = 0;
  std::size_t sentence_index = 0;
  int token_id = 0;
  std::string form;
  std::string deprel_to_head;  // "root" for sentence roots as given by the parse
};

enum class EdgeKind { IntraSentence, InterSentence };

struct DepEdge {
  Gid head = 0;
  Gid dep = 0;
  std::string relation;
  EdgeKind kind = EdgeKind::IntraSentence;
};

class UnifiedGraph {
 public:
  UnifiedGraph() = default;

  const std::vector<NodeRef>& nodes() const { return nodes_; }
  const std::vector<DepEdge>& edges() const { return edges_; }
  const std::vector<Gid>& sentence_roots() const { return roots_; }
  const std::vector<conllu::SentenceBlock>& blocks() const { return blocks_; }
  std::size_t size() const { return nodes_.size(); }

  const NodeRef& node(Gid g) const {
    check(g);
    return nodes_[g];
  }

  // Indices into edges() of the edges leaving / entering `g`.
  const std::vector<std::size_t>& out_edges(Gid g) const {
    check(g);
    return out_[g];
  }
  const std::vector<std::size_t>& in_edges(Gid g) const {
    check(g);
    return in_[g];
  }

  // First gid of sentence `m`.
  Gid sentence_offset(std::size_t m) const { return offsets_.at(m); }

  void check(Gid g) const {
    if (g >= nodes_.size()) {
      throw Error(Errc::UnknownNode, "gid " + std::to_string(g) + " not in graph of " +
                                         std::to_string(nodes_.size()) + " nodes");
    }
  }

 private:
  friend UnifiedGraph build_unified_graph(std::vector<conllu::SentenceBlock> blocks);

  void add_edge(DepEdge e) {
    out_[e.head].push_back(edges_.size());
    in_[e.dep].push_back(edges_.size());
    edges_.push_back(std::move(e));
  }

  std::vector<NodeRef> nodes_;
  std::vector<DepEdge> edges_;
  std::vector<Gid> roots_;
  std::vector<Gid> offsets_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::vector<std::size_t>> in_;
  std::vector<conllu::SentenceBlock> blocks_;
};

inline UnifiedGraph build_unified_graph(std::vector<conllu::SentenceBlock> blocks) {
  if (blocks.empty()) throw Error(Errc::EmptyDocument, "no sentences to build a graph from");

  UnifiedGraph g;
  std::size_t total = 0;
  for (std::size_t m = 0; m < blocks.size(); ++m) {
    conllu::validate(blocks[m], "sentence " + std::to_string(m));
    g.offsets_.push_back(total);
    total += blocks[m].tokens.size();
  }
  g.nodes_.reserve(total);
  g.out_.resize(total);
  g.in_.resize(total);

  for (std::size_t m = 0; m < blocks.size(); ++m) {
    const Gid base = g.offsets_[m];
    for (const auto& t : blocks[m].tokens) {
      g.nodes_.push_back(NodeRef{base + static_cast<Gid>(t.id - 1), m, t.id, t.form, t.deprel});
    }
    g.roots_.push_back(base + blocks[m].root_index());
  }

  // Intra-sentence edges in reading order of the dependent.
  for (std::size_t m = 0; m < blocks.size(); ++m) {
    const Gid base = g.offsets_[m];
    for (const auto& t : blocks[m].tokens) {
      if (t.head == 0) continue;
      g.add_edge(DepEdge{base + static_cast<Gid>(t.head - 1), base + static_cast<Gid>(t.id - 1),
                         t.deprel, EdgeKind::IntraSentence});
    }
  }
  for (std::size_t m = 1; m < blocks.size(); ++m) {
    g.add_edge(DepEdge{g.roots_[m], g.roots_[m - 1], kNextRoot, EdgeKind::InterSentence});
  }

  g.blocks_ = std::move(blocks);
  return g;
}

// Hop count of the shortest path from -> to following edge direction, or
// nullopt when `to` is unreachable.
inline std::optional<std::size_t> directed_distance(const UnifiedGraph& g, Gid from, Gid to) {
  g.check(from);
  g.check(to);
  if (from == to) return 0;
  std::vector<std::size_t> dist(g.size(), SIZE_MAX);
  std::deque<Gid> queue{from};
  dist[from] = 0;
  while (!queue.empty()) {
    const Gid u = queue.front();
    queue.pop_front();
    for (const std::size_t e : g.out_edges(u)) {
      const Gid v = g.edges()[e].dep;
      if (dist[v] != SIZE_MAX) continue;
      dist[v] = dist[u] + 1;
      if (v == to) return dist[v];
      queue.push_back(v);
    }
  }
  return std::nullopt;
}

// One line per edge: "gid(form) -rel-> gid(form)", in edge-list order.
inline std::string debug_dump(const UnifiedGraph& g, const std::vector<DepEdge>& edges) {
  std::string out;
  for (const auto& e : edges) {
    out += std::to_string(e.head) + "(" + g.node(e.head).form + ") -" + e.relation + "-> " +
           std::to_string(e.dep) + "(" + g.node(e.dep).form + ")\n";
  }
  return out;
}

inline std::string debug_dump(const UnifiedGraph& g) { return debug_dump(g, g.edges()); }

}  // namespace mabsa::graph
