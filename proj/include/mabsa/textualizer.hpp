#pragma once

// Renders a pruned subgraph as prompt text.
//
// Edge format: "head --rel--> dep" per retained edge (or "head --> dep" with
// relations stripped), ordered by (head gid, dep gid), joined by "; ".
//
// CoNLL-U format: retained tokens of each sentence as CoNLL-U rows. Rows are
// renumbered 1..k within the sentence so the output stays a valid tree; a
// token whose head was pruned away becomes the root (head 0, deprel "root").
// Sentence comments are kept only for fully retained sentences.

#include <string>
#include <unordered_map>
#include <vector>

#include "mabsa/aspect_pruner.hpp"
#include "mabsa/conllu.hpp"
#include "mabsa/depgraph.hpp"
#include "mabsa/strings.hpp"

namespace mabsa::textualize {

enum class Format { Edge, Conllu };

inline const char* to_string(Format f) { return f == Format::Edge ? "edge" : "conllu"; }

struct DepText {
  std::string body;
  Format format = Format::Edge;
  bool relations_stripped = false;
};

inline constexpr std::string_view kEdgeSeparator = "; ";

inline std::string render_edge(const graph::UnifiedGraph& g, const graph::DepEdge& e, bool strip_relations) {
  std::string out = g.node(e.head).form;
  out += strip_relations ? " --> " : " --" + e.relation + "--> ";
  out += g.node(e.dep).form;
  return out;
}

inline DepText edge_format(const graph::UnifiedGraph& g, const prune::PrunedSubgraph& sub, bool strip_relations) {
  std::vector<const graph::DepEdge*> ordered;
  ordered.reserve(sub.edges.size());
  for (const auto& e : sub.edges) ordered.push_back(&e);
  std::sort(ordered.begin(), ordered.end(), [](const graph::DepEdge* a, const graph::DepEdge* b) {
    return a->head != b->head ? a->head < b->head : a->dep < b->dep;
  });

  std::vector<std::string> entries;
  entries.reserve(ordered.size());
  for (const auto* e : ordered) entries.push_back(render_edge(g, *e, strip_relations));
  return DepText{text::join(entries, kEdgeSeparator), Format::Edge, strip_relations};
}

inline DepText conllu_format(const graph::UnifiedGraph& g, const prune::PrunedSubgraph& sub, bool strip_relations) {
  std::vector<bool> keep(g.size(), false);
  for (const auto v : sub.nodes) keep[v] = true;

  std::vector<conllu::SentenceBlock> out_blocks;
  for (std::size_t m = 0; m < g.blocks().size(); ++m) {
    const auto& block = g.blocks()[m];
    const graph::Gid base = g.sentence_offset(m);

    std::unordered_map<int, int> renumber;  // original id -> new id
    for (const auto& t : block.tokens) {
      if (keep[base + static_cast<graph::Gid>(t.id - 1)]) {
        const int next = static_cast<int>(renumber.size()) + 1;
        renumber.emplace(t.id, next);
      }
    }
    if (renumber.empty()) continue;

    conllu::SentenceBlock pruned;
    if (renumber.size() == block.tokens.size()) pruned.comments = block.comments;
    for (const auto& t : block.tokens) {
      const auto it = renumber.find(t.id);
      if (it == renumber.end()) continue;
      conllu::TokenRow row = t;
      row.id = it->second;
      const auto head_it = t.head == 0 ? renumber.end() : renumber.find(t.head);
      if (head_it == renumber.end()) {
        row.head = 0;
        row.deprel = "root";
      } else {
        row.head = head_it->second;
      }
      if (strip_relations) row.deprel = "_";
      pruned.tokens.push_back(std::move(row));
    }
    out_blocks.push_back(std::move(pruned));
  }
  return DepText{conllu::serialize(out_blocks), Format::Conllu, strip_relations};
}

inline DepText render(const graph::UnifiedGraph& g, const prune::PrunedSubgraph& sub, Format format, bool strip_relations) {
  return format == Format::Edge ? edge_format(g, sub, strip_relations) : conllu_format(g, sub, strip_relations);
}

}  // namespace mabsa::textualize
