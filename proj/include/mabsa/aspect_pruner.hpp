#pragma once

// Aspect anchoring and aspect-centered pruning of a UnifiedGraph.
//
// Directed mode keeps every node v with dist(v, anchor) <= n or
// dist(anchor, v) <= n along edge direction (ancestors and descendants within
// n hops). Undirected mode keeps every node within n hops ignoring direction.
// An unbounded depth returns the whole graph. Retained edges are exactly the
// graph edges whose two endpoints are retained.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "mabsa/depgraph.hpp"
#include "mabsa/error.hpp"
#include "mabsa/strings.hpp"

namespace mabsa::prune {

using graph::Gid;

enum class Errc { EmptyAspect, AspectNotFound, OccurrenceOutOfRange, UnknownAnchor };

inline const char* to_string(Errc e) {
  switch (e) {
    case Errc::EmptyAspect: return "EmptyAspect";
    case Errc::AspectNotFound: return "AspectNotFound";
    case Errc::OccurrenceOutOfRange: return "OccurrenceOutOfRange";
    case Errc::UnknownAnchor: return "UnknownAnchor";
  }
  return "Unknown";
}

using Error = CategorizedError<Errc>;

struct AspectAnchor {
  Gid anchor = 0;
  std::vector<Gid> span;  // contiguous, reading order
  std::string surface;
  std::size_t occurrence = 0;
};

enum class DistanceMode { Directed, Undirected };

inline const char* to_string(DistanceMode m) {
  return m == DistanceMode::Directed ? "directed" : "undirected";
}

struct PruneConfig {
  std::optional<std::size_t> depth;  // nullopt = unbounded (no pruning)
  DistanceMode mode = DistanceMode::Directed;
  bool strip_relations = false;

  static PruneConfig unbounded(DistanceMode mode = DistanceMode::Directed) { return {std::nullopt, mode, false}; }
  static PruneConfig at_depth(std::size_t n, DistanceMode mode = DistanceMode::Directed) { return {n, mode, false}; }
};

struct PrunedSubgraph {
  std::vector<Gid> nodes;             // sorted ascending
  std::vector<graph::DepEdge> edges;  // sorted by (head, dep)
  AspectAnchor anchor;
  PruneConfig config;
};

// Every start position of the occurrence-th case-insensitive match of the
// aspect's whitespace-separated tokens against consecutive node forms.
inline std::vector<Gid> find_aspect_matches(const graph::UnifiedGraph& g, const std::vector<std::string>& words) {
  std::vector<Gid> starts;
  const auto& nodes = g.nodes();
  if (words.empty() || words.size() > nodes.size()) return starts;
  for (Gid s = 0; s + words.size() <= nodes.size(); ++s) {
    bool ok = true;
    for (std::size_t k = 0; k < words.size() && ok; ++k) {
      ok = text::iequals_ascii(nodes[s + k].form, words[k]);
    }
    if (ok) starts.push_back(s);
  }
  return starts;
}

inline AspectAnchor locate_aspect(const graph::UnifiedGraph& g, const std::string& aspect, std::size_t occurrence = 0) {
  const auto words = text::split_whitespace(aspect);
  if (words.empty()) throw Error(Errc::EmptyAspect, "aspect string is empty");

  const auto starts = find_aspect_matches(g, words);
  if (starts.empty()) throw Error(Errc::AspectNotFound, "no token sequence matches '" + aspect + "'");
  if (occurrence >= starts.size()) {
    throw Error(Errc::OccurrenceOutOfRange, "occurrence " + std::to_string(occurrence) + " of '" + aspect +
                                                "' requested, " + std::to_string(starts.size()) + " found");
  }

  AspectAnchor a;
  a.surface = aspect;
  a.occurrence = occurrence;
  for (std::size_t k = 0; k < words.size(); ++k) a.span.push_back(starts[occurrence] + k);

  // Anchor on the span's syntactic head: the leftmost span token whose
  // intra-sentence head is outside the span (sentence roots qualify).
  const auto in_span = [&](Gid x) { return x >= a.span.front() && x <= a.span.back(); };
  a.anchor = a.span.front();
  for (const Gid t : a.span) {
    bool head_outside = true;
    for (const std::size_t e : g.in_edges(t)) {
      const auto& edge = g.edges()[e];
      if (edge.kind == graph::EdgeKind::IntraSentence) head_outside = !in_span(edge.head);
    }
    if (head_outside) {
      a.anchor = t;
      break;
    }
  }
  return a;
}

namespace detail {

enum class Walk { Forward, Backward, Both };

// Hop counts from `src` up to `limit` hops; SIZE_MAX marks unreached nodes.
inline std::vector<std::size_t> bounded_bfs(const graph::UnifiedGraph& g, Gid src, std::size_t limit, Walk walk) {
  std::vector<std::size_t> dist(g.size(), SIZE_MAX);
  std::deque<Gid> queue{src};
  dist[src] = 0;
  auto visit = [&](Gid from, Gid to) {
    if (dist[to] != SIZE_MAX) return;
    dist[to] = dist[from] + 1;
    if (dist[to] < limit) queue.push_back(to);
  };
  if (limit == 0) return dist;
  while (!queue.empty()) {
    const Gid u = queue.front();
    queue.pop_front();
    if (walk != Walk::Backward) {
      for (const std::size_t e : g.out_edges(u)) visit(u, g.edges()[e].dep);
    }
    if (walk != Walk::Forward) {
      for (const std::size_t e : g.in_edges(u)) visit(u, g.edges()[e].head);
    }
  }
  return dist;
}

}  // namespace detail

inline PrunedSubgraph prune(const graph::UnifiedGraph& g, const AspectAnchor& anchor, const PruneConfig& config) {
  if (anchor.anchor >= g.size()) {
    throw Error(Errc::UnknownAnchor, "anchor gid " + std::to_string(anchor.anchor) + " not in graph");
  }

  std::vector<bool> keep(g.size(), false);
  if (!config.depth) {
    std::fill(keep.begin(), keep.end(), true);
  } else if (config.mode == DistanceMode::Directed) {
    const auto down = detail::bounded_bfs(g, anchor.anchor, *config.depth, detail::Walk::Forward);
    const auto up = detail::bounded_bfs(g, anchor.anchor, *config.depth, detail::Walk::Backward);
    for (Gid v = 0; v < g.size(); ++v) keep[v] = down[v] != SIZE_MAX || up[v] != SIZE_MAX;
  } else {
    const auto any = detail::bounded_bfs(g, anchor.anchor, *config.depth, detail::Walk::Both);
    for (Gid v = 0; v < g.size(); ++v) keep[v] = any[v] != SIZE_MAX;
  }

  PrunedSubgraph sub;
  sub.anchor = anchor;
  sub.config = config;
  for (Gid v = 0; v < g.size(); ++v) {
    if (keep[v]) sub.nodes.push_back(v);
  }
  for (const auto& e : g.edges()) {
    if (keep[e.head] && keep[e.dep]) sub.edges.push_back(e);
  }
  std::sort(sub.edges.begin(), sub.edges.end(), [](const graph::DepEdge& a, const graph::DepEdge& b) {
    return a.head != b.head ? a.head < b.head : a.dep < b.dep;
  });
  return sub;
}

}  // namespace mabsa::prune
