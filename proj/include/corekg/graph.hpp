#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "corekg/entity_type.hpp"
#include "corekg/extraction.hpp"

namespace corekg::graph {

using extraction::EntityRecord;
using extraction::RelationshipRecord;
using extraction::SourceRef;

inline constexpr std::string_view kDescriptionSeparator = " | ";

/// Nodes are identified by exact (name, type). Ordering is (type tag, name).
struct NodeKey {
  std::string name;
  EntityType entity_type = EntityType::Person;

  bool operator==(const NodeKey&) const = default;
  bool operator<(const NodeKey& o) const {
    return std::forward_as_tuple(to_string(entity_type), name) < std::forward_as_tuple(to_string(o.entity_type), o.name);
  }
};

struct Node {
  std::string name;
  EntityType entity_type = EntityType::Person;
  std::string description;
  std::size_t degree = 0;
  std::vector<SourceRef> provenance;  // sorted, unique

  NodeKey key() const { return {name, entity_type}; }
  bool operator==(const Node&) const = default;
};

struct Edge {
  NodeKey source;
  NodeKey target;
  std::string description;
  int strength = 0;
  std::vector<SourceRef> provenance;

  bool operator==(const Edge&) const = default;
  bool operator<(const Edge& o) const {
    return std::tie(source, target, description, strength, provenance) <
           std::tie(o.source, o.target, o.description, o.strength, o.provenance);
  }
};

struct KnowledgeGraph {
  std::string case_id;
  Mode mode = Mode::CoreKG;
  std::map<NodeKey, Node> nodes;
  std::vector<Edge> edges;  // canonical order after build

  std::size_t node_count() const { return nodes.size(); }
  std::size_t edge_count() const { return edges.size(); }

  bool has_dangling_edges() const {
    return std::any_of(edges.begin(), edges.end(),
                       [&](const Edge& e) { return !nodes.count(e.source) || !nodes.count(e.target); });
  }

  /// Sorts edges canonically and recomputes every node degree.
  void normalize() {
    std::sort(edges.begin(), edges.end());
    for (auto& [k, n] : nodes) n.degree = 0;
    for (const auto& e : edges) {
      if (auto it = nodes.find(e.source); it != nodes.end()) ++it->second.degree;
      if (auto it = nodes.find(e.target); it != nodes.end()) ++it->second.degree;
    }
  }

  bool operator==(const KnowledgeGraph& o) const {
    return case_id == o.case_id && mode == o.mode && nodes == o.nodes && edges == o.edges;
  }
};

namespace detail {

inline std::vector<std::size_t> order_by_source(const std::vector<SourceRef>& sources) {
  std::vector<std::size_t> idx(sources.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return sources[a] < sources[b]; });
  return idx;
}

inline void add_provenance(std::vector<SourceRef>& list, const SourceRef& ref) {
  auto it = std::lower_bound(list.begin(), list.end(), ref);
  if (it == list.end() || !(*it == ref)) list.insert(it, ref);
}

}  // namespace detail

/// One node per distinct (name, type). Descriptions are concatenated in
/// (chunk, record index) order, identical ones kept once.
inline std::map<NodeKey, Node> merge_records(const std::vector<EntityRecord>& entities) {
  std::vector<SourceRef> sources;
  sources.reserve(entities.size());
  for (const auto& e : entities) sources.push_back(e.source);

  std::map<NodeKey, Node> nodes;
  std::map<NodeKey, std::vector<std::string>> descriptions;
  for (std::size_t i : detail::order_by_source(sources)) {
    const auto& rec = entities[i];
    NodeKey key{normalize_name(rec.name), rec.entity_type};
    if (key.name.empty()) continue;
    auto [it, inserted] = nodes.try_emplace(key);
    Node& node = it->second;
    if (inserted) {
      node.name = key.name;
      node.entity_type = key.entity_type;
    }
    detail::add_provenance(node.provenance, rec.source);
    auto& descs = descriptions[key];
    std::string d(trim(rec.description));
    if (!d.empty() && std::find(descs.begin(), descs.end(), d) == descs.end()) descs.push_back(std::move(d));
  }
  for (auto& [key, node] : nodes) {
    const auto& descs = descriptions[key];
    for (std::size_t i = 0; i < descs.size(); ++i) {
      if (i) node.description += kDescriptionSeparator;
      node.description += descs[i];
    }
  }
  return nodes;
}

struct BuildWarnings {
  std::size_t unmatched_endpoints = 0;   // name matches no node
  std::size_t ambiguous_endpoints = 0;   // name matches nodes of several types
  std::size_t dropped_edges = 0;
  bool operator==(const BuildWarnings&) const = default;
};

struct BuildResult {
  KnowledgeGraph graph;
  BuildWarnings warnings;
};

/// Relationship endpoints resolve by normalized name when exactly one node
/// carries that name; otherwise the edge is dropped and tallied. Parallel
/// edges are kept.
inline BuildResult build_graph(const std::vector<EntityRecord>& entities,
                               const std::vector<RelationshipRecord>& relationships, std::string case_id, Mode mode) {
  BuildResult result;
  auto& g = result.graph;
  g.case_id = std::move(case_id);
  g.mode = mode;
  g.nodes = merge_records(entities);

  std::multimap<std::string, NodeKey> by_name;
  for (const auto& [key, node] : g.nodes) by_name.emplace(key.name, key);

  std::vector<SourceRef> sources;
  for (const auto& r : relationships) sources.push_back(r.source);
  for (std::size_t i : detail::order_by_source(sources)) {
    const auto& rel = relationships[i];
    auto resolve = [&](const std::string& raw) -> std::optional<NodeKey> {
      auto name = normalize_name(raw);
      auto [lo, hi] = by_name.equal_range(name);
      auto n = std::distance(lo, hi);
      if (n == 1) return lo->second;
      if (n == 0) ++result.warnings.unmatched_endpoints;
      else ++result.warnings.ambiguous_endpoints;
      return std::nullopt;
    };
    auto src = resolve(rel.source_name);
    auto dst = resolve(rel.target_name);
    if (!src || !dst) {
      ++result.warnings.dropped_edges;
      continue;
    }
    Edge e;
    e.source = *src;
    e.target = *dst;
    e.description = std::string(trim(rel.description));
    e.strength = rel.strength;
    e.provenance = {rel.source};
    g.edges.push_back(std::move(e));
  }
  g.normalize();
  return result;
}

struct DegreeSummary {
  std::vector<std::pair<NodeKey, std::size_t>> ranked;  // degree desc, then (type, name)
  std::size_t node_count = 0;
  std::size_t edge_count = 0;
  std::size_t max_degree = 0;
};

inline DegreeSummary degree_stats(const KnowledgeGraph& g) {
  DegreeSummary s;
  s.node_count = g.node_count();
  s.edge_count = g.edge_count();
  for (const auto& [key, node] : g.nodes) s.ranked.emplace_back(key, node.degree);
  std::stable_sort(s.ranked.begin(), s.ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (!s.ranked.empty()) s.max_degree = s.ranked.front().second;
  return s;
}

/// Two summaries as an aligned text table (nodes, edges, max degree, top
/// node per side).
inline std::string format_summary_comparison(const DegreeSummary& baseline, const DegreeSummary& corekg) {
  auto top = [](const DegreeSummary& s) {
    return s.ranked.empty() ? std::string("-") : s.ranked.front().first.name;
  };
  const std::size_t width = std::max<std::size_t>(12, top(baseline).size() + 2);
  std::ostringstream os;
  auto row = [&](std::string_view label, const std::string& b, const std::string& c) {
    os << label;
    for (std::size_t i = label.size(); i < 12; ++i) os << ' ';
    os << b;
    for (std::size_t i = b.size(); i < width; ++i) os << ' ';
    os << c << '\n';
  };
  row("metric", "baseline", "corekg");
  row("nodes", std::to_string(baseline.node_count), std::to_string(corekg.node_count));
  row("edges", std::to_string(baseline.edge_count), std::to_string(corekg.edge_count));
  row("max_degree", std::to_string(baseline.max_degree), std::to_string(corekg.max_degree));
  row("top_node", top(baseline), top(corekg));
  return os.str();
}

}  // namespace corekg::graph
