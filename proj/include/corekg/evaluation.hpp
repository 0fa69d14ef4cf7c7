#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "corekg/entity_type.hpp"
#include "corekg/error.hpp"
#include "corekg/graph.hpp"
#include "corekg/graph_io.hpp"
#include "corekg/text.hpp"

namespace corekg::eval {

// ---------------------------------------------------------------------------
// Fuzzy matching

inline std::size_t lcs_length(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (char ca : a) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = ca == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Best normalized indel similarity (0-100) between the shorter normalized
/// string and every equal-length window of the longer one.
///
/// For a window w with |w| = |s| the indel distance is 2(|s| - LCS), so the
/// per-window score reduces to round(100 * LCS / |s|), rounded half up.
inline int partial_ratio(std::string_view a, std::string_view b) {
  const std::string na = normalize_name(a);
  const std::string nb = normalize_name(b);
  if (na.empty() || nb.empty()) throw Error(Errc::EmptyString, "partial_ratio needs two non-empty strings");
  std::string_view s = na, l = nb;
  if (s.size() > l.size()) std::swap(s, l);
  if (l.find(s) != std::string_view::npos) return 100;

  std::size_t best = 0;
  for (std::size_t off = 0; off + s.size() <= l.size() && best < s.size(); ++off)
    best = std::max(best, lcs_length(s, l.substr(off, s.size())));
  return static_cast<int>((200 * best + s.size()) / (2 * s.size()));
}

// ---------------------------------------------------------------------------
// Clusters

struct DuplicateCluster {
  EntityType entity_type = EntityType::Person;
  std::set<std::string> members;

  bool operator==(const DuplicateCluster&) const = default;
  bool operator<(const DuplicateCluster& o) const {
    return std::forward_as_tuple(to_string(entity_type), members) <
           std::forward_as_tuple(to_string(o.entity_type), o.members);
  }
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> rank_;
};

inline constexpr int kDefaultThreshold = 75;

/// Connected components of the per-type similarity graph (edge when
/// partial_ratio >= threshold). Singletons included; never crosses types.
inline std::vector<DuplicateCluster> cluster_names(const std::vector<graph::NodeKey>& keys,
                                                   int threshold = kDefaultThreshold) {
  std::map<EntityType, std::vector<std::string>> by_type;
  for (const auto& k : keys) by_type[k.entity_type].push_back(k.name);

  std::vector<DuplicateCluster> clusters;
  for (auto& [type, names] : by_type) {
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    UnionFind uf(names.size());
    for (std::size_t i = 0; i < names.size(); ++i)
      for (std::size_t j = i + 1; j < names.size(); ++j)
        if (uf.find(i) != uf.find(j) && partial_ratio(names[i], names[j]) >= threshold) uf.unite(i, j);
    std::map<std::size_t, DuplicateCluster> groups;
    for (std::size_t i = 0; i < names.size(); ++i) {
      auto& c = groups[uf.find(i)];
      c.entity_type = type;
      c.members.insert(names[i]);
    }
    for (auto& [root, c] : groups) clusters.push_back(std::move(c));
  }
  std::sort(clusters.begin(), clusters.end());
  return clusters;
}

inline std::vector<DuplicateCluster> cluster_duplicates(const graph::KnowledgeGraph& g,
                                                        int threshold = kDefaultThreshold) {
  std::vector<graph::NodeKey> keys;
  keys.reserve(g.nodes.size());
  for (const auto& [k, n] : g.nodes) keys.push_back(k);
  return cluster_names(keys, threshold);
}

// ---------------------------------------------------------------------------
// Expert overrides

/// Moves `member` into the cluster named `label`. A label is first looked up
/// among clusters created by earlier directives, then as the name of an
/// existing member of the same type; otherwise a new cluster is started.
struct OverrideDirective {
  std::string case_id;
  EntityType entity_type = EntityType::Person;
  std::string member;
  std::string label;
};

/// Tab-separated lines: case_id, type, member name, directive. Directive is
/// `split` (member becomes its own cluster) or `split:<label>`.
inline std::vector<OverrideDirective> parse_overrides(std::string_view content) {
  std::vector<OverrideDirective> out;
  std::size_t line_no = 0;
  for (const auto& raw : split_lines(content)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto cols = split(line, "\t");
    if (cols.size() != 4) throw ParseError(Errc::FormatError, line_no, "expected 4 tab-separated columns");
    OverrideDirective d;
    d.case_id = std::string(trim(cols[0]));
    auto type = parse_entity_type(cols[1]);
    if (!type) throw ParseError(Errc::FormatError, line_no, "unknown entity type '" + cols[1] + "'");
    d.entity_type = *type;
    d.member = normalize_name(cols[2]);
    std::string directive(trim(cols[3]));
    if (d.case_id.empty() || d.member.empty()) throw ParseError(Errc::FormatError, line_no, "empty case id or member");
    if (directive == "split") d.label = d.member;
    else if (directive.rfind("split:", 0) == 0 && !trim(directive.substr(6)).empty())
      d.label = normalize_name(directive.substr(6));
    else throw ParseError(Errc::FormatError, line_no, "directive must be 'split' or 'split:<label>'");
    out.push_back(std::move(d));
  }
  return out;
}

inline std::vector<DuplicateCluster> apply_overrides(std::vector<DuplicateCluster> clusters,
                                                     const std::vector<OverrideDirective>& directives,
                                                     std::string_view case_id, bool strict = true) {
  std::map<std::pair<EntityType, std::string>, std::size_t> labels;
  auto find_member = [&](EntityType t, const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < clusters.size(); ++i)
      if (clusters[i].entity_type == t && clusters[i].members.count(name)) return i;
    return std::nullopt;
  };

  for (const auto& d : directives) {
    if (d.case_id != case_id) continue;
    auto from = find_member(d.entity_type, d.member);
    if (!from) {
      if (strict)
        throw Error(Errc::UnknownMember, "override names absent node " + std::string(to_string(d.entity_type)) +
                                             " '" + d.member + "' in case " + std::string(case_id));
      continue;
    }
    clusters[*from].members.erase(d.member);

    std::optional<std::size_t> target;
    if (auto it = labels.find({d.entity_type, d.label}); it != labels.end()) target = it->second;
    else if (d.label != d.member) target = find_member(d.entity_type, d.label);
    if (!target) {
      clusters.push_back({d.entity_type, {}});
      target = clusters.size() - 1;
    }
    clusters[*target].members.insert(d.member);
    labels[{d.entity_type, d.label}] = *target;
  }
  clusters.erase(std::remove_if(clusters.begin(), clusters.end(),
                                [](const DuplicateCluster& c) { return c.members.empty(); }),
                 clusters.end());
  std::sort(clusters.begin(), clusters.end());
  return clusters;
}

// ---------------------------------------------------------------------------
// Rates

struct DuplicationMetrics {
  std::size_t duplicate_count = 0;
  double duplication_rate_pct = 0.0;
};

/// duplicate_count = sum over clusters of (|C| - 1).
inline DuplicationMetrics duplication_metrics(const std::vector<DuplicateCluster>& clusters, std::size_t total_nodes) {
  if (total_nodes == 0) throw Error(Errc::ZeroNodes, "duplication rate of an empty graph");
  std::size_t members = 0;
  DuplicationMetrics m;
  for (const auto& c : clusters) {
    members += c.members.size();
    if (!c.members.empty()) m.duplicate_count += c.members.size() - 1;
  }
  if (members > total_nodes) throw Error(Errc::InvalidArgument, "clusters hold more members than the graph has nodes");
  m.duplication_rate_pct = 100.0 * static_cast<double>(m.duplicate_count) / static_cast<double>(total_nodes);
  return m;
}

/// Names judged non-informative: per case, plus terms applied to every case.
struct NoiseAnnotation {
  std::map<std::string, std::set<std::string>> per_case;
  std::set<std::string> global_terms;

  bool empty() const { return per_case.empty() && global_terms.empty(); }
};

/// Tab-separated `case_id<TAB>name`; case id `*` applies the name to every case.
inline NoiseAnnotation parse_noise_annotation(std::string_view content) {
  NoiseAnnotation a;
  std::size_t line_no = 0;
  for (const auto& raw : split_lines(content)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto cols = split(line, "\t");
    if (cols.size() != 2) throw ParseError(Errc::FormatError, line_no, "expected case_id<TAB>name");
    std::string case_id(trim(cols[0]));
    std::string name = normalize_name(cols[1]);
    if (case_id.empty() || name.empty()) throw ParseError(Errc::FormatError, line_no, "empty case id or name");
    if (case_id == "*") a.global_terms.insert(name);
    else a.per_case[case_id].insert(name);
  }
  return a;
}

struct NoiseMetrics {
  std::size_t noise_count = 0;
  double noise_rate_pct = 0.0;
};

/// Counts nodes whose normalized name is annotated for this case. In strict
/// mode every per-case annotation must name an existing node.
inline NoiseMetrics noise_metrics(const graph::KnowledgeGraph& g, const NoiseAnnotation& annotation, bool strict = true) {
  if (g.nodes.empty()) throw Error(Errc::ZeroNodes, "noise rate of an empty graph");
  std::set<std::string> names = annotation.global_terms;
  if (auto it = annotation.per_case.find(g.case_id); it != annotation.per_case.end()) {
    if (strict)
      for (const auto& n : it->second) {
        bool present = std::any_of(g.nodes.begin(), g.nodes.end(), [&](const auto& kv) { return kv.first.name == n; });
        if (!present) throw Error(Errc::UnknownMember, "noise annotation names absent node '" + n + "' in case " + g.case_id);
      }
    names.insert(it->second.begin(), it->second.end());
  }
  NoiseMetrics m;
  for (const auto& [key, node] : g.nodes)
    if (names.count(key.name)) ++m.noise_count;
  m.noise_rate_pct = 100.0 * static_cast<double>(m.noise_count) / static_cast<double>(g.nodes.size());
  return m;
}

inline double round2(double x) { return std::round(x * 100.0) / 100.0; }

inline std::string format2(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", round2(x) == 0.0 ? 0.0 : round2(x));
  return buf;
}

struct Comparison {
  double absolute_drop = 0.0;         // percentage points, full precision
  double relative_improvement = 0.0;  // percent of baseline, full precision
};

inline Comparison comparison_metrics(double baseline_pct, double corekg_pct) {
  if (baseline_pct == 0.0) throw Error(Errc::DivisionByZero, "relative improvement against a zero baseline");
  Comparison c;
  c.absolute_drop = baseline_pct - corekg_pct;
  c.relative_improvement = 100.0 * (baseline_pct - corekg_pct) / baseline_pct;
  return c;
}

// ---------------------------------------------------------------------------
// Per-case evaluation and aggregation

struct EvalOptions {
  int threshold = kDefaultThreshold;
  std::vector<OverrideDirective> overrides;
  NoiseAnnotation noise;
  bool strict = true;
};

struct CaseMetrics {
  std::string case_id;
  std::size_t total_nodes = 0;
  std::size_t cluster_count = 0;
  std::size_t duplicate_count = 0;
  double duplication_rate_pct = 0.0;
  std::size_t noise_count = 0;
  double noise_rate_pct = 0.0;

  nlohmann::json to_json() const {
    return {{"case_id", case_id},
            {"total_nodes", total_nodes},
            {"cluster_count", cluster_count},
            {"duplicate_count", duplicate_count},
            {"duplication_rate_pct", duplication_rate_pct},
            {"noise_count", noise_count},
            {"noise_rate_pct", noise_rate_pct}};
  }

  static CaseMetrics from_json(const nlohmann::json& j) {
    CaseMetrics m;
    m.case_id = j.at("case_id").get<std::string>();
    m.total_nodes = j.at("total_nodes").get<std::size_t>();
    m.cluster_count = j.value("cluster_count", std::size_t{0});
    m.duplicate_count = j.value("duplicate_count", std::size_t{0});
    m.duplication_rate_pct = j.at("duplication_rate_pct").get<double>();
    m.noise_count = j.value("noise_count", std::size_t{0});
    m.noise_rate_pct = j.at("noise_rate_pct").get<double>();
    return m;
  }
};

inline CaseMetrics evaluate_graph(const graph::KnowledgeGraph& g, const EvalOptions& options) {
  auto clusters = apply_overrides(cluster_duplicates(g, options.threshold), options.overrides, g.case_id, options.strict);
  auto dup = duplication_metrics(clusters, g.node_count());
  auto noise = noise_metrics(g, options.noise, options.strict);
  CaseMetrics m;
  m.case_id = g.case_id;
  m.total_nodes = g.node_count();
  m.cluster_count = clusters.size();
  m.duplicate_count = dup.duplicate_count;
  m.duplication_rate_pct = dup.duplication_rate_pct;
  m.noise_count = noise.noise_count;
  m.noise_rate_pct = noise.noise_rate_pct;
  return m;
}

enum class Averaging { Macro, Micro };

struct AggregateRates {
  std::size_t cases = 0;
  std::size_t total_nodes = 0;
  std::size_t duplicate_count = 0;
  std::size_t noise_count = 0;
  double duplication_rate_pct = 0.0;
  double noise_rate_pct = 0.0;
};

struct MetricRow {
  std::string metric;
  double baseline_pct = 0.0;
  double corekg_pct = 0.0;
  double absolute_drop = 0.0;
  std::optional<double> relative_improvement;  // absent when baseline is 0
};

struct MetricsReport {
  Averaging averaging = Averaging::Macro;
  std::vector<std::pair<CaseMetrics, CaseMetrics>> per_case;  // (baseline, corekg), by case id
  AggregateRates baseline;
  AggregateRates corekg;
  std::vector<MetricRow> rows;  // duplication, noise
};

inline AggregateRates aggregate(const std::vector<CaseMetrics>& cases, Averaging averaging) {
  AggregateRates a;
  a.cases = cases.size();
  double dup_sum = 0.0, noise_sum = 0.0;
  for (const auto& c : cases) {
    a.total_nodes += c.total_nodes;
    a.duplicate_count += c.duplicate_count;
    a.noise_count += c.noise_count;
    dup_sum += c.duplication_rate_pct;
    noise_sum += c.noise_rate_pct;
  }
  if (cases.empty()) return a;
  if (averaging == Averaging::Macro) {
    a.duplication_rate_pct = dup_sum / static_cast<double>(cases.size());
    a.noise_rate_pct = noise_sum / static_cast<double>(cases.size());
  } else if (a.total_nodes > 0) {
    a.duplication_rate_pct = 100.0 * static_cast<double>(a.duplicate_count) / static_cast<double>(a.total_nodes);
    a.noise_rate_pct = 100.0 * static_cast<double>(a.noise_count) / static_cast<double>(a.total_nodes);
  }
  return a;
}

inline MetricRow make_row(std::string metric, double baseline_pct, double corekg_pct) {
  MetricRow r;
  r.metric = std::move(metric);
  r.baseline_pct = baseline_pct;
  r.corekg_pct = corekg_pct;
  r.absolute_drop = baseline_pct - corekg_pct;
  if (baseline_pct != 0.0) r.relative_improvement = comparison_metrics(baseline_pct, corekg_pct).relative_improvement;
  return r;
}

inline MetricsReport aggregate_report(const std::vector<CaseMetrics>& baseline, const std::vector<CaseMetrics>& corekg,
                                      Averaging averaging = Averaging::Macro) {
  std::map<std::string, CaseMetrics> b, c;
  for (const auto& m : baseline) b[m.case_id] = m;
  for (const auto& m : corekg) c[m.case_id] = m;
  for (const auto& [id, m] : b)
    if (!c.count(id)) throw Error(Errc::CaseMismatch, "case " + id + " has no corekg result");
  for (const auto& [id, m] : c)
    if (!b.count(id)) throw Error(Errc::CaseMismatch, "case " + id + " has no baseline result");
  if (b.size() != baseline.size() || c.size() != corekg.size())
    throw Error(Errc::CaseMismatch, "duplicate case id in a run");

  MetricsReport r;
  r.averaging = averaging;
  for (const auto& [id, m] : b) r.per_case.emplace_back(m, c.at(id));
  r.baseline = aggregate(baseline, averaging);
  r.corekg = aggregate(corekg, averaging);
  r.rows.push_back(make_row("node_duplication_rate", r.baseline.duplication_rate_pct, r.corekg.duplication_rate_pct));
  r.rows.push_back(make_row("noise_rate", r.baseline.noise_rate_pct, r.corekg.noise_rate_pct));
  return r;
}

/// Per-case comparison table, one row per case, suitable for bar charts.
inline std::string per_case_table(const MetricsReport& r) {
  std::string out =
      "case_id,baseline_total_nodes,corekg_total_nodes,baseline_duplicate_count,corekg_duplicate_count,"
      "baseline_duplication_rate_pct,corekg_duplication_rate_pct,baseline_noise_count,corekg_noise_count,"
      "baseline_noise_rate_pct,corekg_noise_rate_pct\n";
  for (const auto& [b, c] : r.per_case) {
    out += graph::csv_field(b.case_id);
    out += "," + std::to_string(b.total_nodes) + "," + std::to_string(c.total_nodes);
    out += "," + std::to_string(b.duplicate_count) + "," + std::to_string(c.duplicate_count);
    out += "," + format2(b.duplication_rate_pct) + "," + format2(c.duplication_rate_pct);
    out += "," + std::to_string(b.noise_count) + "," + std::to_string(c.noise_count);
    out += "," + format2(b.noise_rate_pct) + "," + format2(c.noise_rate_pct) + "\n";
  }
  return out;
}

inline std::string comparison_table(const MetricsReport& r) {
  std::string out = "metric,baseline_pct,corekg_pct,absolute_drop_pct_points,relative_improvement_pct\n";
  for (const auto& row : r.rows) {
    out += row.metric + "," + format2(row.baseline_pct) + "," + format2(row.corekg_pct) + "," +
           format2(row.absolute_drop) + "," + (row.relative_improvement ? format2(*row.relative_improvement) : "NA") +
           "\n";
  }
  return out;
}

inline nlohmann::json summary_json(const MetricsReport& r) {
  auto agg = [](const AggregateRates& a) {
    return nlohmann::json{{"cases", a.cases},
                          {"total_nodes", a.total_nodes},
                          {"duplicate_count", a.duplicate_count},
                          {"noise_count", a.noise_count},
                          {"duplication_rate_pct", round2(a.duplication_rate_pct)},
                          {"noise_rate_pct", round2(a.noise_rate_pct)}};
  };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"metric", row.metric},
                    {"baseline_pct", round2(row.baseline_pct)},
                    {"corekg_pct", round2(row.corekg_pct)},
                    {"absolute_drop_pct_points", round2(row.absolute_drop)},
                    {"relative_improvement_pct",
                     row.relative_improvement ? nlohmann::json(round2(*row.relative_improvement)) : nlohmann::json()}});
  return {{"averaging", r.averaging == Averaging::Macro ? "macro" : "micro"},
          {"baseline", agg(r.baseline)},
          {"corekg", agg(r.corekg)},
          {"comparison", rows}};
}

}  // namespace corekg::eval
