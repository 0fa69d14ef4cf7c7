#pragma once

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <charconv>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "corekg/graph.hpp"

namespace corekg::graph {

// ---------------------------------------------------------------------------
// Provenance encoding: "case:chunk;case:chunk"

inline std::string encode_provenance(const std::vector<SourceRef>& refs) {
  std::string out;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (i) out += ';';
    out += refs[i].case_id + ":" + std::to_string(refs[i].chunk_id);
  }
  return out;
}

inline std::vector<SourceRef> decode_provenance(std::string_view text) {
  std::vector<SourceRef> refs;
  if (text.empty()) return refs;
  for (const auto& part : split(text, ";")) {
    auto colon = part.rfind(':');
    if (colon == std::string::npos) throw Error(Errc::FormatError, "bad provenance entry '" + part + "'");
    SourceRef r;
    r.case_id = part.substr(0, colon);
    auto num = std::string_view(part).substr(colon + 1);
    auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), r.chunk_id);
    if (ec != std::errc() || p != num.data() + num.size())
      throw Error(Errc::FormatError, "bad chunk id in provenance '" + part + "'");
    refs.push_back(std::move(r));
  }
  return refs;
}

// ---------------------------------------------------------------------------
// GraphML

/// XML 1.0 text escaping. Control characters other than tab and newline
/// cannot be represented and are dropped; CR is kept as a character reference.
inline std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      case '\r': out += "&#13;"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20 && c != '\t' && c != '\n') break;
        out += c;
    }
  }
  return out;
}

/// Byte-stable for equal graphs: nodes in (type, name) order, edges in
/// canonical order, ids assigned by position.
inline std::string serialize_graphml(const KnowledgeGraph& graph) {
  KnowledgeGraph g = graph;
  g.normalize();

  std::map<NodeKey, std::size_t> ids;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\" "
        "xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" "
        "xsi:schemaLocation=\"http://graphml.graphdrawing.org/xmlns "
        "http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd\">\n"
        "  <key id=\"g_case\" for=\"graph\" attr.name=\"case_id\" attr.type=\"string\"/>\n"
        "  <key id=\"g_mode\" for=\"graph\" attr.name=\"mode\" attr.type=\"string\"/>\n"
        "  <key id=\"n_name\" for=\"node\" attr.name=\"name\" attr.type=\"string\"/>\n"
        "  <key id=\"n_type\" for=\"node\" attr.name=\"type\" attr.type=\"string\"/>\n"
        "  <key id=\"n_desc\" for=\"node\" attr.name=\"description\" attr.type=\"string\"/>\n"
        "  <key id=\"n_degree\" for=\"node\" attr.name=\"degree\" attr.type=\"int\"/>\n"
        "  <key id=\"n_source\" for=\"node\" attr.name=\"source_id\" attr.type=\"string\"/>\n"
        "  <key id=\"e_desc\" for=\"edge\" attr.name=\"description\" attr.type=\"string\"/>\n"
        "  <key id=\"e_strength\" for=\"edge\" attr.name=\"strength\" attr.type=\"int\"/>\n"
        "  <key id=\"e_source\" for=\"edge\" attr.name=\"source_id\" attr.type=\"string\"/>\n"
        "  <graph id=\"G\" edgedefault=\"directed\">\n";
  os << "    <data key=\"g_case\">" << xml_escape(g.case_id) << "</data>\n";
  os << "    <data key=\"g_mode\">" << to_string(g.mode) << "</data>\n";
  for (const auto& [key, node] : g.nodes) {
    const std::size_t id = ids.size();
    ids.emplace(key, id);
    os << "    <node id=\"n" << id << "\">\n";
    os << "      <data key=\"n_name\">" << xml_escape(node.name) << "</data>\n";
    os << "      <data key=\"n_type\">" << to_string(node.entity_type) << "</data>\n";
    os << "      <data key=\"n_desc\">" << xml_escape(node.description) << "</data>\n";
    os << "      <data key=\"n_degree\">" << node.degree << "</data>\n";
    os << "      <data key=\"n_source\">" << xml_escape(encode_provenance(node.provenance)) << "</data>\n";
    os << "    </node>\n";
  }
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const auto& e = g.edges[i];
    os << "    <edge id=\"e" << i << "\" source=\"n" << ids.at(e.source) << "\" target=\"n" << ids.at(e.target)
       << "\">\n";
    os << "      <data key=\"e_desc\">" << xml_escape(e.description) << "</data>\n";
    os << "      <data key=\"e_strength\">" << e.strength << "</data>\n";
    os << "      <data key=\"e_source\">" << xml_escape(encode_provenance(e.provenance)) << "</data>\n";
    os << "    </edge>\n";
  }
  os << "  </graph>\n</graphml>\n";
  return os.str();
}

namespace detail {

inline KnowledgeGraph graph_from_ptree(const boost::property_tree::ptree& tree) {
  namespace pt = boost::property_tree;
  // Attribute names such as attr.name contain the default path separator.
  auto attr = [](const pt::ptree& elem, const std::string& name) {
    return elem.get<std::string>(pt::ptree::path_type("<xmlattr>/" + name, '/'));
  };
  const auto& root = tree.get_child("graphml");
  std::map<std::string, std::string> key_names;
  for (const auto& [tag, child] : root)
    if (tag == "key") key_names[attr(child, "id")] = attr(child, "attr.name");

  auto data_of = [&](const pt::ptree& elem) {
    std::map<std::string, std::string> values;
    for (const auto& [tag, child] : elem)
      if (tag == "data") {
        auto id = attr(child, "key");
        auto it = key_names.find(id);
        values[it != key_names.end() ? it->second : id] = child.get_value<std::string>();
      }
    return values;
  };
  auto to_int = [](const std::string& s, const char* what) {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw Error(Errc::FormatError, std::string("bad integer for ") + what + ": '" + s + "'");
    return v;
  };

  KnowledgeGraph g;
  const auto& gr = root.get_child("graph");
  auto gdata = data_of(gr);
  g.case_id = gdata["case_id"];
  if (gdata.count("mode")) g.mode = parse_mode(gdata["mode"]);

  std::map<std::string, NodeKey> by_id;
  for (const auto& [tag, child] : gr) {
    if (tag != "node") continue;
    auto d = data_of(child);
    Node n;
    n.name = d["name"];
    n.entity_type = require_entity_type(d["type"]);
    n.description = d["description"];
    n.degree = static_cast<std::size_t>(to_int(d.count("degree") ? d["degree"] : "0", "degree"));
    n.provenance = decode_provenance(d["source_id"]);
    by_id[attr(child, "id")] = n.key();
    g.nodes[n.key()] = std::move(n);
  }
  for (const auto& [tag, child] : gr) {
    if (tag != "edge") continue;
    auto d = data_of(child);
    Edge e;
    auto src = by_id.find(attr(child, "source"));
    auto dst = by_id.find(attr(child, "target"));
    if (src == by_id.end() || dst == by_id.end()) throw Error(Errc::FormatError, "edge references unknown node");
    e.source = src->second;
    e.target = dst->second;
    e.description = d["description"];
    e.strength = static_cast<int>(to_int(d.count("strength") ? d["strength"] : "0", "strength"));
    e.provenance = decode_provenance(d["source_id"]);
    g.edges.push_back(std::move(e));
  }
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

}  // namespace detail

/// Reads GraphML written by `serialize_graphml` (keys resolved by attr.name,
/// so other writers using the same attribute names also load).
inline KnowledgeGraph read_graphml(const std::string& xml) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(xml);
    pt::read_xml(in, tree);
    return detail::graph_from_ptree(tree);
  } catch (const pt::xml_parser_error& e) {
    throw Error(Errc::FormatError, std::string("GraphML parse error: ") + e.what());
  } catch (const pt::ptree_error& e) {
    throw Error(Errc::FormatError, std::string("GraphML structure error: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Delimited tables (RFC 4180 CSV)

inline std::string csv_field(std::string_view s) {
  bool quote = s.find_first_of(",\"\r\n") != std::string_view::npos ||
               (!s.empty() && (is_space(s.front()) || is_space(s.back())));
  if (!quote) return std::string(s);
  return "\"" + replace_all(s, "\"", "\"\"") + "\"";
}

inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_field(fields[i]);
  }
  out += '\n';
  return out;
}

inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') in_quotes = true;
    else if (c == ',') row.push_back(std::exchange(field, {}));
    else if (c == '\n') {
      row.push_back(std::exchange(field, {}));
      rows.push_back(std::exchange(row, {}));
      any = false;
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      continue;
    } else field += c;
  }
  if (in_quotes) throw Error(Errc::FormatError, "unterminated quoted CSV field");
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline const std::vector<std::string>& node_table_header() {
  static const std::vector<std::string> h = {"name", "type", "description", "degree", "provenance"};
  return h;
}

inline const std::vector<std::string>& edge_table_header() {
  static const std::vector<std::string> h = {"source_name", "source_type", "target_name", "target_type",
                                             "description", "strength",    "provenance"};
  return h;
}

struct Tables {
  std::string nodes_csv;
  std::string edges_csv;
};

inline Tables export_tabular(const KnowledgeGraph& graph) {
  KnowledgeGraph g = graph;
  g.normalize();
  Tables t;
  t.nodes_csv = csv_row(node_table_header());
  for (const auto& [key, n] : g.nodes)
    t.nodes_csv += csv_row({n.name, std::string(to_string(n.entity_type)), n.description, std::to_string(n.degree),
                            encode_provenance(n.provenance)});
  t.edges_csv = csv_row(edge_table_header());
  for (const auto& e : g.edges)
    t.edges_csv += csv_row({e.source.name, std::string(to_string(e.source.entity_type)), e.target.name,
                            std::string(to_string(e.target.entity_type)), e.description, std::to_string(e.strength),
                            encode_provenance(e.provenance)});
  return t;
}

inline KnowledgeGraph import_tabular(const Tables& tables, std::string case_id, Mode mode) {
  KnowledgeGraph g;
  g.case_id = std::move(case_id);
  g.mode = mode;
  auto node_rows = parse_csv(tables.nodes_csv);
  auto edge_rows = parse_csv(tables.edges_csv);
  if (node_rows.empty() || node_rows.front() != node_table_header())
    throw Error(Errc::FormatError, "node table header mismatch");
  if (edge_rows.empty() || edge_rows.front() != edge_table_header())
    throw Error(Errc::FormatError, "edge table header mismatch");
  for (std::size_t i = 1; i < node_rows.size(); ++i) {
    const auto& r = node_rows[i];
    if (r.size() != 5) throw Error(Errc::FormatError, "node row " + std::to_string(i) + " has wrong arity");
    Node n;
    n.name = r[0];
    n.entity_type = require_entity_type(r[1]);
    n.description = r[2];
    n.degree = std::stoul(r[3]);
    n.provenance = decode_provenance(r[4]);
    g.nodes[n.key()] = std::move(n);
  }
  for (std::size_t i = 1; i < edge_rows.size(); ++i) {
    const auto& r = edge_rows[i];
    if (r.size() != 7) throw Error(Errc::FormatError, "edge row " + std::to_string(i) + " has wrong arity");
    Edge e;
    e.source = {r[0], require_entity_type(r[1])};
    e.target = {r[2], require_entity_type(r[3])};
    e.description = r[4];
    e.strength = std::stoi(r[5]);
    e.provenance = decode_provenance(r[6]);
    g.edges.push_back(std::move(e));
  }
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

}  // namespace corekg::graph
