#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "corekg/entity_type.hpp"
#include "corekg/error.hpp"
#include "corekg/text.hpp"

namespace corekg::extraction {

struct DelimiterSet {
  std::string tuple_delimiter = "<|>";
  std::string record_delimiter = "##";
  std::string completion_delimiter = "<|COMPLETE|>";

  void validate() const {
    const std::string* all[] = {&tuple_delimiter, &record_delimiter, &completion_delimiter};
    for (const auto* d : all)
      if (d->empty()) throw Error(Errc::ConfigInvalid, "delimiters must be non-empty");
    for (const auto* a : all)
      for (const auto* b : all)
        if (a != b && b->find(*a) != std::string::npos)
          throw Error(Errc::ConfigInvalid, "delimiter '" + *a + "' overlaps '" + *b + "'");
  }

  bool operator==(const DelimiterSet&) const = default;
};

/// Where a record came from.
struct SourceRef {
  std::string case_id;
  std::size_t chunk_id = 0;

  auto operator<=>(const SourceRef&) const = default;
};

struct EntityRecord {
  std::string name;
  EntityType entity_type = EntityType::Person;
  std::string description;
  SourceRef source;

  bool operator==(const EntityRecord&) const = default;
};

struct RelationshipRecord {
  std::string source_name;
  std::string target_name;
  std::string description;
  int strength = 0;
  SourceRef source;

  bool operator==(const RelationshipRecord&) const = default;
};

struct SkippedRecord {
  std::size_t index = 0;  // position among candidate records
  std::size_t line = 0;   // 1-based line in the raw output
  std::string reason;
};

struct ParseReport {
  std::size_t candidates = 0;
  std::size_t parsed = 0;
  std::vector<SkippedRecord> skipped;
  bool completion_seen = false;

  bool empty_output() const { return parsed == 0; }

  nlohmann::json to_json() const {
    nlohmann::json sk = nlohmann::json::array();
    for (const auto& s : skipped) sk.push_back({{"index", s.index}, {"line", s.line}, {"reason", s.reason}});
    return {{"candidates", candidates},
            {"parsed", parsed},
            {"skipped", sk},
            {"completion_seen", completion_seen},
            {"empty_output", empty_output()}};
  }
};

struct ExtractionResult {
  std::vector<EntityRecord> entities;
  std::vector<RelationshipRecord> relationships;
  ParseReport report;
};

// ---------------------------------------------------------------------------
// Serialization of records in the delimiter format

inline std::string format_entity(const EntityRecord& e, const DelimiterSet& d) {
  return "(\"entity\"" + d.tuple_delimiter + e.name + d.tuple_delimiter + std::string(to_string(e.entity_type)) +
         d.tuple_delimiter + e.description + ")";
}

inline std::string format_relationship(const RelationshipRecord& r, const DelimiterSet& d) {
  return "(\"relationship\"" + d.tuple_delimiter + r.source_name + d.tuple_delimiter + r.target_name +
         d.tuple_delimiter + r.description + d.tuple_delimiter + std::to_string(r.strength) + ")";
}

/// Entities first, then relationships; every record followed by the record
/// delimiter; completion delimiter last.
inline std::string serialize_records(const std::vector<EntityRecord>& entities,
                                     const std::vector<RelationshipRecord>& relationships, const DelimiterSet& d) {
  std::string out;
  for (const auto& e : entities) out += format_entity(e, d) + " " + d.record_delimiter + "\n";
  for (const auto& r : relationships) out += format_relationship(r, d) + " " + d.record_delimiter + "\n";
  out += d.completion_delimiter;
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::string clean_field(std::string_view f) {
  f = trim(f);
  while (!f.empty() && f.front() == '"') f.remove_prefix(1);
  while (!f.empty() && f.back() == '"') f.remove_suffix(1);
  return std::string(trim(f));
}

inline std::optional<int> parse_strength(std::string_view s) {
  s = trim(s);
  if (s.empty() || s.size() > 3) return std::nullopt;
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Total over arbitrary input: malformed records are skipped with a reason,
/// never thrown. parsed + skipped == candidates.
inline ExtractionResult parse_extraction_output(std::string_view raw, const DelimiterSet& d,
                                                const SourceRef& source = {}) {
  d.validate();
  ExtractionResult result;
  auto& report = result.report;

  std::string_view body = raw;
  if (auto pos = raw.find(d.completion_delimiter); pos != std::string_view::npos) {
    body = raw.substr(0, pos);
    report.completion_seen = true;
  }

  auto line_of = [&](std::size_t at) {
    return static_cast<std::size_t>(std::count(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(at), '\n')) + 1;
  };

  for (std::size_t start = 0; start <= body.size();) {
    std::size_t pos = body.find(d.record_delimiter, start);
    std::size_t end = pos == std::string_view::npos ? body.size() : pos;
    std::string_view piece = body.substr(start, end - start);
    std::size_t piece_offset = start;
    start = pos == std::string_view::npos ? body.size() + 1 : pos + d.record_delimiter.size();

    std::string_view rec = trim(piece);
    if (rec.empty()) continue;
    piece_offset += static_cast<std::size_t>(rec.data() - piece.data());
    const std::size_t index = report.candidates++;
    auto skip = [&](std::string reason) {
      report.skipped.push_back({index, line_of(piece_offset), std::move(reason)});
    };

    // Drop any preamble before the opening parenthesis, then one level of
    // enclosing parentheses.
    if (auto open = rec.find('('); open != std::string_view::npos &&
                                   rec.substr(0, open).find(d.tuple_delimiter) == std::string_view::npos) {
      rec.remove_prefix(open + 1);
    }
    if (!rec.empty() && rec.back() == ')') rec.remove_suffix(1);

    auto fields = split(rec, d.tuple_delimiter);
    std::string tag = to_lower(detail::clean_field(fields.front()));
    if (tag == "entity") {
      if (fields.size() != 4) {
        skip("entity record has " + std::to_string(fields.size()) + " fields, expected 4");
        continue;
      }
      EntityRecord e;
      e.name = normalize_name(detail::clean_field(fields[1]));
      if (e.name.empty()) {
        skip("empty entity name");
        continue;
      }
      auto type = parse_entity_type(detail::clean_field(fields[2]));
      if (!type) {
        skip("unknown entity type '" + detail::clean_field(fields[2]) + "'");
        continue;
      }
      e.entity_type = *type;
      e.description = detail::clean_field(fields[3]);
      e.source = source;
      result.entities.push_back(std::move(e));
      ++report.parsed;
    } else if (tag == "relationship") {
      if (fields.size() != 5) {
        skip("relationship record has " + std::to_string(fields.size()) + " fields, expected 5");
        continue;
      }
      RelationshipRecord r;
      r.source_name = normalize_name(detail::clean_field(fields[1]));
      r.target_name = normalize_name(detail::clean_field(fields[2]));
      if (r.source_name.empty() || r.target_name.empty()) {
        skip("empty relationship endpoint");
        continue;
      }
      r.description = detail::clean_field(fields[3]);
      auto strength = detail::parse_strength(detail::clean_field(fields[4]));
      if (!strength) {
        skip("strength is not an integer");
        continue;
      }
      if (*strength < 0 || *strength > 10) {
        skip("strength " + std::to_string(*strength) + " outside 0-10");
        continue;
      }
      r.strength = *strength;
      r.source = source;
      result.relationships.push_back(std::move(r));
      ++report.parsed;
    } else {
      skip("unknown record tag '" + tag.substr(0, 32) + "'");
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Government-entity filter

/// Normalized term set; matching is by whole normalized name.
class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(const std::vector<std::string>& terms) {
    for (const auto& t : terms) add(t);
  }

  static Lexicon from_text(std::string_view content) { return Lexicon(read_term_lines(content)); }
  static Lexicon load(const std::filesystem::path& path) { return from_text(read_file(path)); }

  void add(std::string_view term) {
    auto n = normalize_name(term);
    if (!n.empty()) terms_.insert(std::move(n));
  }
  bool contains(std::string_view name) const { return terms_.count(normalize_name(name)) != 0; }
  std::size_t size() const { return terms_.size(); }
  const std::set<std::string>& terms() const { return terms_; }

  std::string digest() const {
    std::string material;
    for (const auto& t : terms_) material += t + "\n";
    return sha256_hex(material);
  }

 private:
  std::set<std::string> terms_;
};

inline const std::vector<std::string>& default_government_terms() {
  static const std::vector<std::string> terms = {
      "court",
      "district court",
      "court of appeals",
      "state court",
      "appeal",
      "appeal process",
      "judgment of acquittal",
      "motion for judgment of acquittal",
      "plain error standard",
      "jury",
      "prosecution",
      "government",
  };
  return terms;
}

inline Lexicon default_government_lexicon() { return Lexicon(default_government_terms()); }

struct FilterResult {
  std::vector<EntityRecord> entities;
  std::vector<RelationshipRecord> relationships;
  std::size_t removed_entities = 0;
  std::size_t removed_relationships = 0;
};

/// Drops entities whose name is in the lexicon and every relationship with
/// an endpoint in the lexicon.
inline FilterResult filter_government_entities(const std::vector<EntityRecord>& entities,
                                               const std::vector<RelationshipRecord>& relationships,
                                               const Lexicon& lexicon) {
  FilterResult out;
  for (const auto& e : entities) {
    if (lexicon.contains(e.name)) ++out.removed_entities;
    else out.entities.push_back(e);
  }
  for (const auto& r : relationships) {
    if (lexicon.contains(r.source_name) || lexicon.contains(r.target_name)) ++out.removed_relationships;
    else out.relationships.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompt

struct ExtractionExample {
  std::string input;
  std::vector<EntityRecord> entities;
  std::vector<RelationshipRecord> relationships;
};

inline std::map<EntityType, std::string> default_type_definitions() {
  return {
      {EntityType::Person, "Any individual's name, including smugglers, agents, and undocumented migrants."},
      {EntityType::Location, "Geographical areas (e.g., city, state, country)."},
      {EntityType::Routes, "Roads, highways, or freeways used in smuggling."},
      {EntityType::Organization, "Smuggling rings, drug cartels, and other formal groups."},
      {EntityType::MeansOfTransportation, "Vehicles like car, truck, 18-wheeler."},
      {EntityType::MeansOfCommunication, "Tools like phone, WhatsApp."},
      {EntityType::SmuggledItems, "Goods like drugs, weapons, or undocumented aliens."},
  };
}

/// Per-type guidance rendered under the ordering instruction.
inline std::string ordering_hint(EntityType t) {
  switch (t) {
    case EntityType::Person:
      return "If a person appears with a title (e.g., \"Agent R.\"), extract only the name (e.g., \"R.\") as "
             "the entity_name and put the title in the entity_description.";
    case EntityType::Location:
      return "Combine city and state into a single entity (e.g., LAREDO, TEXAS).";
    default:
      return "Extract as relevant.";
  }
}

inline std::vector<ExtractionExample> default_examples() {
  ExtractionExample ex;
  ex.input = "Smugglers from the Horizon Smuggling Ring used WhatsApp.";
  ex.entities = {
      {"SMUGGLERS", EntityType::Person, "Members of the Horizon Smuggling Ring who coordinated by phone app", {}},
      {"WHATSAPP", EntityType::MeansOfCommunication, "Messaging application used by the smugglers", {}},
  };
  ex.relationships = {
      {"SMUGGLERS", "WHATSAPP", "The smugglers used WhatsApp to communicate", 8, {}},
  };
  return {ex};
}

struct ExtractionPromptConfig {
  Mode mode = Mode::CoreKG;
  std::vector<EntityType> entity_types{kAllEntityTypes.begin(), kAllEntityTypes.end()};
  std::map<EntityType, std::string> type_definitions = default_type_definitions();
  std::vector<ExtractionExample> fewshot_examples = default_examples();
  DelimiterSet delimiters;
  bool include_sequential_ordering = true;
  bool include_government_filter = true;

  /// Mode decides the two feature flags.
  static ExtractionPromptConfig for_mode(Mode mode) {
    ExtractionPromptConfig c;
    c.mode = mode;
    c.include_sequential_ordering = mode == Mode::CoreKG;
    c.include_government_filter = mode == Mode::CoreKG;
    return c;
  }

  void validate() const {
    delimiters.validate();
    std::set<EntityType> distinct(entity_types.begin(), entity_types.end());
    if (entity_types.size() != kAllEntityTypes.size() || distinct.size() != kAllEntityTypes.size())
      throw Error(Errc::ConfigInvalid, "all seven entity types are required, each once");
    const bool corekg = mode == Mode::CoreKG;
    if (include_sequential_ordering != corekg || include_government_filter != corekg)
      throw Error(Errc::ConfigInvalid, "ordering and filter flags must be on exactly in corekg mode");
    if (fewshot_examples.empty()) throw Error(Errc::ConfigInvalid, "at least one few-shot example is required");
    if (corekg)
      for (EntityType t : entity_types) {
        auto it = type_definitions.find(t);
        if (it == type_definitions.end() || trim(it->second).empty())
          throw Error(Errc::ConfigInvalid, "missing definition for " + std::string(to_string(t)));
      }
  }
};

enum class BlockKind {
  Goal,
  GovernmentScope,   // corekg
  TypeDefinitions,   // corekg
  EntityStep,
  GovernmentExclusion,  // corekg
  SequentialOrdering,   // corekg
  EntityFormat,
  RelationshipStep,
  FilterStep,  // corekg
  OutputFormat,
  CompletionToken,
  Examples,
  Input,
};

/// Blocks present only in the guided (corekg) prompt.
constexpr bool is_corekg_only(BlockKind k) {
  return k == BlockKind::GovernmentScope || k == BlockKind::TypeDefinitions ||
         k == BlockKind::GovernmentExclusion || k == BlockKind::SequentialOrdering || k == BlockKind::FilterStep;
}

struct PromptBlock {
  BlockKind kind;
  std::string heading;  // section title, or step title when `step` is set
  std::string body;
  bool step = false;

  bool operator==(const PromptBlock&) const = default;
};

inline std::string type_list(const std::vector<EntityType>& types) {
  std::string out;
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (i) out += ", ";
    out += to_string(types[i]);
  }
  return out;
}

inline std::vector<PromptBlock> extraction_prompt_blocks(std::string_view chunk_text,
                                                         const ExtractionPromptConfig& config) {
  config.validate();
  const auto& d = config.delimiters;
  const std::string types = type_list(config.entity_types);
  std::vector<PromptBlock> blocks;

  blocks.push_back({BlockKind::Goal, "Goal",
                    "You are an expert in Named Entity and Relationship Extraction (NER-RE) for legal case "
                    "documents related to human smuggling. Given a text document and a list of entity types, "
                    "extract only entities of the types [" + types +
                        "] and the explicit relationships between them, without inference or completion. The "
                        "output will be used to construct a knowledge graph for analyzing smuggling networks.",
                    false});
  if (config.include_government_filter)
    blocks.push_back({BlockKind::GovernmentScope, "",
                      "Do not extract entities corresponding to governmental organizations or entities closely "
                      "related to the trial, criminal law and legal procedure (e.g., jury, government, court, "
                      "prosecution). These are out of scope.",
                      false});
  if (config.mode == Mode::CoreKG) {
    std::string defs;
    for (std::size_t i = 0; i < config.entity_types.size(); ++i) {
      EntityType t = config.entity_types[i];
      defs += std::to_string(i + 1) + ". " + std::string(to_string(t)) + ": " + config.type_definitions.at(t);
      if (i + 1 < config.entity_types.size()) defs += "\n";
    }
    blocks.push_back({BlockKind::TypeDefinitions, "Entity Type Definitions", defs, false});
  }

  blocks.push_back({BlockKind::EntityStep, "Entity Extraction",
                    "Extract only explicitly stated entities of type [" + types +
                        "]. Do not infer or complete missing information. For each entity, extract:\n"
                        "entity_name: Capitalized name as it appears\n"
                        "entity_type: One of [" + types + "]\n"
                        "entity_description: Description of the entity's role or attributes",
                    true});
  if (config.include_government_filter)
    blocks.push_back({BlockKind::GovernmentExclusion, "",
                      "Do not extract any entities related to government or legal proceedings (e.g., court, "
                      "jury, prosecution, law enforcement).",
                      false});
  if (config.include_sequential_ordering) {
    std::string order = "Extract entity types strictly in the following order, finishing one type before "
                        "starting the next:";
    for (EntityType t : config.entity_types) order += "\n" + std::string(to_string(t)) + ": " + ordering_hint(t);
    order += "\nOnly after all entity types are done, continue with relationship extraction.";
    blocks.push_back({BlockKind::SequentialOrdering, "", order, false});
  }
  blocks.push_back({BlockKind::EntityFormat, "",
                    "Format each entity as (\"entity\"" + d.tuple_delimiter + "<entity_name>" + d.tuple_delimiter +
                        "<entity_type>" + d.tuple_delimiter + "<entity_description>)",
                    false});

  blocks.push_back({BlockKind::RelationshipStep, "Relationship Extraction",
                    "From the entities identified above, extract all clearly stated relationships. For each "
                    "relationship, extract:\n"
                    "source_entity: name of the source entity, as identified above\n"
                    "target_entity: name of the target entity, as identified above\n"
                    "relationship_description: explanation of the connection\n"
                    "relationship_strength: integer score between 0 and 10\n"
                    "  0-3 (weak): indirect or uncertain\n"
                    "  4-6 (moderate): explicit but lacking strong context\n"
                    "  7-10 (strong): clear, direct and contextually supported\n"
                    "Format each relationship as (\"relationship\"" + d.tuple_delimiter + "<source_entity>" +
                        d.tuple_delimiter + "<target_entity>" + d.tuple_delimiter + "<relationship_description>" +
                        d.tuple_delimiter + "<relationship_strength>)",
                    true});
  if (config.include_government_filter)
    blocks.push_back({BlockKind::FilterStep, "Filter Government Entities",
                      "If any government-related entities or relationships were extracted, remove them before "
                      "producing the output.",
                      true});
  blocks.push_back({BlockKind::OutputFormat, "Output Format",
                    "Return all entities and relationships as a single list, using " + d.record_delimiter +
                        " as the list separator.",
                    true});
  blocks.push_back({BlockKind::CompletionToken, "Completion Token", "End the output with " + d.completion_delimiter,
                    true});

  const std::size_t n_examples = config.mode == Mode::CoreKG ? config.fewshot_examples.size() : 1;
  std::string examples;
  for (std::size_t i = 0; i < n_examples; ++i) {
    const auto& ex = config.fewshot_examples[i];
    if (i) examples += "\n\n";
    examples += "Example " + std::to_string(i + 1) + "\nInput: " + ex.input + "\nOutput:\n" +
                serialize_records(ex.entities, ex.relationships, d);
  }
  blocks.push_back({BlockKind::Examples, "Few-shot Examples", examples, false});
  blocks.push_back({BlockKind::Input, "Real Data",
                    "Entity_types: [" + types + "]\nText: " + std::string(chunk_text) + "\nOutput:", false});
  return blocks;
}

inline std::string render_prompt(const std::vector<PromptBlock>& blocks) {
  std::string out;
  int step = 0;
  bool steps_open = false;
  for (const auto& b : blocks) {
    if (!out.empty()) out += "\n\n";
    if (b.step) {
      if (!steps_open) {
        out += "-Steps-\n";
        steps_open = true;
      }
      out += std::to_string(++step) + ". " + b.heading + ": " + b.body;
    } else if (!b.heading.empty()) {
      out += "-" + b.heading + "-\n" + b.body;
    } else {
      out += b.body;
    }
  }
  return out;
}

inline std::string build_extraction_prompt(std::string_view chunk_text, const ExtractionPromptConfig& config) {
  return render_prompt(extraction_prompt_blocks(chunk_text, config));
}

/// Identifies the prompt variant independent of chunk content.
inline std::string prompt_digest(const ExtractionPromptConfig& config) {
  return sha256_hex(build_extraction_prompt("", config));
}

}  // namespace corekg::extraction
