#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "corekg/coref.hpp"
#include "corekg/corpus.hpp"
#include "corekg/entity_type.hpp"
#include "corekg/error.hpp"
#include "corekg/evaluation.hpp"
#include "corekg/extraction.hpp"
#include "corekg/graph.hpp"
#include "corekg/graph_io.hpp"
#include "corekg/http_backend.hpp"
#include "corekg/llm_gateway.hpp"
#include "corekg/text.hpp"

namespace corekg::pipeline {

namespace fs = std::filesystem;
using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

struct RunConfig {
  fs::path corpus_dir;
  fs::path output_dir;
  Mode mode = Mode::CoreKG;

  llm::EndpointConfig endpoint;
  std::optional<fs::path> script_path;  // scripted backend instead of HTTP
  bool script_strict = true;
  llm::RetryPolicy retry;

  corpus::ChunkingConfig chunking;
  std::vector<std::string> opinion_headings = corpus::default_opinion_headings();
  std::vector<std::string> section_terminators = corpus::default_section_terminators();

  coref::ResolutionPolicy resolution;
  std::optional<fs::path> templates_dir;
  std::optional<fs::path> lexicon_path;

  int threshold = eval::kDefaultThreshold;
  std::optional<fs::path> overrides_path;
  std::optional<fs::path> noise_path;

  int parallelism = 1;

  void validate() const {
    if (corpus_dir.empty()) throw Error(Errc::ConfigInvalid, "corpus_dir is required");
    if (!fs::is_directory(corpus_dir))
      throw Error(Errc::ConfigInvalid, "corpus directory does not exist: " + corpus_dir.string());
    if (output_dir.empty()) throw Error(Errc::ConfigInvalid, "output_dir is required");
    auto must_exist = [](const std::optional<fs::path>& p, const char* what) {
      if (p && !fs::exists(*p)) throw Error(Errc::ConfigInvalid, std::string(what) + " not found: " + p->string());
    };
    must_exist(script_path, "script");
    must_exist(templates_dir, "templates directory");
    must_exist(lexicon_path, "lexicon");
    must_exist(overrides_path, "override file");
    must_exist(noise_path, "noise annotation");
    if (!script_path && endpoint.base_url.empty()) throw Error(Errc::ConfigInvalid, "either script or endpoint is required");
    if (endpoint.model_id.empty()) throw Error(Errc::ConfigInvalid, "model_id is required");
    if (retry.max_attempts < 1) throw Error(Errc::ConfigInvalid, "retry.max_attempts must be >= 1");
    if (retry.timeout.count() <= 0) throw Error(Errc::ConfigInvalid, "retry.timeout_ms must be positive");
    chunking.validate();
    if (!corpus::default_tokenizers().contains(chunking.tokenizer_id))
      throw Error(Errc::ConfigInvalid, "unknown tokenizer '" + chunking.tokenizer_id + "'");
    resolution.validate();
    if (threshold < 0 || threshold > 100) throw Error(Errc::ConfigInvalid, "threshold must be within 0..100");
    if (parallelism < 1) throw Error(Errc::ConfigInvalid, "parallelism must be >= 1");
    if (opinion_headings.empty()) throw Error(Errc::ConfigInvalid, "opinion_headings must not be empty");
  }
};

namespace detail {

inline fs::path resolve_path(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

inline void require_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) throw Error(Errc::ConfigInvalid, std::string(where) + " must be an object");
  for (const auto& [k, v] : j.items())
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw Error(Errc::ConfigInvalid, "unknown key '" + k + "' in " + std::string(where));
}

}  // namespace detail

/// Relative paths resolve against `base` (normally the config file's directory).
inline RunConfig parse_run_config(const Json& j, const fs::path& base = {}) {
  RunConfig c;
  try {
    detail::require_keys(j,
                         {"corpus_dir", "output_dir", "mode", "endpoint", "script", "script_strict", "retry",
                          "chunking", "opinion_headings", "section_terminators", "type_order", "ratio_bounds",
                          "on_reject", "templates_dir", "lexicon", "threshold", "overrides", "noise_annotation",
                          "parallelism"},
                         "config");
    auto path_of = [&](const char* key) -> std::optional<fs::path> {
      if (!j.contains(key) || j[key].is_null()) return std::nullopt;
      return detail::resolve_path(base, j[key].get<std::string>());
    };
    if (auto p = path_of("corpus_dir")) c.corpus_dir = *p;
    if (auto p = path_of("output_dir")) c.output_dir = *p;
    if (j.contains("mode")) c.mode = parse_mode(j["mode"].get<std::string>());
    if (j.contains("endpoint")) {
      const auto& e = j["endpoint"];
      detail::require_keys(e, {"base_url", "path", "model_id"}, "endpoint");
      c.endpoint.base_url = e.value("base_url", c.endpoint.base_url);
      c.endpoint.path = e.value("path", c.endpoint.path);
      c.endpoint.model_id = e.value("model_id", c.endpoint.model_id);
    }
    c.script_path = path_of("script");
    c.script_strict = j.value("script_strict", true);
    if (j.contains("retry")) {
      const auto& r = j["retry"];
      detail::require_keys(r, {"max_attempts", "initial_backoff_ms", "backoff_multiplier", "timeout_ms"}, "retry");
      c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
      c.retry.initial_backoff = llm::Millis(r.value("initial_backoff_ms", c.retry.initial_backoff.count()));
      c.retry.backoff_multiplier = r.value("backoff_multiplier", c.retry.backoff_multiplier);
      c.retry.timeout = llm::Millis(r.value("timeout_ms", c.retry.timeout.count()));
    }
    if (j.contains("chunking")) {
      const auto& ch = j["chunking"];
      detail::require_keys(ch, {"chunk_size", "overlap", "tokenizer"}, "chunking");
      c.chunking.chunk_size = ch.value("chunk_size", c.chunking.chunk_size);
      c.chunking.overlap = ch.value("overlap", c.chunking.overlap);
      c.chunking.tokenizer_id = ch.value("tokenizer", c.chunking.tokenizer_id);
    }
    if (j.contains("opinion_headings")) c.opinion_headings = j["opinion_headings"].get<std::vector<std::string>>();
    if (j.contains("section_terminators"))
      c.section_terminators = j["section_terminators"].get<std::vector<std::string>>();
    if (j.contains("type_order")) {
      c.resolution.type_order.clear();
      for (const auto& t : j["type_order"]) {
        auto type = parse_entity_type(t.get<std::string>());
        if (!type) throw Error(Errc::ConfigInvalid, "unknown entity type '" + t.get<std::string>() + "'");
        c.resolution.type_order.push_back(*type);
      }
    }
    if (j.contains("ratio_bounds")) {
      const auto& rb = j["ratio_bounds"];
      if (!rb.is_array() || rb.size() != 2) throw Error(Errc::ConfigInvalid, "ratio_bounds must be [low, high]");
      c.resolution.ratio_low = rb[0].get<double>();
      c.resolution.ratio_high = rb[1].is_null() ? std::numeric_limits<double>::infinity() : rb[1].get<double>();
    }
    if (j.contains("on_reject")) c.resolution.on_reject = coref::parse_reject_policy(j["on_reject"].get<std::string>());
    c.templates_dir = path_of("templates_dir");
    c.lexicon_path = path_of("lexicon");
    c.threshold = j.value("threshold", c.threshold);
    c.overrides_path = path_of("overrides");
    c.noise_path = path_of("noise_annotation");
    c.parallelism = j.value("parallelism", c.parallelism);
  } catch (const Json::exception& e) {
    throw Error(Errc::ConfigInvalid, std::string("config: ") + e.what());
  }
  return c;
}

/// Reads a JSON config file; COREKG_LLM_* variables then override the endpoint.
inline RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::ConfigInvalid, "config file not found: " + path.string());
  Json j = Json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ConfigInvalid, "config file is not valid JSON: " + path.string());
  RunConfig c = parse_run_config(j, path.parent_path());
  c.endpoint.apply_env();
  return c;
}

// ---------------------------------------------------------------------------
// Resolved run context: everything derived from the config before any call.

struct RunContext {
  RunConfig config;
  coref::TemplateSet templates;
  extraction::Lexicon lexicon;
  extraction::ExtractionPromptConfig prompt_config;
  std::string config_digest;

  fs::path case_dir(const std::string& id) const { return config.output_dir / "cases" / id; }
  fs::path graph_path(const std::string& id) const {
    return config.output_dir / "graphs" / (id + "." + std::string(to_string(config.mode)) + ".graphml");
  }
  fs::path table_path(const std::string& id, std::string_view kind) const {
    return config.output_dir / "tables" /
           (id + "." + std::string(to_string(config.mode)) + "." + std::string(kind) + ".csv");
  }
  fs::path manifest_path() const { return config.output_dir / "manifest.json"; }
  fs::path audit_path() const { return config.output_dir / "audit.jsonl"; }
};

/// Digest of every setting that can change an artifact. Output location,
/// parallelism, endpoint address and secrets are excluded.
inline std::string compute_config_digest(const RunContext& ctx) {
  const auto& c = ctx.config;
  Json types = Json::array();
  for (auto t : c.resolution.type_order) types.push_back(to_string(t));
  Json j = {
      {"mode", to_string(c.mode)},
      {"model_id", c.endpoint.model_id},
      {"script_sha256", c.script_path ? sha256_hex(read_file(*c.script_path)) : ""},
      {"script_strict", c.script_strict},
      {"chunking", {{"chunk_size", c.chunking.chunk_size}, {"overlap", c.chunking.overlap},
                    {"tokenizer", c.chunking.tokenizer_id}}},
      {"opinion_headings", c.opinion_headings},
      {"section_terminators", c.section_terminators},
      {"extraction_prompt", extraction::prompt_digest(ctx.prompt_config)},
      {"lexicon", ctx.lexicon.digest()},
  };
  if (c.mode == Mode::CoreKG) {
    j["type_order"] = types;
    j["ratio_bounds"] = {c.resolution.ratio_low, std::isinf(c.resolution.ratio_high) ? Json() : Json(c.resolution.ratio_high)};
    j["on_reject"] = coref::to_string(c.resolution.on_reject);
    j["coref_templates"] = ctx.templates.digest();
  }
  return sha256_hex(j.dump());
}

/// Validates the config and loads every referenced file. Throws ConfigInvalid
/// (or a parse error) before any model call is possible.
inline RunContext prepare(RunConfig config) {
  config.validate();
  RunContext ctx;
  ctx.templates = config.templates_dir ? coref::TemplateSet::load(*config.templates_dir) : coref::TemplateSet::defaults();
  for (auto t : config.resolution.type_order) ctx.templates.get(t).validate();
  ctx.lexicon = config.lexicon_path ? extraction::Lexicon::load(*config.lexicon_path)
                                    : extraction::default_government_lexicon();
  ctx.prompt_config = extraction::ExtractionPromptConfig::for_mode(config.mode);
  ctx.prompt_config.validate();
  ctx.config = std::move(config);
  ctx.config_digest = compute_config_digest(ctx);
  return ctx;
}

inline std::shared_ptr<llm::Backend> make_backend(const RunConfig& c) {
  if (c.script_path) return llm::load_script(*c.script_path, c.script_strict);
  return std::make_shared<llm::HttpBackend>(c.endpoint);
}

// ---------------------------------------------------------------------------
// Record persistence

inline Json to_json(const extraction::EntityRecord& e) {
  return {{"name", e.name}, {"type", to_string(e.entity_type)}, {"description", e.description},
          {"case_id", e.source.case_id}, {"chunk_id", e.source.chunk_id}};
}

inline Json to_json(const extraction::RelationshipRecord& r) {
  return {{"source", r.source_name}, {"target", r.target_name}, {"description", r.description},
          {"strength", r.strength}, {"case_id", r.source.case_id}, {"chunk_id", r.source.chunk_id}};
}

struct RecordSet {
  std::vector<extraction::EntityRecord> entities;
  std::vector<extraction::RelationshipRecord> relationships;
};

inline Json records_to_json(const RecordSet& r) {
  Json ents = Json::array(), rels = Json::array();
  for (const auto& e : r.entities) ents.push_back(to_json(e));
  for (const auto& x : r.relationships) rels.push_back(to_json(x));
  return {{"entities", ents}, {"relationships", rels}};
}

inline RecordSet records_from_json(const Json& j) {
  RecordSet r;
  try {
    for (const auto& e : j.at("entities")) {
      extraction::EntityRecord rec;
      rec.name = e.at("name").get<std::string>();
      rec.entity_type = require_entity_type(e.at("type").get<std::string>());
      rec.description = e.at("description").get<std::string>();
      rec.source = {e.at("case_id").get<std::string>(), e.at("chunk_id").get<std::size_t>()};
      r.entities.push_back(std::move(rec));
    }
    for (const auto& x : j.at("relationships")) {
      extraction::RelationshipRecord rec;
      rec.source_name = x.at("source").get<std::string>();
      rec.target_name = x.at("target").get<std::string>();
      rec.description = x.at("description").get<std::string>();
      rec.strength = x.at("strength").get<int>();
      rec.source = {x.at("case_id").get<std::string>(), x.at("chunk_id").get<std::size_t>()};
      r.relationships.push_back(std::move(rec));
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::FormatError, std::string("records file: ") + e.what());
  }
  return r;
}

inline Json read_json_file(const fs::path& p) {
  if (!fs::exists(p)) throw Error(Errc::IoError, "missing artifact " + p.string());
  Json j = Json::parse(read_file(p), nullptr, false);
  if (j.is_discarded()) throw Error(Errc::FormatError, "not valid JSON: " + p.string());
  return j;
}

inline void write_json_file(const fs::path& p, const Json& j) { write_file(p, j.dump(2) + "\n"); }

inline std::string chunk_file_name(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "chunk_%04zu.txt", id);
  return buf;
}

// ---------------------------------------------------------------------------
// Stages. Each reads its inputs from and writes its outputs to the case
// directory; stage stats land in `<stage>.json` next to the artifacts.

inline Json ingest_stage(const RunContext& ctx, corpus::CaseDocument doc) {
  auto dir = ctx.case_dir(doc.case_id);
  const std::string& opinion = corpus::extract_opinion(doc, ctx.config.opinion_headings, ctx.config.section_terminators);
  write_file(dir / "opinion.txt", opinion);
  Json stats = {{"raw_bytes", doc.raw_text.size()},
                {"opinion_bytes", opinion.size()},
                {"opinion_tokens", corpus::count_tokens(opinion, ctx.config.chunking.tokenizer_id)}};
  write_json_file(dir / "ingest.json", stats);
  return stats;
}

inline Json coref_stage(const RunContext& ctx, const std::string& case_id, llm::Gateway& gateway) {
  auto dir = ctx.case_dir(case_id);
  if (ctx.config.mode != Mode::CoreKG) throw Error(Errc::ConfigInvalid, "coreference runs only in corekg mode");
  const std::string text = read_file(dir / "opinion.txt");
  coref::Resolver resolver(ctx.templates, ctx.config.resolution, gateway, ctx.config.endpoint.model_id);
  auto result = resolver.resolve_sequential(text);
  write_file(dir / "coref.txt", result.text);
  write_file(dir / "coref_trace.jsonl", coref::trace_to_jsonl(result.trace));
  int calls = 0, passthrough = 0;
  for (const auto& t : result.trace) {
    calls += t.calls;
    if (t.outcome == coref::StageOutcome::Passthrough) ++passthrough;
  }
  Json stats = {{"stages", result.trace.size()},
                {"calls", calls},
                {"passthrough_stages", passthrough},
                {"output_tokens", corpus::count_tokens(result.text)}};
  write_json_file(dir / "coref.json", stats);
  return stats;
}

inline Json extract_stage(const RunContext& ctx, const std::string& case_id, llm::Gateway& gateway) {
  auto dir = ctx.case_dir(case_id);
  const bool corekg = ctx.config.mode == Mode::CoreKG;
  const std::string text = read_file(dir / (corekg ? "coref.txt" : "opinion.txt"));
  const auto chunks = corpus::chunk_text(text, ctx.config.chunking);

  std::string chunks_jsonl;
  for (const auto& c : chunks)
    chunks_jsonl += Json{{"chunk_id", c.chunk_id}, {"token_begin", c.token_begin}, {"token_end", c.token_end},
                         {"sha256", sha256_hex(c.text)}}
                        .dump() +
                    "\n";
  write_file(dir / "chunks.jsonl", chunks_jsonl);

  RecordSet records;
  Json reports = Json::array();
  std::size_t candidates = 0, parsed = 0, skipped = 0, empty_chunks = 0;
  fs::create_directories(dir / "extraction");
  for (const auto& c : chunks) {
    llm::CompletionRequest req;
    req.model_id = ctx.config.endpoint.model_id;
    req.user_text = extraction::build_extraction_prompt(c.text, ctx.prompt_config);
    req.temperature = 0.0;
    const std::string raw = gateway.complete(req).text;
    write_file(dir / "extraction" / chunk_file_name(c.chunk_id), raw);
    auto result = extraction::parse_extraction_output(raw, ctx.prompt_config.delimiters, {case_id, c.chunk_id});
    Json rep = result.report.to_json();
    rep["chunk_id"] = c.chunk_id;
    reports.push_back(rep);
    candidates += result.report.candidates;
    parsed += result.report.parsed;
    skipped += result.report.skipped.size();
    if (result.report.empty_output()) ++empty_chunks;
    for (auto& e : result.entities) records.entities.push_back(std::move(e));
    for (auto& r : result.relationships) records.relationships.push_back(std::move(r));
  }

  Json stats = {{"chunks", chunks.size()},
                {"candidates", candidates},
                {"parsed", parsed},
                {"skipped", skipped},
                {"empty_chunks", empty_chunks},
                {"entities_parsed", records.entities.size()},
                {"relationships_parsed", records.relationships.size()}};
  if (corekg) {
    auto filtered = extraction::filter_government_entities(records.entities, records.relationships, ctx.lexicon);
    stats["removed_entities"] = filtered.removed_entities;
    stats["removed_relationships"] = filtered.removed_relationships;
    records.entities = std::move(filtered.entities);
    records.relationships = std::move(filtered.relationships);
  }
  write_json_file(dir / "parse_report.json", reports);
  write_json_file(dir / "records.json", records_to_json(records));
  write_json_file(dir / "extract.json", stats);
  return stats;
}

inline Json build_stage(const RunContext& ctx, const std::string& case_id) {
  auto dir = ctx.case_dir(case_id);
  auto records = records_from_json(read_json_file(dir / "records.json"));
  auto built = graph::build_graph(records.entities, records.relationships, case_id, ctx.config.mode);
  const std::string xml = graph::serialize_graphml(built.graph);
  write_file(ctx.graph_path(case_id), xml);
  auto tables = graph::export_tabular(built.graph);
  write_file(ctx.table_path(case_id, "nodes"), tables.nodes_csv);
  write_file(ctx.table_path(case_id, "edges"), tables.edges_csv);

  std::map<std::string, std::size_t> by_type;
  for (const auto& [k, n] : built.graph.nodes) ++by_type[std::string(to_string(k.entity_type))];
  auto summary = graph::degree_stats(built.graph);
  Json stats = {{"nodes", built.graph.node_count()},
                {"edges", built.graph.edge_count()},
                {"max_degree", summary.max_degree},
                {"nodes_by_type", by_type},
                {"graphml_sha256", sha256_hex(xml)},
                {"warnings",
                 {{"unmatched_endpoints", built.warnings.unmatched_endpoints},
                  {"ambiguous_endpoints", built.warnings.ambiguous_endpoints},
                  {"dropped_edges", built.warnings.dropped_edges}}}};
  write_json_file(dir / "build.json", stats);
  return stats;
}

// ---------------------------------------------------------------------------
// Orchestration

enum class Stage { Ingest, Coref, Extract, Build };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Coref: return "coref";
    case Stage::Extract: return "extract";
    case Stage::Build: return "build";
  }
  return "?";
}

struct CaseOutcome {
  std::string case_id;
  bool ok = false;
  bool resumed = false;
  std::string failed_stage;
  std::string error_code;
  std::string error;
  double seconds = 0.0;
};

struct RunSummary {
  std::vector<CaseOutcome> cases;
  std::size_t llm_calls = 0;
  std::size_t llm_failures = 0;

  bool all_ok() const {
    return std::all_of(cases.begin(), cases.end(), [](const CaseOutcome& c) { return c.ok; });
  }
  std::size_t failed() const {
    return static_cast<std::size_t>(std::count_if(cases.begin(), cases.end(), [](const CaseOutcome& c) { return !c.ok; }));
  }
};

struct RunOptions {
  bool force = false;
  std::vector<Stage> stages{Stage::Ingest, Stage::Coref, Stage::Extract, Stage::Build};
  std::vector<std::string> only_cases;  // empty = all
  std::function<void(const std::string&)> log;  // progress lines
};

/// Case ids and error details stay deterministic; timings go to run_log.json.
inline Json case_status(const RunContext& ctx, const CaseOutcome& o) {
  Json j = {{"case_id", o.case_id}, {"config_digest", ctx.config_digest}, {"status", o.ok ? "ok" : "failed"}};
  if (!o.ok) {
    j["failed_stage"] = o.failed_stage;
    j["error_code"] = o.error_code;
    j["error"] = o.error;
  }
  return j;
}

inline bool case_complete(const RunContext& ctx, const std::string& case_id) {
  auto p = ctx.case_dir(case_id) / "case.json";
  if (!fs::exists(p)) return false;
  Json j = Json::parse(read_file(p), nullptr, false);
  return !j.is_discarded() && j.value("status", "") == "ok" && j.value("config_digest", "") == ctx.config_digest &&
         fs::exists(ctx.graph_path(case_id));
}

/// Run manifest assembled from the per-case stage files. Contains no
/// timestamps or counters that vary between identical runs.
inline Json build_manifest(const RunContext& ctx, const std::vector<std::string>& case_ids) {
  const auto& c = ctx.config;
  Json prompts = {{"extraction", extraction::prompt_digest(ctx.prompt_config)}};
  if (c.mode == Mode::CoreKG) prompts["coref_templates"] = ctx.templates.digest();
  Json type_order = Json::array();
  for (auto t : c.resolution.type_order) type_order.push_back(to_string(t));

  Json cases = Json::array();
  Json totals = {{"cases", case_ids.size()}, {"ok", 0}, {"failed", 0}, {"nodes", 0}, {"edges", 0},
                 {"unmatched_endpoints", 0}, {"ambiguous_endpoints", 0}, {"dropped_edges", 0}};
  for (const auto& id : case_ids) {
    auto dir = ctx.case_dir(id);
    Json entry = {{"case_id", id}};
    Json status = fs::exists(dir / "case.json") ? read_json_file(dir / "case.json") : Json{{"status", "pending"}};
    entry["status"] = status.value("status", "pending");
    for (const char* k : {"failed_stage", "error_code", "error"})
      if (status.contains(k)) entry[k] = status[k];
    Json stats = Json::object();
    for (const char* stage : {"ingest", "coref", "extract", "build"})
      if (fs::exists(dir / (std::string(stage) + ".json"))) stats[stage] = read_json_file(dir / (std::string(stage) + ".json"));
    entry["stats"] = stats;
    if (entry["status"] == "ok") {
      totals["ok"] = totals["ok"].get<int>() + 1;
      entry["graphml"] = fs::relative(ctx.graph_path(id), c.output_dir).generic_string();
      if (stats.contains("build")) {
        const auto& b = stats["build"];
        totals["nodes"] = totals["nodes"].get<std::size_t>() + b["nodes"].get<std::size_t>();
        totals["edges"] = totals["edges"].get<std::size_t>() + b["edges"].get<std::size_t>();
        for (const char* w : {"unmatched_endpoints", "ambiguous_endpoints", "dropped_edges"})
          totals[w] = totals[w].get<std::size_t>() + b["warnings"][w].get<std::size_t>();
      }
    } else if (entry["status"] == "failed") {
      totals["failed"] = totals["failed"].get<int>() + 1;
    }
    cases.push_back(entry);
  }

  return {{"format_version", 1},
          {"config_digest", ctx.config_digest},
          {"mode", to_string(c.mode)},
          {"model_id", c.endpoint.model_id},
          {"backend", c.script_path ? "scripted" : "http"},
          {"chunking", {{"chunk_size", c.chunking.chunk_size}, {"overlap", c.chunking.overlap},
                        {"tokenizer", c.chunking.tokenizer_id}}},
          {"type_order", c.mode == Mode::CoreKG ? type_order : Json::array()},
          {"prompt_digests", prompts},
          {"lexicon_digest", ctx.lexicon.digest()},
          {"cases", cases},
          {"totals", totals}};
}

/// Runs the requested stages for every case on a bounded worker pool. A case
/// that throws is recorded and skipped; the others continue. Completed cases
/// whose config digest matches are skipped unless `force` is set.
inline RunSummary run_pipeline(const RunContext& ctx, std::shared_ptr<llm::Backend> backend, const RunOptions& options = {}) {
  const auto& c = ctx.config;
  auto docs = corpus::load_corpus(c.corpus_dir);
  if (!options.only_cases.empty()) {
    std::set<std::string> want(options.only_cases.begin(), options.only_cases.end());
    for (const auto& id : want)
      if (std::none_of(docs.begin(), docs.end(), [&](const auto& d) { return d.case_id == id; }))
        throw Error(Errc::ConfigInvalid, "case " + id + " not in corpus");
    std::erase_if(docs, [&](const auto& d) { return !want.count(d.case_id); });
  }
  fs::create_directories(c.output_dir);

  auto audit = std::make_shared<llm::AuditLog>(ctx.audit_path());
  llm::Gateway gateway(std::move(backend), c.retry, audit);

  auto has = [&](Stage s) { return std::find(options.stages.begin(), options.stages.end(), s) != options.stages.end(); };
  const bool full = has(Stage::Ingest) && has(Stage::Extract) && has(Stage::Build);
  const auto run_started = std::chrono::system_clock::now();

  RunSummary summary;
  summary.cases.resize(docs.size());
  std::mutex log_mu;
  auto log = [&](const std::string& line) {
    if (!options.log) return;
    std::lock_guard lock(log_mu);
    options.log(line);
  };

  auto process = [&](std::size_t i) {
    const auto& doc = docs[i];
    CaseOutcome& o = summary.cases[i];
    o.case_id = doc.case_id;
    const auto t0 = std::chrono::steady_clock::now();
    if (full && !options.force && case_complete(ctx, doc.case_id)) {
      o.ok = true;
      o.resumed = true;
      log(doc.case_id + ": complete, skipped");
      return;
    }
    Stage current = Stage::Ingest;
    try {
      auto dir = ctx.case_dir(doc.case_id);
      if (full) {
        fs::remove_all(dir);
        fs::remove(ctx.graph_path(doc.case_id));
      }
      for (Stage s : {Stage::Ingest, Stage::Coref, Stage::Extract, Stage::Build}) {
        if (!has(s)) continue;
        if (s == Stage::Coref && c.mode != Mode::CoreKG) continue;
        current = s;
        switch (s) {
          case Stage::Ingest: ingest_stage(ctx, doc); break;
          case Stage::Coref: coref_stage(ctx, doc.case_id, gateway); break;
          case Stage::Extract: extract_stage(ctx, doc.case_id, gateway); break;
          case Stage::Build: build_stage(ctx, doc.case_id); break;
        }
        log(doc.case_id + ": " + std::string(to_string(s)) + " done");
      }
      o.ok = true;
    } catch (const Error& e) {
      o.ok = false;
      o.failed_stage = std::string(to_string(current));
      o.error_code = std::string(to_string(e.code()));
      o.error = e.message();
    } catch (const std::exception& e) {
      o.ok = false;
      o.failed_stage = std::string(to_string(current));
      o.error_code = "Internal";
      o.error = e.what();
    }
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.ok) log(doc.case_id + ": FAILED in " + o.failed_stage + ": " + o.error);
    if (full || !o.ok) write_json_file(ctx.case_dir(doc.case_id) / "case.json", case_status(ctx, o));
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(c.parallelism), std::max<std::size_t>(docs.size(), 1));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < docs.size();) process(i);
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  summary.llm_calls = gateway.calls();
  summary.llm_failures = audit->failures();

  std::vector<std::string> all_ids;
  for (const auto& d : corpus::load_corpus(c.corpus_dir)) all_ids.push_back(d.case_id);
  if (has(Stage::Build)) write_json_file(ctx.manifest_path(), build_manifest(ctx, all_ids));

  Json run_log = {{"started_at", llm::utc_timestamp(run_started)},
                  {"finished_at", llm::utc_timestamp(std::chrono::system_clock::now())},
                  {"config_digest", ctx.config_digest},
                  {"llm_calls", summary.llm_calls},
                  {"llm_failures", summary.llm_failures},
                  {"parallelism", c.parallelism}};
  Json per_case = Json::array();
  for (const auto& o : summary.cases)
    per_case.push_back({{"case_id", o.case_id}, {"ok", o.ok}, {"resumed", o.resumed}, {"seconds", o.seconds}});
  run_log["cases"] = per_case;
  write_json_file(c.output_dir / "run_log.json", run_log);

  if (fs::exists(ctx.audit_path()))
    write_file(c.output_dir / "replay_script.jsonl", llm::serialize_script(llm::script_from_audit(read_file(ctx.audit_path()))));
  return summary;
}

inline std::string failure_table(const RunSummary& s) {
  std::string out = "case_id\tstage\terror_code\terror\n";
  for (const auto& o : s.cases)
    if (!o.ok) out += o.case_id + "\t" + o.failed_stage + "\t" + o.error_code + "\t" + o.error + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation over run directories

/// Expert inputs tied to one run's graphs.
struct RunAnnotations {
  std::optional<fs::path> overrides_path;
  std::optional<fs::path> noise_path;
};

struct EvalInputs {
  int threshold = eval::kDefaultThreshold;
  std::optional<fs::path> lexicon_path;  // noise terms applied to every case
  bool strict = true;
  eval::Averaging averaging = eval::Averaging::Macro;

  /// Noise terms default to the government lexicon when neither a lexicon nor
  /// an annotation file is given.
  eval::EvalOptions resolve(const RunAnnotations& a) const {
    eval::EvalOptions o;
    o.threshold = threshold;
    o.strict = strict;
    if (a.overrides_path) o.overrides = eval::parse_overrides(read_file(*a.overrides_path));
    if (a.noise_path) o.noise = eval::parse_noise_annotation(read_file(*a.noise_path));
    if (lexicon_path || !a.noise_path) {
      auto lex = lexicon_path ? extraction::Lexicon::load(*lexicon_path) : extraction::default_government_lexicon();
      o.noise.global_terms.insert(lex.terms().begin(), lex.terms().end());
    }
    return o;
  }
};

/// Metrics for every successful case of a run. A manifest case entry may carry
/// precomputed `metrics`, which are used as-is instead of the graph.
inline std::vector<eval::CaseMetrics> evaluate_run(const fs::path& run_dir, const eval::EvalOptions& options) {
  Json manifest = read_json_file(run_dir / "manifest.json");
  std::vector<eval::CaseMetrics> out;
  for (const auto& entry : manifest.at("cases")) {
    if (entry.value("status", "") != "ok") continue;
    if (entry.contains("metrics")) {
      auto m = eval::CaseMetrics::from_json(entry["metrics"]);
      m.case_id = entry.at("case_id").get<std::string>();
      out.push_back(m);
      continue;
    }
    auto g = graph::read_graphml(read_file(run_dir / entry.at("graphml").get<std::string>()));
    out.push_back(eval::evaluate_graph(g, options));
  }
  return out;
}

inline std::string case_metrics_table(const std::vector<eval::CaseMetrics>& cases) {
  std::string out = "case_id,total_nodes,cluster_count,duplicate_count,duplication_rate_pct,noise_count,noise_rate_pct\n";
  for (const auto& m : cases)
    out += graph::csv_field(m.case_id) + "," + std::to_string(m.total_nodes) + "," + std::to_string(m.cluster_count) +
           "," + std::to_string(m.duplicate_count) + "," + eval::format2(m.duplication_rate_pct) + "," +
           std::to_string(m.noise_count) + "," + eval::format2(m.noise_rate_pct) + "\n";
  return out;
}

/// Single-run evaluation written to `out_dir`.
inline std::vector<eval::CaseMetrics> run_single_eval(const fs::path& run_dir, const EvalInputs& inputs,
                                                     const RunAnnotations& annotations, const fs::path& out_dir) {
  auto metrics = evaluate_run(run_dir, inputs.resolve(annotations));
  auto agg = eval::aggregate(metrics, inputs.averaging);
  Json cases = Json::array();
  for (const auto& m : metrics) cases.push_back(m.to_json());
  write_file(out_dir / "case_metrics.csv", case_metrics_table(metrics));
  write_json_file(out_dir / "metrics.json",
                  {{"averaging", inputs.averaging == eval::Averaging::Macro ? "macro" : "micro"},
                   {"cases", cases},
                   {"aggregate",
                    {{"cases", agg.cases},
                     {"total_nodes", agg.total_nodes},
                     {"duplicate_count", agg.duplicate_count},
                     {"noise_count", agg.noise_count},
                     {"duplication_rate_pct", eval::round2(agg.duplication_rate_pct)},
                     {"noise_rate_pct", eval::round2(agg.noise_rate_pct)}}}});
  return metrics;
}

/// Paired baseline/corekg evaluation: per_case.csv, comparison.csv and
/// summary.json in `out_dir`.
inline eval::MetricsReport run_eval(const fs::path& baseline_dir, const fs::path& corekg_dir, const EvalInputs& inputs,
                                    const fs::path& out_dir, const RunAnnotations& baseline_annotations = {},
                                    const RunAnnotations& corekg_annotations = {}) {
  auto b = evaluate_run(baseline_dir, inputs.resolve(baseline_annotations));
  auto c = evaluate_run(corekg_dir, inputs.resolve(corekg_annotations));
  auto report = eval::aggregate_report(b, c, inputs.averaging);
  write_file(out_dir / "per_case.csv", eval::per_case_table(report));
  write_file(out_dir / "comparison.csv", eval::comparison_table(report));
  write_json_file(out_dir / "summary.json", eval::summary_json(report));
  return report;
}

}  // namespace corekg::pipeline
