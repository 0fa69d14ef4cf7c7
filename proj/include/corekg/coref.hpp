#pragma once

#include <algorithm>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "corekg/corpus.hpp"
#include "corekg/coref_templates.hpp"
#include "corekg/entity_type.hpp"
#include "corekg/error.hpp"
#include "corekg/llm_gateway.hpp"
#include "corekg/text.hpp"

namespace corekg::coref {

/// One prompt per entity type. `input_section` carries the single input slot.
struct CorefPromptTemplate {
  EntityType entity_type = EntityType::Person;
  std::string persona_text;
  std::string task_text;
  std::string context_text;
  std::string rules_text;
  std::vector<FewShotExample> fewshot_examples;
  std::string input_section;
  std::string input_slot = std::string(kInputSlot);

  void validate() const {
    auto missing = [&](std::string_view what) {
      throw Error(Errc::TemplateInvalid,
                  std::string(to_string(entity_type)) + " template is missing its " + std::string(what));
    };
    if (trim(persona_text).empty()) missing("persona");
    if (trim(task_text).empty()) missing("task description");
    if (trim(context_text).empty()) missing("context");
    if (trim(rules_text).empty()) missing("rules");
    if (fewshot_examples.empty()) missing("few-shot examples");
    for (const auto& ex : fewshot_examples)
      if (trim(ex.input).empty() || trim(ex.output).empty()) missing("few-shot example text");
    if (input_slot.empty()) missing("input slot marker");

    std::size_t slots = count_occurrences(input_section, input_slot);
    for (const auto* part : {&persona_text, &task_text, &context_text, &rules_text})
      slots += count_occurrences(*part, input_slot);
    for (const auto& ex : fewshot_examples)
      slots += count_occurrences(ex.input, input_slot) + count_occurrences(ex.output, input_slot);
    if (slots != 1 || count_occurrences(input_section, input_slot) != 1)
      throw Error(Errc::TemplateInvalid, std::string(to_string(entity_type)) +
                                             " template must contain exactly one input slot, in its input section");
  }

  bool operator==(const CorefPromptTemplate&) const = default;
};

inline CorefPromptTemplate default_template(EntityType t) {
  CorefPromptTemplate tpl;
  tpl.entity_type = t;
  tpl.persona_text = seed::persona();
  tpl.task_text = seed::task(t);
  tpl.context_text = seed::context(t);
  tpl.rules_text = seed::rules(t);
  tpl.fewshot_examples = seed::examples(t);
  tpl.input_section = seed::input_section(t);
  return tpl;
}

/// Renders persona, task, context, rules, few-shot examples, input, in that
/// order. Only the template's own slot is substituted; slot-like text inside
/// `input_text` is left alone.
inline std::string build_coref_prompt(const CorefPromptTemplate& tpl, std::string_view input_text) {
  tpl.validate();
  std::string out;
  out += "- Goal -\n";
  out += trim(tpl.persona_text);
  out += ' ';
  out += trim(tpl.task_text);
  out += "\n\n";
  out += trim(tpl.context_text);
  out += "\n\n- Coreference Resolution Rules: ";
  out += display_name(tpl.entity_type);
  out += " Entity Type -\n";
  out += trim(tpl.rules_text);
  out += "\n\n- Examples -\n";
  for (std::size_t i = 0; i < tpl.fewshot_examples.size(); ++i) {
    out += "Example " + std::to_string(i + 1) + ":\n";
    out += "Input: " + tpl.fewshot_examples[i].input + "\n";
    out += "Output: " + tpl.fewshot_examples[i].output + "\n\n";
  }
  out += "- Input Text -\n";
  const std::size_t slot = tpl.input_section.find(tpl.input_slot);
  out.append(tpl.input_section, 0, slot);
  out.append(input_text);
  out.append(tpl.input_section, slot + tpl.input_slot.size());
  return out;
}

// ---------------------------------------------------------------------------
// Template files: `[section]` headers, one file per entity type.
//
//   [persona] [task] [context] [rules] [input]
//   [example.input] / [example.output]   (repeatable, in pairs)

inline std::string template_file_name(EntityType t) { return to_lower(to_string(t)) + ".txt"; }

inline CorefPromptTemplate parse_template(std::string_view content, EntityType t) {
  CorefPromptTemplate tpl;
  tpl.entity_type = t;
  std::string current;
  std::map<std::string, std::string> singles;
  std::optional<std::string> pending_input;
  std::string buffer;
  std::size_t line_no = 0;
  std::size_t section_line = 0;

  auto flush = [&]() {
    std::string body(trim(buffer));
    buffer.clear();
    if (current.empty()) {
      if (!body.empty()) throw ParseError(Errc::TemplateInvalid, section_line, "text before first section");
      return;
    }
    if (current == "example.input") {
      if (pending_input) throw ParseError(Errc::TemplateInvalid, section_line, "example input without output");
      pending_input = body;
    } else if (current == "example.output") {
      if (!pending_input) throw ParseError(Errc::TemplateInvalid, section_line, "example output without input");
      tpl.fewshot_examples.push_back({*pending_input, body});
      pending_input.reset();
    } else {
      if (!singles.emplace(current, body).second)
        throw ParseError(Errc::TemplateInvalid, section_line, "repeated section [" + current + "]");
    }
  };

  static const std::set<std::string> known = {"persona", "task",          "context",        "rules",
                                               "input",   "example.input", "example.output"};
  for (const auto& line : split_lines(content)) {
    ++line_no;
    auto t_line = trim(line);
    if (t_line.size() > 2 && t_line.front() == '[' && t_line.back() == ']') {
      std::string name = to_lower(t_line.substr(1, t_line.size() - 2));
      if (known.count(name)) {
        flush();
        current = name;
        section_line = line_no;
        continue;
      }
    }
    buffer += line;
    buffer += '\n';
  }
  flush();
  if (pending_input) throw ParseError(Errc::TemplateInvalid, line_no, "example input without output");

  tpl.persona_text = singles["persona"];
  tpl.task_text = singles["task"];
  tpl.context_text = singles["context"];
  tpl.rules_text = singles["rules"];
  tpl.input_section = singles["input"];
  tpl.validate();
  return tpl;
}

inline std::string serialize_template(const CorefPromptTemplate& tpl) {
  std::string out;
  auto section = [&](std::string_view name, std::string_view body) {
    out += "[";
    out += name;
    out += "]\n";
    out += body;
    out += "\n\n";
  };
  section("persona", tpl.persona_text);
  section("task", tpl.task_text);
  section("context", tpl.context_text);
  section("rules", tpl.rules_text);
  for (const auto& ex : tpl.fewshot_examples) {
    section("example.input", ex.input);
    section("example.output", ex.output);
  }
  section("input", tpl.input_section);
  return out;
}

/// Templates keyed by entity type; immutable once loaded.
class TemplateSet {
 public:
  static TemplateSet defaults() {
    TemplateSet set;
    for (EntityType t : kAllEntityTypes) set.templates_.emplace(t, default_template(t));
    return set;
  }

  /// Defaults overlaid with any `<type>.txt` files found in `dir`.
  static TemplateSet load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
      throw Error(Errc::ConfigInvalid, "template directory does not exist: " + dir.string());
    TemplateSet set = defaults();
    for (EntityType t : kAllEntityTypes) {
      auto path = dir / template_file_name(t);
      if (std::filesystem::exists(path)) set.templates_[t] = parse_template(read_file(path), t);
    }
    return set;
  }

  void write(const std::filesystem::path& dir) const {
    for (const auto& [t, tpl] : templates_) write_file(dir / template_file_name(t), serialize_template(tpl));
  }

  void set(CorefPromptTemplate tpl) {
    tpl.validate();
    templates_[tpl.entity_type] = std::move(tpl);
  }

  const CorefPromptTemplate& get(EntityType t) const {
    auto it = templates_.find(t);
    if (it == templates_.end())
      throw Error(Errc::TemplateInvalid, "no template registered for " + std::string(to_string(t)));
    return it->second;
  }

  bool contains(EntityType t) const { return templates_.count(t) != 0; }

  /// Digest over every template rendered with an empty input.
  std::string digest() const {
    std::string material;
    for (const auto& [t, tpl] : templates_) {
      material += to_string(t);
      material += '\x1e';
      material += build_coref_prompt(tpl, "");
      material += '\x1d';
    }
    return sha256_hex(material);
  }

 private:
  std::map<EntityType, CorefPromptTemplate> templates_;
};

// ---------------------------------------------------------------------------
// Resolution

enum class RejectPolicy { RetryOnceThenPassthrough, Fail };

inline std::string_view to_string(RejectPolicy p) {
  return p == RejectPolicy::Fail ? "fail" : "retry_once_then_passthrough";
}

inline RejectPolicy parse_reject_policy(std::string_view s) {
  std::string key = to_lower(trim(s));
  if (key == "fail") return RejectPolicy::Fail;
  if (key == "retry_once_then_passthrough" || key == "passthrough") return RejectPolicy::RetryOnceThenPassthrough;
  throw Error(Errc::ConfigInvalid, "unknown reject policy '" + std::string(s) + "'");
}

struct ResolutionPolicy {
  std::vector<EntityType> type_order{kAllEntityTypes.begin(), kAllEntityTypes.end()};
  // Accepted window for output/input token ratio; {0, inf} disables the guard.
  double ratio_low = 0.7;
  double ratio_high = 1.3;
  RejectPolicy on_reject = RejectPolicy::RetryOnceThenPassthrough;

  void validate() const {
    std::set<EntityType> seen(type_order.begin(), type_order.end());
    if (seen.size() != type_order.size()) throw Error(Errc::ConfigInvalid, "type_order has duplicates");
    if (!(ratio_low < 1.0 && 1.0 < ratio_high) || ratio_low < 0.0)
      throw Error(Errc::ConfigInvalid, "length ratio bounds must satisfy 0 <= low < 1 < high");
  }
};

enum class StageOutcome { Accepted, Passthrough };

/// One entry per resolved type. `output_digest` is the digest of the text
/// handed to the next stage.
struct StageTrace {
  std::size_t stage = 0;
  EntityType entity_type = EntityType::Person;
  std::string input_digest;
  std::string output_digest;
  int calls = 0;
  std::vector<double> rejected_ratios;
  StageOutcome outcome = StageOutcome::Accepted;

  nlohmann::json to_json() const {
    return {
        {"stage", stage},
        {"entity_type", to_string(entity_type)},
        {"input_digest", input_digest},
        {"output_digest", output_digest},
        {"calls", calls},
        {"retries", calls - 1},
        {"rejected_ratios", rejected_ratios},
        {"outcome", outcome == StageOutcome::Accepted ? "accepted" : "passthrough"},
    };
  }
};

struct SequentialResult {
  std::string text;
  std::vector<StageTrace> trace;
};

inline std::string trace_to_jsonl(const std::vector<StageTrace>& trace) {
  std::string out;
  for (const auto& t : trace) {
    out += t.to_json().dump();
    out += '\n';
  }
  return out;
}

/// Runs the per-type prompts against a gateway. Stateless apart from the
/// referenced gateway; one instance may serve many cases concurrently.
class Resolver {
 public:
  Resolver(const TemplateSet& templates, ResolutionPolicy policy, llm::Gateway& gateway, std::string model_id)
      : templates_(templates), policy_(std::move(policy)), gateway_(gateway), model_id_(std::move(model_id)) {
    policy_.validate();
  }

  const ResolutionPolicy& policy() const { return policy_; }

  std::pair<std::string, StageTrace> resolve_entity_type(const std::string& text, EntityType type,
                                                         std::size_t stage = 0) const {
    const auto& tpl = templates_.get(type);
    llm::CompletionRequest request;
    request.model_id = model_id_;
    request.user_text = build_coref_prompt(tpl, text);
    request.temperature = 0.0;

    StageTrace trace;
    trace.stage = stage;
    trace.entity_type = type;
    trace.input_digest = sha256_hex(text);

    const double in_tokens = static_cast<double>(corpus::count_tokens(text));
    const int max_calls = policy_.on_reject == RejectPolicy::Fail ? 1 : 2;
    while (trace.calls < max_calls) {
      ++trace.calls;
      std::string out = gateway_.complete(request).text;
      const double out_tokens = static_cast<double>(corpus::count_tokens(out));
      double ratio;
      if (in_tokens == 0.0) ratio = out_tokens == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
      else ratio = out_tokens / in_tokens;
      if (ratio >= policy_.ratio_low && ratio <= policy_.ratio_high) {
        trace.output_digest = sha256_hex(out);
        trace.outcome = StageOutcome::Accepted;
        return {std::move(out), std::move(trace)};
      }
      trace.rejected_ratios.push_back(ratio);
    }
    if (policy_.on_reject == RejectPolicy::Fail)
      throw Error(Errc::ResolutionRejected, std::string(to_string(type)) + " output length ratio " +
                                                std::to_string(trace.rejected_ratios.back()) + " outside bounds");
    trace.output_digest = trace.input_digest;
    trace.outcome = StageOutcome::Passthrough;
    return {text, std::move(trace)};
  }

  SequentialResult resolve_sequential(const std::string& text) const {
    for (EntityType t : policy_.type_order) templates_.get(t);
    SequentialResult result;
    result.text = text;
    for (std::size_t i = 0; i < policy_.type_order.size(); ++i) {
      auto [out, trace] = resolve_entity_type(result.text, policy_.type_order[i], i);
      result.text = std::move(out);
      result.trace.push_back(std::move(trace));
    }
    return result;
  }

 private:
  const TemplateSet& templates_;
  ResolutionPolicy policy_;
  llm::Gateway& gateway_;
  std::string model_id_;
};

}  // namespace corekg::coref
