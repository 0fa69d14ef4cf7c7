#pragma once

#include <string>
#include <vector>

#include "corekg/entity_type.hpp"

namespace corekg::coref {

inline constexpr std::string_view kInputSlot = "{input_text}";

struct FewShotExample {
  std::string input;
  std::string output;

  bool operator==(const FewShotExample&) const = default;
};

/// Built-in prompt content per entity type. Persona, task and context share
/// one skeleton; rules and examples are type specific.
namespace seed {

inline std::string persona() {
  return "You are a highly precise and intelligent coreference resolution system designed to support "
         "named entity recognition (NER) and knowledge graph construction.";
}

inline std::string task(EntityType t) {
  std::string name(display_name(t));
  return "Your task is to resolve all coreferences related to the " + name +
         " entity type in a given input text, while strictly preserving its original structure and "
         "wording. Do not summarize, explain, or alter the text. Only return the full, unmodified input "
         "with " + name + " coreferences resolved according to the rules below.";
}

inline std::string context(EntityType t) {
  std::string lower = to_lower(display_name(t));
  return "The resolved output will be used for extracting " + lower +
         " entities and relationships in the context of human smuggling networks. Maintaining accuracy "
         "and consistency is therefore critical.\n\n"
         "Note: This is an unsupervised coreference resolution task. The rules guide you in resolving " +
         lower +
         " references. The examples do not cover every scenario; infer and apply coreference logic from "
         "context even when phrasing or structure varies.";
}

inline std::string rules(EntityType t) {
  switch (t) {
    case EntityType::Person:
      return "- After a person is introduced with their full name (e.g., P.S.), replace all later mentions, "
             "including last name only (e.g., S.), role + last name (e.g., Agent S.) and abbreviated forms "
             "(e.g., BPA S.), with the full name only.\n"
             "- Strip titles from resolved mentions. \"Agent I.\" or \"Agent J.C.D.A.\" resolve to \"H.D.I.\" "
             "or \"J.C.D.A.\".\n"
             "- For compound names, match on the final component and resolve to the full name.\n"
             "- If two or more individuals share a last name, resolve ambiguous mentions conservatively to the "
             "most recently introduced full name unless context clearly indicates otherwise.\n"
             "- If abbreviated titles appear (BPA, Agent, Officer + last name), remove the title and resolve to "
             "the full name.\n"
             "- A person introduced as \"Defendant M.D.J.G.\" resolves to \"M.D.J.G.\" immediately and "
             "throughout.\n"
             "- A person introduced as \"Border Patrol Agent H.D.I.\" keeps that first mention; later mentions "
             "(e.g., \"Agent I.\") resolve to \"H.D.I.\".\n"
             "- Apply replacements across the entire document, including headers, transcripts, footnotes and "
             "end-of-document text.\n"
             "Multiple defendants:\n"
             "- If multiple defendants are introduced, resolve \"the defendants\" to a comma-separated list of "
             "their full names in the order introduced.\n"
             "- \"The defendant\" (singular) resolves to the most recently mentioned full defendant name unless "
             "context indicates otherwise.\n"
             "- Always resolve such role-based mentions, even in peripheral document sections.";
    case EntityType::Location:
      return "- Resolve partial place mentions to the most complete form introduced in the text "
             "(e.g., \"Laredo\" after \"Laredo, Texas\" becomes \"Laredo, Texas\").\n"
             "- Resolve deictic references such as \"the city\" or \"the house\" only when the referent is "
             "unambiguous in context.\n"
             "- Keep places of different granularity distinct: a country is not its border region, and a "
             "city is not its state.\n"
             "- Do not turn organizations, vehicles or routes into locations.\n"
             "- Apply replacements across the entire document, including footnotes.";
    case EntityType::Routes:
      return "- Resolve colloquial or abbreviated route names to the most complete formal identifier "
             "introduced (e.g., \"I-35\" and \"the interstate\" become \"Interstate 35\").\n"
             "- A described route (e.g., \"the road from Laredo to Dallas\") resolves to its formal identifier "
             "only when the text states they are the same.\n"
             "- Never merge two different highways, roads or crossings.\n"
             "- Apply replacements across the entire document, including footnotes.";
    case EntityType::Organization:
      return "- Resolve abbreviations, short forms and partial names to the full organization name introduced "
             "(e.g., \"J.\" after \"J.I. Inc.\" becomes \"J.I. Inc.\").\n"
             "- Resolve references such as \"the company\", \"the ring\" or \"the cartel\" to the named "
             "organization when the referent is unambiguous.\n"
             "- Keep distinct organizations distinct even when they share words.\n"
             "- Apply replacements across the entire document, including footnotes.";
    case EntityType::MeansOfTransportation:
      return "- Resolve later vehicle mentions (\"the truck\", \"the vehicle\", \"his pickup\") to the most "
             "specific description introduced for that vehicle (e.g., \"white pickup truck\").\n"
             "- Ownership phrasing (\"Y.'s trailer\") resolves to the same vehicle when context shows it is the "
             "same one.\n"
             "- Tractor and trailer remain separate vehicles unless the text treats them as one unit.\n"
             "- Never merge two vehicles that the text describes as different.";
    case EntityType::MeansOfCommunication:
      return "- Resolve later device or channel mentions (\"the phone\", \"the device\", \"the app\") to the "
             "most specific description introduced (e.g., \"black cell phone\", \"WhatsApp\").\n"
             "- Keep devices owned by different people distinct.\n"
             "- Apply replacements across the entire document, including footnotes.";
    case EntityType::SmuggledItems:
      return "- Resolve later mentions of smuggled people or goods (\"the aliens\", \"the migrants\", \"the "
             "load\", \"the drugs\") to the most specific description introduced (e.g., \"undocumented "
             "aliens\", \"cocaine\").\n"
             "- Keep different loads or groups distinct when the text separates them by time or place.\n"
             "- Do not resolve legal concepts (charges, verdicts, evidence) as smuggled items.";
  }
  return "";
}

inline std::vector<FewShotExample> examples(EntityType t) {
  switch (t) {
    case EntityType::Person:
      return {
          {"Border Patrol Agent B.S. observed the vehicle. BPA S. contacted another agent.",
           "Border Patrol Agent B.S. observed the vehicle. B.S. contacted another agent."},
          {"Border Patrol Agent H.D.I. led the operation. I. coordinated with the local sheriff.",
           "Border Patrol Agent H.D.I. led the operation. H.D.I. coordinated with the local sheriff."},
      };
    case EntityType::Location:
      return {
          {"The group crossed near Laredo, Texas. Agents later stopped them north of Laredo.",
           "The group crossed near Laredo, Texas. Agents later stopped them north of Laredo, Texas."},
      };
    case EntityType::Routes:
      return {
          {"The van traveled north on Interstate 35. Agents followed it along I-35.",
           "The van traveled north on Interstate 35. Agents followed it along Interstate 35."},
      };
    case EntityType::Organization:
      return {
          {"The drivers worked for J.I. Inc. Records showed J. paid them in cash.",
           "The drivers worked for J.I. Inc. Records showed J.I. Inc. paid them in cash."},
      };
    case EntityType::MeansOfTransportation:
      return {
          {"Y. drove a white pickup truck to the ranch. Agents searched the truck.",
           "Y. drove a white pickup truck to the ranch. Agents searched the white pickup truck."},
      };
    case EntityType::MeansOfCommunication:
      return {
          {"R. used a black cell phone to call the driver. The phone was seized.",
           "R. used a black cell phone to call the driver. The black cell phone was seized."},
      };
    case EntityType::SmuggledItems:
      return {
          {"The trailer held twelve undocumented aliens. The aliens were taken to the station.",
           "The trailer held twelve undocumented aliens. The twelve undocumented aliens were taken to the "
           "station."},
      };
  }
  return {};
}

inline std::string input_section(EntityType t) {
  return "Resolve all " + std::string(display_name(t)) +
         " entity coreferences in the following document, including those in footnotes and headers. Return "
         "only the modified text. If none exist, return the input unchanged. Do not summarize or explain.\n"
         "Input_text: " + std::string(kInputSlot);
}

}  // namespace seed
}  // namespace corekg::coref
