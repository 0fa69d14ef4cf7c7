#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "corekg/error.hpp"
#include "corekg/text.hpp"

namespace corekg {

/// The closed set of node categories. Enumerator order is the default
/// coreference resolution order.
enum class EntityType {
  Person,
  Location,
  Routes,
  Organization,
  MeansOfTransportation,
  MeansOfCommunication,
  SmuggledItems,
};

inline constexpr std::array<EntityType, 7> kAllEntityTypes = {
    EntityType::Person,
    EntityType::Location,
    EntityType::Routes,
    EntityType::Organization,
    EntityType::MeansOfTransportation,
    EntityType::MeansOfCommunication,
    EntityType::SmuggledItems,
};

constexpr std::string_view to_string(EntityType t) {
  switch (t) {
    case EntityType::Person: return "PERSON";
    case EntityType::Location: return "LOCATION";
    case EntityType::Routes: return "ROUTES";
    case EntityType::Organization: return "ORGANIZATION";
    case EntityType::MeansOfTransportation: return "MEANS_OF_TRANSPORTATION";
    case EntityType::MeansOfCommunication: return "MEANS_OF_COMMUNICATION";
    case EntityType::SmuggledItems: return "SMUGGLED_ITEMS";
  }
  return "";
}

/// Human-readable label, e.g. "Means of Transportation".
constexpr std::string_view display_name(EntityType t) {
  switch (t) {
    case EntityType::Person: return "Person";
    case EntityType::Location: return "Location";
    case EntityType::Routes: return "Routes";
    case EntityType::Organization: return "Organization";
    case EntityType::MeansOfTransportation: return "Means of Transportation";
    case EntityType::MeansOfCommunication: return "Means of Communication";
    case EntityType::SmuggledItems: return "Smuggled Items";
  }
  return "";
}

/// Accepts the canonical tag in any case, with spaces or underscores
/// ("means of transportation", "MEANS_OF_TRANSPORTATION").
inline std::optional<EntityType> parse_entity_type(std::string_view text) {
  std::string key = normalize_name(text);
  for (char& c : key)
    if (c == ' ' || c == '-') c = '_';
  for (EntityType t : kAllEntityTypes)
    if (key == to_string(t)) return t;
  if (key == "ROUTE") return EntityType::Routes;
  return std::nullopt;
}

inline EntityType require_entity_type(std::string_view text) {
  if (auto t = parse_entity_type(text)) return *t;
  throw Error(Errc::InvalidArgument, "unknown entity type '" + std::string(text) + "'");
}

/// Pipeline variant: the full guided pipeline or the minimally adapted baseline.
enum class Mode { CoreKG, Baseline };

constexpr std::string_view to_string(Mode m) { return m == Mode::CoreKG ? "corekg" : "baseline"; }

inline Mode parse_mode(std::string_view text) {
  std::string key = to_lower(trim(text));
  if (key == "corekg" || key == "core-kg" || key == "core_kg") return Mode::CoreKG;
  if (key == "baseline") return Mode::Baseline;
  throw Error(Errc::ConfigInvalid, "unknown mode '" + std::string(text) + "'");
}

}  // namespace corekg
