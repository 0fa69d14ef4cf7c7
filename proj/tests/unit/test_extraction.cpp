#include <catch_amalgamated.hpp>

#include <algorithm>
#include <string>
#include <vector>

#include "corekg/extraction.hpp"
#include "support/generators.hpp"

using namespace corekg;
using namespace corekg::extraction;

namespace {

const DelimiterSet kDelims;

std::vector<BlockKind> kinds(const std::vector<PromptBlock>& blocks) {
  std::vector<BlockKind> out;
  for (const auto& b : blocks) out.push_back(b.kind);
  return out;
}

}  // namespace

TEST_CASE("parses a typical model output") {
  const std::string raw =
      "(\"entity\"<|>CARLOS YANEZ<|>PERSON<|>Driver of the truck stopped at the checkpoint)##\n"
      "(\"entity\"<|>Laredo<|>LOCATION<|>City in Texas where the checkpoint is located)##\n"
      "(\"entity\"<|>Interstate 35<|>ROUTES<|>Highway the truck travelled north on)##\n"
      "(\"entity\"<|>white pickup truck<|>MEANS_OF_TRANSPORTATION<|>Vehicle used to move the aliens)##\n"
      "(\"relationship\"<|>CARLOS YANEZ<|>WHITE PICKUP TRUCK<|>Yanez drove the truck<|>9)##\n"
      "(\"relationship\"<|>Carlos  Yanez<|>Interstate 35<|>Yanez used the highway<|>7)\n"
      "<|COMPLETE|>";
  auto r = parse_extraction_output(raw, kDelims, {"case_a", 2});
  REQUIRE(r.entities.size() == 4);
  REQUIRE(r.relationships.size() == 2);
  CHECK(r.report.candidates == 6);
  CHECK(r.report.parsed == 6);
  CHECK(r.report.skipped.empty());
  CHECK(r.report.completion_seen);

  CHECK(r.entities[1].name == "LAREDO");
  CHECK(r.entities[1].entity_type == EntityType::Location);
  CHECK(r.entities[1].description == "City in Texas where the checkpoint is located");
  CHECK(r.entities[3].entity_type == EntityType::MeansOfTransportation);
  CHECK(r.entities[0].source.case_id == "case_a");
  CHECK(r.entities[0].source.chunk_id == 2);
  CHECK(r.relationships[1].source_name == "CARLOS YANEZ");
  CHECK(r.relationships[1].target_name == "INTERSTATE 35");
  CHECK(r.relationships[0].strength == 9);
}

TEST_CASE("malformed records are skipped with reasons") {
  const std::string raw =
      "Here are the results:\n"
      "(\"entity\"<|>A<|>PERSON)##\n"
      "(\"entity\"<|>B<|>VEHICLE<|>unknown type)##\n"
      "(\"relationship\"<|>A<|>B<|>x<|>11)##\n"
      "(\"relationship\"<|>A<|>B<|>x<|>-1)##\n"
      "(\"relationship\"<|>A<|>B<|>x<|>high)##\n"
      "(\"relationship\"<|>A<|>B<|>x)##\n"
      "(\"thing\"<|>A)##\n"
      "(\"entity\"<|>   <|>PERSON<|>blank name)##\n"
      "(\"entity\"<|>OK<|>person<|>lowercase type is fine)##\n"
      "<|COMPLETE|>\n(\"entity\"<|>AFTER<|>PERSON<|>ignored)";
  auto r = parse_extraction_output(raw, kDelims);
  CHECK(r.report.candidates == 9);
  CHECK(r.report.parsed == 1);
  REQUIRE(r.report.skipped.size() == 8);
  CHECK(r.entities.size() == 1);
  CHECK(r.entities[0].name == "OK");
  CHECK(r.report.skipped[0].line == 1);
  CHECK(r.report.skipped[1].line == 3);
  CHECK(r.report.skipped[0].reason.find("3 fields") != std::string::npos);
  CHECK(r.report.skipped[2].reason.find("outside 0-10") != std::string::npos);
  CHECK(r.report.skipped[3].reason.find("outside 0-10") != std::string::npos);
  CHECK(r.report.skipped[6].reason.find("unknown record tag") != std::string::npos);
  for (std::size_t i = 0; i < r.report.skipped.size(); ++i) CHECK(r.report.skipped[i].index == i);
  auto j = r.report.to_json();
  CHECK(j["skipped"].size() == 8);
}

TEST_CASE("output without completion token still parses") {
  auto r = parse_extraction_output("(\"entity\"<|>X<|>LOCATION<|>d)##(\"entity\"<|>Y<|>LOCATION<|>e)", kDelims);
  CHECK(r.entities.size() == 2);
  CHECK_FALSE(r.report.completion_seen);
  auto empty = parse_extraction_output("", kDelims);
  CHECK(empty.report.candidates == 0);
}

TEST_CASE("serialize then parse is the identity on valid records") {
  gen::Rng rng(2024);
  SourceRef src{"case", 3};
  for (int i = 0; i < 500; ++i) {
    auto recs = gen::records(rng, src);
    auto text = serialize_records(recs.entities, recs.relationships, kDelims);
    auto back = parse_extraction_output(text, kDelims, src);
    CHECK(back.entities == recs.entities);
    CHECK(back.relationships == recs.relationships);
    CHECK(back.report.skipped.empty());
    CHECK(back.report.completion_seen);
  }
}

TEST_CASE("parsing is total over arbitrary bytes") {
  gen::Rng rng(99);
  for (int i = 0; i < 3000; ++i) {
    auto bytes = gen::fuzz_bytes(rng);
    ExtractionResult r;
    REQUIRE_NOTHROW(r = parse_extraction_output(bytes, kDelims));
    CHECK(r.report.parsed + r.report.skipped.size() == r.report.candidates);
    CHECK(r.report.parsed == r.entities.size() + r.relationships.size());
    for (const auto& x : r.relationships) CHECK((x.strength >= 0 && x.strength <= 10));
    for (const auto& e : r.entities) CHECK(e.name == normalize_name(e.name));
  }
}

TEST_CASE("custom delimiters and delimiter validation") {
  DelimiterSet d{"|", ";;", "[END]"};
  EntityRecord e{"JOSE", EntityType::Person, "driver", {}};
  auto r = parse_extraction_output(serialize_records({e}, {}, d), d);
  REQUIRE(r.entities.size() == 1);
  CHECK(r.entities[0] == e);

  CHECK_THROWS_AS((DelimiterSet{"", "##", "<|COMPLETE|>"}.validate()), Error);
  CHECK_THROWS_AS((DelimiterSet{"#", "##", "<|COMPLETE|>"}.validate()), Error);
  CHECK_THROWS_AS((DelimiterSet{"<|>", "##", "<|>"}.validate()), Error);
  CHECK_THROWS_AS(parse_extraction_output("x", DelimiterSet{"a", "a", "b"}), Error);
}

TEST_CASE("government filter examples") {
  auto lex = default_government_lexicon();
  std::vector<EntityRecord> ents = {
      {"DISTRICT COURT", EntityType::Organization, "", {}},
      {"J.I. INC.", EntityType::Organization, "", {}},
      {"JURY", EntityType::Organization, "", {}},
      {"COURTNEY", EntityType::Person, "", {}},
  };
  std::vector<RelationshipRecord> rels = {
      {"JURY", "COURTNEY", "", 3, {}},
      {"J.I. INC.", "COURTNEY", "", 5, {}},
      {"COURTNEY", "district   court", "", 5, {}},
  };
  auto f = filter_government_entities(ents, rels, lex);
  CHECK(f.removed_entities == 2);
  CHECK(f.removed_relationships == 2);
  REQUIRE(f.entities.size() == 2);
  CHECK(f.entities[0].name == "J.I. INC.");
  CHECK(f.entities[1].name == "COURTNEY");
  REQUIRE(f.relationships.size() == 1);
  CHECK(f.relationships[0].source_name == "J.I. INC.");

  auto custom = Lexicon::from_text("# terms\n  border patrol \n\nCOURT\n");
  CHECK(custom.size() == 2);
  CHECK(custom.contains("Border  Patrol"));
  CHECK_FALSE(custom.contains("BORDER"));
  CHECK(custom.digest() != lex.digest());
}

TEST_CASE("filter never keeps lexicon names and keeps everything else") {
  gen::Rng rng(5);
  auto lex = default_government_lexicon();
  const auto& terms = default_government_terms();
  for (int i = 0; i < 200; ++i) {
    auto recs = gen::records(rng, {});
    for (auto& e : recs.entities)
      if (rng.chance(0.3)) e.name = normalize_name(rng.pick(terms));
    for (auto& r : recs.relationships)
      if (rng.chance(0.2)) r.target_name = normalize_name(rng.pick(terms));
    auto f = filter_government_entities(recs.entities, recs.relationships, lex);
    CHECK(f.entities.size() + f.removed_entities == recs.entities.size());
    CHECK(f.relationships.size() + f.removed_relationships == recs.relationships.size());
    for (const auto& e : f.entities) CHECK_FALSE(lex.contains(e.name));
    for (const auto& r : f.relationships) CHECK_FALSE((lex.contains(r.source_name) || lex.contains(r.target_name)));
    auto again = filter_government_entities(f.entities, f.relationships, lex);
    CHECK(again.removed_entities == 0);
    CHECK(again.removed_relationships == 0);
  }
}

TEST_CASE("modes differ only by the guided blocks") {
  auto corekg_blocks = extraction_prompt_blocks("TEXT", ExtractionPromptConfig::for_mode(Mode::CoreKG));
  auto baseline_blocks = extraction_prompt_blocks("TEXT", ExtractionPromptConfig::for_mode(Mode::Baseline));

  std::vector<PromptBlock> stripped;
  for (const auto& b : corekg_blocks)
    if (!is_corekg_only(b.kind)) stripped.push_back(b);
  CHECK(stripped == baseline_blocks);
  for (const auto& b : baseline_blocks) CHECK_FALSE(is_corekg_only(b.kind));

  auto ck = kinds(corekg_blocks);
  for (BlockKind k : {BlockKind::GovernmentScope, BlockKind::TypeDefinitions, BlockKind::GovernmentExclusion,
                      BlockKind::SequentialOrdering, BlockKind::FilterStep})
    CHECK(std::count(ck.begin(), ck.end(), k) == 1);

  auto cp = build_extraction_prompt("TEXT", ExtractionPromptConfig::for_mode(Mode::CoreKG));
  auto bp = build_extraction_prompt("TEXT", ExtractionPromptConfig::for_mode(Mode::Baseline));
  CHECK(cp.find("Filter Government Entities") != std::string::npos);
  CHECK(bp.find("Filter Government Entities") == std::string::npos);
  CHECK(bp.find("strictly in the following order") == std::string::npos);
  for (const auto* p : {&cp, &bp}) {
    CHECK(p->find("Entity_types: [") != std::string::npos);
    CHECK(p->find("Text: TEXT\nOutput:") != std::string::npos);
    CHECK(p->find("<|COMPLETE|>") != std::string::npos);
  }
  CHECK(prompt_digest(ExtractionPromptConfig::for_mode(Mode::CoreKG)) !=
        prompt_digest(ExtractionPromptConfig::for_mode(Mode::Baseline)));
}

TEST_CASE("guided prompt lists types in configured order") {
  auto cp = build_extraction_prompt("", ExtractionPromptConfig::for_mode(Mode::CoreKG));
  std::size_t last = 0;
  for (std::size_t i = 0; i < kAllEntityTypes.size(); ++i) {
    auto pos = cp.find(std::to_string(i + 1) + ". " + std::string(to_string(kAllEntityTypes[i])) + ":");
    REQUIRE(pos != std::string::npos);
    CHECK(pos >= last);
    last = pos;
  }
}

TEST_CASE("prompt config validation") {
  auto c = ExtractionPromptConfig::for_mode(Mode::CoreKG);
  c.entity_types.pop_back();
  try {
    c.validate();
    FAIL("expected ConfigInvalid");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ConfigInvalid);
  }
  auto dup = ExtractionPromptConfig::for_mode(Mode::CoreKG);
  dup.entity_types.back() = EntityType::Person;
  CHECK_THROWS_AS(dup.validate(), Error);

  auto flags = ExtractionPromptConfig::for_mode(Mode::Baseline);
  flags.include_government_filter = true;
  CHECK_THROWS_AS(flags.validate(), Error);

  auto defs = ExtractionPromptConfig::for_mode(Mode::CoreKG);
  defs.type_definitions.erase(EntityType::Routes);
  CHECK_THROWS_AS(defs.validate(), Error);
  auto baseline_defs = ExtractionPromptConfig::for_mode(Mode::Baseline);
  baseline_defs.type_definitions.clear();
  CHECK_NOTHROW(baseline_defs.validate());

  auto noex = ExtractionPromptConfig::for_mode(Mode::Baseline);
  noex.fewshot_examples.clear();
  CHECK_THROWS_AS(noex.validate(), Error);
}
