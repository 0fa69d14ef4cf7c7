#include <catch_amalgamated.hpp>

#include <algorithm>
#include <string>
#include <vector>

#include "corekg/corpus.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace corekg;
using namespace corekg::corpus;

namespace {

std::string words(std::size_t n, const std::string& prefix = "w") {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += (i % 7 == 0) ? "\n" : " ";
    s += prefix + std::to_string(i);
  }
  return s;
}

std::vector<std::pair<std::size_t, std::size_t>> spans_of(const std::vector<Chunk>& chunks) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& c : chunks) out.emplace_back(c.token_begin, c.token_end);
  return out;
}

}  // namespace

TEST_CASE("count_tokens uses whitespace runs") {
  CHECK(count_tokens("a b  c") == 3);
  CHECK(count_tokens("") == 0);
  CHECK(count_tokens("  \n\t ") == 0);
  CHECK(count_tokens(words(650)) == 650);
}

TEST_CASE("count_tokens rejects unknown tokenizers") {
  try {
    count_tokens("a b", "bpe");
    FAIL("expected UnknownTokenizer");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnknownTokenizer);
  }
}

TEST_CASE("tokenizer registry accepts custom schemes") {
  TokenizerRegistry reg;
  reg.add("chars", [](std::string_view t) {
    std::vector<TokenSpan> out;
    for (std::size_t i = 0; i < t.size(); ++i) out.push_back({i, i + 1});
    return out;
  });
  CHECK(count_tokens("abcd", "chars", reg) == 4);
  ChunkingConfig cfg{3, 1, "chars"};
  auto chunks = chunk_text("abcdefg", cfg, reg);
  CHECK(spans_of(chunks) == std::vector<std::pair<std::size_t, std::size_t>>{{0, 3}, {2, 5}, {4, 7}});
  CHECK(chunks[1].text == "cde");
}

TEST_CASE("chunk_text sliding window examples") {
  ChunkingConfig cfg;  // 300 / 100
  CHECK(spans_of(chunk_text(words(650), cfg)) ==
        std::vector<std::pair<std::size_t, std::size_t>>{{0, 300}, {200, 500}, {400, 650}});
  CHECK(spans_of(chunk_text(words(250), cfg)) == std::vector<std::pair<std::size_t, std::size_t>>{{0, 250}});
  CHECK(spans_of(chunk_text(words(300), cfg)) == std::vector<std::pair<std::size_t, std::size_t>>{{0, 300}});
}

TEST_CASE("chunk text is the source substring of the window") {
  std::string text = "  alpha beta\n gamma   delta epsilon  ";
  auto chunks = chunk_text(text, ChunkingConfig{2, 1, "whitespace"});
  REQUIRE(chunks.size() == 4);
  CHECK(chunks[0].text == "alpha beta");
  CHECK(chunks[1].text == "beta\n gamma");
  CHECK(chunks[3].text == "delta epsilon");
  for (std::size_t i = 0; i < chunks.size(); ++i) CHECK(chunks[i].chunk_id == i);
}

TEST_CASE("chunk_text errors") {
  try {
    chunk_text("   \n ", ChunkingConfig{});
    FAIL("expected EmptyDocument");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyDocument);
  }
  CHECK_THROWS_AS(chunk_text("a b", ChunkingConfig{0, 0, "whitespace"}), Error);
  CHECK_THROWS_AS(chunk_text("a b", ChunkingConfig{10, 10, "whitespace"}), Error);
  CHECK_THROWS_AS(chunk_text("a b", ChunkingConfig{10, 2, "nope"}), Error);
}

TEST_CASE("chunking properties on random inputs") {
  gen::Rng rng(0xC0FFEE);
  for (int iter = 0; iter < 400; ++iter) {
    const std::size_t total = 1 + rng.below(1500);
    const std::size_t size = 1 + rng.below(400);
    const std::size_t overlap = rng.below(size);
    const std::string text = words(total, "t");
    auto chunks = chunk_text(text, ChunkingConfig{size, overlap, "whitespace"});
    INFO("total=" << total << " size=" << size << " overlap=" << overlap);

    REQUIRE(spans_of(chunks) == oracle::chunk_spans(total, size, overlap));
    CHECK(chunks.size() == oracle::expected_chunk_count(total, size, overlap));

    std::vector<int> covered(total, 0);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      const auto& c = chunks[i];
      CHECK(c.token_end - c.token_begin <= size);
      for (std::size_t t = c.token_begin; t < c.token_end; ++t) covered[t] = 1;
      if (i > 0) {
        const auto& p = chunks[i - 1];
        CHECK(c.token_end > p.token_end);  // never contained in the previous chunk
        CHECK(p.token_end - c.token_begin == std::min(overlap, p.token_end - p.token_begin));
      }
    }
    CHECK(chunks.back().token_end == total);
    CHECK(std::find(covered.begin(), covered.end(), 0) == covered.end());

    // Reconstruct the token sequence from non-overlapping parts.
    std::vector<std::string> rebuilt;
    std::size_t next = 0;
    for (const auto& c : chunks) {
      auto toks = split(c.text, " ");
      std::vector<std::string> flat;
      for (auto& t : toks)
        for (auto& u : split(t, "\n"))
          if (!u.empty()) flat.push_back(u);
      REQUIRE(flat.size() == c.token_end - c.token_begin);
      for (std::size_t t = next; t < c.token_end; ++t) rebuilt.push_back(flat[t - c.token_begin]);
      next = c.token_end;
    }
    REQUIRE(rebuilt.size() == total);
    for (std::size_t t = 0; t < total; ++t) REQUIRE(rebuilt[t] == "t" + std::to_string(t));
  }
}

TEST_CASE("extract_opinion takes heading to next heading") {
  CaseDocument doc{"c1", "Title\nOpinion\nThe body text.\nEND OF DOCUMENT\n", std::nullopt};
  CHECK(extract_opinion(doc) == "The body text.");
  REQUIRE(doc.opinion_text);
  CHECK(*doc.opinion_text == "The body text.");
  CHECK(doc.raw_text.find(*doc.opinion_text) != std::string::npos);

  CaseDocument upper{"c2", "OPINION\nBody in caps case.\nEnd of Document", std::nullopt};
  CHECK(extract_opinion(upper) == "Body in caps case.");

  CaseDocument by{"c3", "Counsel\nX\nOpinion by: SMITH, Circuit Judge\nFirst line.\nSecond line.\nDissent by: JONES\nNo.",
                  std::nullopt};
  CHECK(extract_opinion(by) == "First line.\nSecond line.");

  CaseDocument to_end{"c4", "Opinion:\nRuns to the end.\n", std::nullopt};
  CHECK(extract_opinion(to_end) == "Runs to the end.");
}

TEST_CASE("extract_opinion ignores the word inside sentences") {
  CaseDocument doc{"c", "In my opinion this is not a heading.\nOpinion\nReal body.\n", std::nullopt};
  CHECK(extract_opinion(doc) == "Real body.");
  CHECK_FALSE(heading_matches("Opinionated remarks", "Opinion by*"));
  CHECK(heading_matches("opinion BY  the court", "Opinion by*"));
  CHECK(heading_matches("  Opinion:  ", "Opinion"));
}

TEST_CASE("extract_opinion errors") {
  CaseDocument none{"c", "Core Terms\nNothing here\n", std::nullopt};
  try {
    extract_opinion(none);
    FAIL("expected MissingOpinionSection");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingOpinionSection);
  }
  CaseDocument empty{"c", "", std::nullopt};
  try {
    extract_opinion(empty);
    FAIL("expected EmptyDocument");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyDocument);
  }
  CaseDocument hollow{"c", "Opinion\n\nEnd of Document\n", std::nullopt};
  CHECK_THROWS_AS(extract_opinion(hollow), Error);
}

TEST_CASE("extract_opinion is idempotent under rewrapping") {
  gen::Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    std::string body;
    const int lines = rng.between(1, 6);
    for (int l = 0; l < lines; ++l) {
      if (l) body += "\n";
      body += gen::description(rng) + " x" + std::to_string(l);
    }
    CaseDocument doc{"c", "Header\nOpinion\n" + body + "\nEnd of Document\n", std::nullopt};
    auto once = extract_opinion(doc);
    CaseDocument again{"c", "Opinion\n" + once + "\nEnd of Document", std::nullopt};
    CHECK(extract_opinion(again) == once);
    CHECK(doc.raw_text.find(once) != std::string::npos);
  }
}

TEST_CASE("load_corpus reads files, manifest ids and sorts") {
  testing_support::TempDir dir;
  write_file(dir / "b.txt", "Opinion\nB");
  write_file(dir / "a.txt", "Opinion\nA");
  write_file(dir / "notes.md", "ignored");
  auto docs = load_corpus(dir.path());
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].case_id == "a");
  CHECK(docs[1].case_id == "b");

  write_file(dir / "corpus.manifest", "# ids\nb.txt = 2019-US-117\n");
  docs = load_corpus(dir.path());
  CHECK(docs[0].case_id == "2019-US-117");
  CHECK(docs[0].raw_text == "Opinion\nB");

  write_file(dir / "corpus.manifest", "b.txt = a\n");
  CHECK_THROWS_AS(load_corpus(dir.path()), Error);

  write_file(dir / "corpus.manifest", "missing.txt = z\n");
  CHECK_THROWS_AS(load_corpus(dir.path()), Error);

  write_file(dir / "corpus.manifest", "no equals sign\n");
  CHECK_THROWS_AS(load_corpus(dir.path()), ParseError);

  try {
    load_corpus(dir / "absent");
    FAIL("expected ConfigInvalid");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ConfigInvalid);
  }
}
