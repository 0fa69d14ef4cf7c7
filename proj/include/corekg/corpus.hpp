#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "corekg/error.hpp"
#include "corekg/text.hpp"

namespace corekg::corpus {

struct CaseDocument {
  std::string case_id;
  std::string raw_text;
  std::optional<std::string> opinion_text;
};

/// Half-open byte range of one token inside its source text.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct Chunk {
  std::size_t chunk_id = 0;
  std::string text;
  std::size_t token_begin = 0;  // inclusive
  std::size_t token_end = 0;    // exclusive

  bool operator==(const Chunk&) const = default;
};

struct ChunkingConfig {
  std::size_t chunk_size = 300;
  std::size_t overlap = 100;
  std::string tokenizer_id = "whitespace";

  std::size_t stride() const { return chunk_size - overlap; }

  void validate() const {
    if (chunk_size == 0) throw Error(Errc::ConfigInvalid, "chunk_size must be positive");
    if (overlap >= chunk_size)
      throw Error(Errc::ConfigInvalid, "overlap must be smaller than chunk_size");
  }
};

using Tokenizer = std::function<std::vector<TokenSpan>(std::string_view)>;

/// Maximal runs of non-whitespace.
inline std::vector<TokenSpan> whitespace_tokens(std::string_view text) {
  std::vector<TokenSpan> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == text.size()) break;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    spans.push_back({start, i});
  }
  return spans;
}

/// Named token-counting schemes. Immutable once built; pass by const
/// reference to share between workers.
class TokenizerRegistry {
 public:
  TokenizerRegistry() { tokenizers_.emplace("whitespace", whitespace_tokens); }

  void add(std::string id, Tokenizer tokenizer) { tokenizers_[std::move(id)] = std::move(tokenizer); }

  bool contains(std::string_view id) const { return tokenizers_.find(std::string(id)) != tokenizers_.end(); }

  const Tokenizer& get(std::string_view id) const {
    auto it = tokenizers_.find(std::string(id));
    if (it == tokenizers_.end())
      throw Error(Errc::UnknownTokenizer, "no tokenizer registered as '" + std::string(id) + "'");
    return it->second;
  }

 private:
  std::map<std::string, Tokenizer, std::less<>> tokenizers_;
};

inline const TokenizerRegistry& default_tokenizers() {
  static const TokenizerRegistry registry;
  return registry;
}

inline std::size_t count_tokens(std::string_view text, std::string_view tokenizer_id = "whitespace",
                                const TokenizerRegistry& registry = default_tokenizers()) {
  return registry.get(tokenizer_id)(text).size();
}

/// Sliding window over tokens with stride chunk_size - overlap. The last
/// window always ends at the final token; a window that would add no new
/// tokens is never emitted.
inline std::vector<Chunk> chunk_text(std::string_view text, const ChunkingConfig& config,
                                     const TokenizerRegistry& registry = default_tokenizers()) {
  config.validate();
  const auto spans = registry.get(config.tokenizer_id)(text);
  if (spans.empty()) throw Error(Errc::EmptyDocument, "nothing to chunk");

  const std::size_t total = spans.size();
  std::vector<Chunk> chunks;
  for (std::size_t start = 0;; start += config.stride()) {
    const std::size_t end = std::min(start + config.chunk_size, total);
    Chunk c;
    c.chunk_id = chunks.size();
    c.token_begin = start;
    c.token_end = end;
    c.text = std::string(text.substr(spans[start].begin, spans[end - 1].end - spans[start].begin));
    chunks.push_back(std::move(c));
    if (end == total) break;
  }
  return chunks;
}

// ---------------------------------------------------------------------------
// Opinion section

inline const std::vector<std::string>& default_opinion_headings() {
  static const std::vector<std::string> patterns = {"Opinion", "OPINION", "Opinion by*"};
  return patterns;
}

/// Section headings that close the opinion body.
inline const std::vector<std::string>& default_section_terminators() {
  static const std::vector<std::string> patterns = {
      "End of Document", "Dissent", "Dissent by*", "Concur by*", "Concurrence",
      "Core Terms",      "Case Summary", "Counsel",  "Judges",     "Headnotes",
  };
  return patterns;
}

/// Heading match on one line. A trailing `*` makes the pattern a prefix that
/// must be followed by whitespace, ':' or end of line; otherwise the whole
/// line (ignoring a trailing ':') must equal the pattern. Case-insensitive.
inline bool heading_matches(std::string_view line, std::string_view pattern) {
  line = trim(line);
  pattern = trim(pattern);
  if (pattern.empty()) return false;
  if (pattern.back() == '*') {
    std::string_view prefix = trim(pattern.substr(0, pattern.size() - 1));
    if (prefix.empty() || line.size() < prefix.size()) return false;
    if (!iequals(line.substr(0, prefix.size()), prefix)) return false;
    if (line.size() == prefix.size()) return true;
    char next = line[prefix.size()];
    return is_space(next) || next == ':';
  }
  if (!line.empty() && line.back() == ':') line = trim(line.substr(0, line.size() - 1));
  return iequals(line, pattern);
}

/// Byte range [first, second) of the opinion body within `raw`.
inline std::pair<std::size_t, std::size_t> locate_opinion(
    std::string_view raw, const std::vector<std::string>& heading_patterns,
    const std::vector<std::string>& terminators = default_section_terminators()) {
  if (trim(raw).empty()) throw Error(Errc::EmptyDocument, "document has no text");

  auto matches_any = [](std::string_view line, const std::vector<std::string>& pats) {
    return std::any_of(pats.begin(), pats.end(),
                       [&](const std::string& p) { return heading_matches(line, p); });
  };

  std::optional<std::size_t> body_start;
  std::size_t body_end = raw.size();
  std::size_t pos = 0;
  while (pos < raw.size()) {
    std::size_t nl = raw.find('\n', pos);
    std::size_t line_end = nl == std::string_view::npos ? raw.size() : nl;
    std::size_t next = nl == std::string_view::npos ? raw.size() : nl + 1;
    std::string_view line = raw.substr(pos, line_end - pos);
    if (!body_start) {
      if (matches_any(line, heading_patterns)) body_start = next;
    } else if (matches_any(line, terminators)) {
      body_end = pos;
      break;
    }
    pos = next;
  }
  if (!body_start) throw Error(Errc::MissingOpinionSection, "no opinion heading found");

  std::size_t b = *body_start;
  std::size_t e = std::max(b, body_end);
  while (b < e && is_space(raw[b])) ++b;
  while (e > b && is_space(raw[e - 1])) --e;
  if (b == e) throw Error(Errc::MissingOpinionSection, "opinion section is empty");
  return {b, e};
}

inline std::string extract_opinion(CaseDocument& doc,
                                   const std::vector<std::string>& heading_patterns = default_opinion_headings(),
                                   const std::vector<std::string>& terminators = default_section_terminators()) {
  auto [b, e] = locate_opinion(doc.raw_text, heading_patterns, terminators);
  doc.opinion_text = doc.raw_text.substr(b, e - b);
  return *doc.opinion_text;
}

// ---------------------------------------------------------------------------
// Corpus directory

inline constexpr std::string_view kCorpusManifestName = "corpus.manifest";

/// `file = case_id` lines; `#` comments.
inline std::map<std::string, std::string> parse_corpus_manifest(std::string_view content) {
  std::map<std::string, std::string> mapping;
  std::size_t line_no = 0;
  for (const auto& raw : split_lines(content)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ParseError(Errc::ConfigInvalid, line_no, "expected 'file = case_id'");
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty() || value.empty())
      throw ParseError(Errc::ConfigInvalid, line_no, "empty file name or case id");
    if (!mapping.emplace(key, value).second)
      throw ParseError(Errc::ConfigInvalid, line_no, "file listed twice: " + key);
  }
  return mapping;
}

/// Every `*.txt` file in `dir` is one case. Sorted by case id.
inline std::vector<CaseDocument> load_corpus(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw Error(Errc::ConfigInvalid, "corpus directory does not exist: " + dir.string());

  std::map<std::string, std::string> ids;
  if (fs::exists(dir / kCorpusManifestName))
    ids = parse_corpus_manifest(read_file(dir / kCorpusManifestName));

  std::vector<CaseDocument> docs;
  std::set<std::string> seen_files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::string fname = entry.path().filename().string();
    seen_files.insert(fname);
    CaseDocument doc;
    auto it = ids.find(fname);
    doc.case_id = it != ids.end() ? it->second : entry.path().stem().string();
    doc.raw_text = read_file(entry.path());
    docs.push_back(std::move(doc));
  }
  for (const auto& [fname, id] : ids)
    if (!seen_files.count(fname))
      throw Error(Errc::ConfigInvalid, "manifest names missing file " + fname);

  std::sort(docs.begin(), docs.end(),
            [](const CaseDocument& a, const CaseDocument& b) { return a.case_id < b.case_id; });
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& id = docs[i].case_id;
    if (id.empty()) throw Error(Errc::ConfigInvalid, "empty case id");
    if (id == "." || id == ".." || id.find_first_of("/\\") != std::string::npos)
      throw Error(Errc::ConfigInvalid, "case id is not a plain file name: " + id);
    if (i > 0 && docs[i].case_id == docs[i - 1].case_id)
      throw Error(Errc::ConfigInvalid, "duplicate case id " + docs[i].case_id);
  }
  return docs;
}

}  // namespace corekg::corpus
