#pragma once

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "corekg/error.hpp"
#include "corekg/text.hpp"

namespace corekg::llm {

using Json = nlohmann::json;
using Millis = std::chrono::milliseconds;

struct CompletionRequest {
  std::string model_id;
  std::optional<std::string> system_text;
  std::string user_text;
  double temperature = 0.0;
  std::optional<int> max_output_tokens;

  void validate() const {
    if (user_text.empty()) throw Error(Errc::InvalidArgument, "empty user text");
    if (!(temperature >= 0.0)) throw Error(Errc::InvalidArgument, "temperature must be >= 0");
    if (max_output_tokens && *max_output_tokens <= 0)
      throw Error(Errc::InvalidArgument, "max_output_tokens must be positive");
  }

  /// Digest of the prompt text only (system + user), so recorded scripts
  /// replay regardless of which model produced them.
  std::string prompt_digest() const {
    std::string material = system_text.value_or("");
    material.push_back('\x1f');
    material.append(user_text);
    return sha256_hex(material);
  }
};

struct CompletionResponse {
  std::string text;
  Millis latency{0};
  std::string backend_id;
};

/// One chat-completion transport. Implementations throw `Error` with
/// TransportError or TimeoutError for retryable failures; anything else is
/// treated as final.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  virtual std::string send(const CompletionRequest& request, Millis timeout) = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  Millis initial_backoff{1000};
  double backoff_multiplier = 2.0;
  Millis timeout{120000};
};

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp) {
  auto secs = std::chrono::time_point_cast<std::chrono::seconds>(tp);
  auto ms = std::chrono::duration_cast<Millis>(tp - secs).count();
  std::time_t t = std::chrono::system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
  return out;
}

/// Append-only JSON-lines record of every completion call. Writes are
/// serialized; the file is optional (in-memory count is always kept).
class AuditLog {
 public:
  AuditLog() = default;
  explicit AuditLog(std::filesystem::path path) : path_(std::move(path)) {
    if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
    out_.open(*path_, std::ios::app | std::ios::binary);
    if (!out_) throw Error(Errc::IoError, "cannot open audit log " + path_->string());
  }

  void append(Json entry) {
    std::lock_guard lock(mu_);
    entry["seq"] = count_;
    ++count_;
    if (!entry.value("error", Json()).is_null()) ++failures_;
    if (out_.is_open()) {
      out_ << entry.dump() << '\n';
      out_.flush();
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return count_;
  }
  std::size_t failures() const {
    std::lock_guard lock(mu_);
    return failures_;
  }
  const std::optional<std::filesystem::path>& path() const { return path_; }

 private:
  mutable std::mutex mu_;
  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
  std::size_t count_ = 0;
  std::size_t failures_ = 0;
};

/// Uniform entry point over any backend: validation, retry with exponential
/// backoff, and audit logging of every call including failed ones.
class Gateway {
 public:
  using Sleeper = std::function<void(Millis)>;

  Gateway(std::shared_ptr<Backend> backend, RetryPolicy policy = {},
          std::shared_ptr<AuditLog> audit = std::make_shared<AuditLog>())
      : backend_(std::move(backend)), policy_(policy), audit_(std::move(audit)),
        sleep_([](Millis d) { std::this_thread::sleep_for(d); }) {
    if (!backend_) throw Error(Errc::ConfigInvalid, "gateway needs a backend");
    if (!audit_) audit_ = std::make_shared<AuditLog>();
  }

  void set_sleeper(Sleeper s) { sleep_ = std::move(s); }
  const RetryPolicy& policy() const { return policy_; }
  AuditLog& audit() { return *audit_; }
  Backend& backend() { return *backend_; }
  std::size_t calls() const { return calls_.load(); }

  CompletionResponse complete(const CompletionRequest& request) { return complete(request, policy_); }

  CompletionResponse complete(const CompletionRequest& request, const RetryPolicy& policy) {
    request.validate();
    ++calls_;
    const auto started = std::chrono::system_clock::now();
    const auto t0 = std::chrono::steady_clock::now();

    Json entry = {
        {"request_digest", request.prompt_digest()},
        {"model", request.model_id},
        {"system", request.system_text ? Json(*request.system_text) : Json()},
        {"prompt", request.user_text},
        {"temperature", request.temperature},
        {"backend", backend_->id()},
        {"started_at", utc_timestamp(started)},
    };
    auto finish = [&](int attempts, const std::optional<std::string>& text, const std::string& error) {
      auto now = std::chrono::system_clock::now();
      entry["attempts"] = attempts;
      entry["response"] = text ? Json(*text) : Json();
      entry["error"] = error.empty() ? Json() : Json(error);
      entry["finished_at"] = utc_timestamp(now);
      entry["latency_ms"] =
          std::chrono::duration_cast<Millis>(std::chrono::steady_clock::now() - t0).count();
      audit_->append(entry);
    };

    const int max_attempts = std::max(1, policy.max_attempts);
    Millis backoff = policy.initial_backoff;
    for (int attempt = 1;; ++attempt) {
      try {
        std::string text = backend_->send(request, policy.timeout);
        finish(attempt, text, "");
        CompletionResponse resp;
        resp.text = std::move(text);
        resp.latency = std::chrono::duration_cast<Millis>(std::chrono::steady_clock::now() - t0);
        resp.backend_id = backend_->id();
        return resp;
      } catch (const Error& e) {
        const bool retryable = e.code() == Errc::TransportError || e.code() == Errc::TimeoutError;
        if (!retryable) {
          finish(attempt, std::nullopt, e.what());
          throw;
        }
        if (attempt >= max_attempts) {
          finish(attempt, std::nullopt, e.what());
          throw TransportError(e.code(), attempt, e.message());
        }
        sleep_(backoff);
        backoff = Millis(static_cast<Millis::rep>(backoff.count() * policy.backoff_multiplier));
      }
    }
  }

 private:
  std::shared_ptr<Backend> backend_;
  RetryPolicy policy_;
  std::shared_ptr<AuditLog> audit_;
  Sleeper sleep_;
  std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Scripted backend

struct ScriptEntry {
  enum class Kind { Digest, Position, Contains };

  Kind kind = Kind::Digest;
  std::string digest;
  std::size_t position = 0;
  std::vector<std::string> contains;

  // Response: literal text, or the request text after the last occurrence
  // of `echo_after` with `replacements` applied in order.
  std::string response_text;
  std::optional<std::string> echo_after;
  std::vector<std::pair<std::string, std::string>> replacements;

  std::string respond(const CompletionRequest& request) const {
    if (!echo_after) return response_text;
    std::string_view user = request.user_text;
    std::size_t pos = echo_after->empty() ? std::string_view::npos : user.rfind(*echo_after);
    std::string out(pos == std::string_view::npos ? user : user.substr(pos + echo_after->size()));
    for (const auto& [from, to] : replacements) out = replace_all(out, from, to);
    return out;
  }

  Json to_json() const {
    Json j;
    switch (kind) {
      case Kind::Digest: j["digest"] = digest; break;
      case Kind::Position: j["position"] = position; break;
      case Kind::Contains: j["contains"] = contains; break;
    }
    if (echo_after) {
      j["echo_after"] = *echo_after;
      if (!replacements.empty()) {
        Json reps = Json::array();
        for (const auto& [from, to] : replacements) reps.push_back({from, to});
        j["replace"] = reps;
      }
    } else {
      j["response"] = response_text;
    }
    return j;
  }
};

/// Deterministic stand-in for the live model. Matching precedence: exact
/// prompt digest, then call position, then the first `contains` rule whose
/// substrings all occur in the prompt. Positional matching assumes the
/// caller serializes calls.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::vector<ScriptEntry> entries = {}, bool strict = true)
      : entries_(std::move(entries)), strict_(strict) {}

  std::string id() const override { return "scripted"; }

  std::string send(const CompletionRequest& request, Millis) override {
    std::size_t call = position_.fetch_add(1);
    if (const ScriptEntry* e = match(request, call)) return e->respond(request);
    if (strict_)
      throw Error(Errc::ScriptMiss,
                  "no script entry for call " + std::to_string(call) + " digest " + request.prompt_digest());
    return request.user_text;
  }

  const ScriptEntry* match(const CompletionRequest& request, std::size_t call) const {
    const std::string digest = request.prompt_digest();
    for (const auto& e : entries_)
      if (e.kind == ScriptEntry::Kind::Digest && e.digest == digest) return &e;
    for (const auto& e : entries_)
      if (e.kind == ScriptEntry::Kind::Position && e.position == call) return &e;
    for (const auto& e : entries_) {
      if (e.kind != ScriptEntry::Kind::Contains) continue;
      bool all = std::all_of(e.contains.begin(), e.contains.end(), [&](const std::string& s) {
        return request.user_text.find(s) != std::string::npos;
      });
      if (all) return &e;
    }
    return nullptr;
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<ScriptEntry>& entries() const { return entries_; }
  bool strict() const { return strict_; }
  void set_strict(bool strict) { strict_ = strict; }

 private:
  std::vector<ScriptEntry> entries_;
  bool strict_;
  std::atomic<std::size_t> position_{0};
};

/// JSON-lines script: one object per line with exactly one matcher key
/// (`digest`, `position`, `contains`) and either `response` or `echo_after`
/// (+ optional `replace` pairs). Blank lines and `#` comments are skipped.
inline std::vector<ScriptEntry> parse_script(std::string_view content) {
  std::vector<ScriptEntry> entries;
  std::set<std::string> digests;
  std::set<std::size_t> positions;
  std::size_t line_no = 0;
  for (const auto& raw : split_lines(content)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto fail = [&](const std::string& msg) { throw ParseError(Errc::ScriptParseError, line_no, msg); };

    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail("not a JSON object");

    ScriptEntry e;
    int matchers = int(j.contains("digest")) + int(j.contains("position")) + int(j.contains("contains"));
    if (matchers != 1) fail("entry needs exactly one of digest, position, contains");
    try {
      if (j.contains("digest")) {
        e.kind = ScriptEntry::Kind::Digest;
        e.digest = j.at("digest").get<std::string>();
        if (e.digest.empty()) fail("empty digest");
        if (!digests.insert(e.digest).second) fail("duplicate digest matcher " + e.digest);
      } else if (j.contains("position")) {
        e.kind = ScriptEntry::Kind::Position;
        if (!j.at("position").is_number_unsigned()) fail("position must be a non-negative integer");
        e.position = j.at("position").get<std::size_t>();
        if (!positions.insert(e.position).second) fail("duplicate position matcher");
      } else {
        e.kind = ScriptEntry::Kind::Contains;
        const Json& c = j.at("contains");
        if (c.is_string()) e.contains.push_back(c.get<std::string>());
        else e.contains = c.get<std::vector<std::string>>();
        if (e.contains.empty()) fail("empty contains rule");
      }
      const bool has_response = j.contains("response");
      const bool has_echo = j.contains("echo_after");
      if (has_response == has_echo) fail("entry needs exactly one of response, echo_after");
      if (has_response) {
        e.response_text = j.at("response").get<std::string>();
      } else {
        e.echo_after = j.at("echo_after").get<std::string>();
        if (j.contains("replace"))
          for (const auto& pair : j.at("replace")) {
            if (!pair.is_array() || pair.size() != 2) fail("replace items are [from, to] pairs");
            e.replacements.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
          }
      }
    } catch (const Json::exception& ex) {
      fail(ex.what());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::shared_ptr<ScriptedBackend> load_script(const std::filesystem::path& path, bool strict = true) {
  return std::make_shared<ScriptedBackend>(parse_script(read_file(path)), strict);
}

inline std::string serialize_script(const std::vector<ScriptEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += e.to_json().dump();
    out += '\n';
  }
  return out;
}

/// Turns an audit log into a digest-keyed script so a run can be replayed
/// without the live backend. Failed calls are dropped; a repeated prompt
/// keeps its first response.
inline std::vector<ScriptEntry> script_from_audit(std::string_view audit_jsonl) {
  std::vector<ScriptEntry> entries;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (const auto& raw : split_lines(audit_jsonl)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw ParseError(Errc::ScriptParseError, line_no, "audit line is not a JSON object");
    if (!j.contains("response") || j["response"].is_null()) continue;
    std::string digest = j.value("request_digest", "");
    if (digest.empty() || !seen.insert(digest).second) continue;
    ScriptEntry e;
    e.kind = ScriptEntry::Kind::Digest;
    e.digest = digest;
    e.response_text = j["response"].get<std::string>();
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace corekg::llm
