#include <catch_amalgamated.hpp>

#include <atomic>
#include <chrono>
#include <thread>

#include "corekg/http_backend.hpp"
#include "corekg/llm_gateway.hpp"
#include "support/tempdir.hpp"

using namespace corekg;
using namespace corekg::llm;

namespace {

CompletionRequest req(std::string user, std::optional<std::string> system = std::nullopt) {
  CompletionRequest r;
  r.model_id = "m";
  r.user_text = std::move(user);
  r.system_text = std::move(system);
  return r;
}

class FlakyBackend : public Backend {
 public:
  FlakyBackend(int failures, Errc code) : failures_(failures), code_(code) {}
  std::string id() const override { return "flaky"; }
  std::string send(const CompletionRequest& r, Millis) override {
    ++attempts;
    if (attempts <= failures_) throw Error(code_, "down");
    return "ok:" + r.user_text;
  }
  int attempts = 0;

 private:
  int failures_;
  Errc code_;
};

std::vector<Json> audit_lines(const std::filesystem::path& p) {
  std::vector<Json> out;
  for (const auto& line : split_lines(read_file(p)))
    if (!trim(line).empty()) out.push_back(Json::parse(line));
  return out;
}

}  // namespace

TEST_CASE("request validation") {
  CHECK_THROWS_AS(req("").validate(), Error);
  auto r = req("x");
  r.temperature = -0.1;
  CHECK_THROWS_AS(r.validate(), Error);
  r.temperature = 0;
  r.max_output_tokens = 0;
  CHECK_THROWS_AS(r.validate(), Error);
  r.max_output_tokens = 16;
  CHECK_NOTHROW(r.validate());
}

TEST_CASE("prompt digest ignores the model and separates system from user") {
  auto a = req("hello");
  auto b = req("hello");
  b.model_id = "other";
  CHECK(a.prompt_digest() == b.prompt_digest());
  CHECK(req("ab", "c").prompt_digest() != req("b", "ca").prompt_digest());
  CHECK(a.prompt_digest().size() == 64);
}

TEST_CASE("scripted backend is deterministic for identical requests") {
  auto backend = std::make_shared<ScriptedBackend>(
      parse_script(R"({"contains":"alpha","response":"A"})" "\n" R"({"contains":"beta","response":"B"})"));
  Gateway gw(backend);
  for (int i = 0; i < 5; ++i) {
    CHECK(gw.complete(req("x alpha y")).text == "A");
    CHECK(gw.complete(req("beta")).text == "B");
  }
}

TEST_CASE("positional script answers in call order") {
  auto backend = std::make_shared<ScriptedBackend>(
      parse_script(R"({"position":0,"response":"r1"})" "\n" R"({"position":1,"response":"r2"})"));
  Gateway gw(backend);
  CHECK(gw.complete(req("same")).text == "r1");
  CHECK(gw.complete(req("same")).text == "r2");
  CHECK_THROWS_AS(gw.complete(req("same")), Error);
}

TEST_CASE("digest matchers take precedence over contains rules") {
  auto r = req("the prompt");
  std::string script = Json{{"digest", r.prompt_digest()}, {"response", "by digest"}}.dump() + "\n" +
                       R"({"contains":"prompt","response":"by contains"})";
  Gateway gw(std::make_shared<ScriptedBackend>(parse_script(script)));
  CHECK(gw.complete(r).text == "by digest");
  CHECK(gw.complete(req("another prompt")).text == "by contains");
}

TEST_CASE("echo rules return the prompt tail with replacements") {
  auto e = parse_script(R"({"contains":"Input_text:","echo_after":"Input_text: ","replace":[["he","John"],["x","y"]]})");
  REQUIRE(e.size() == 1);
  ScriptedBackend b(e);
  CHECK(b.send(req("rules Input_text: old Input_text: he saw x"), Millis(1)) == "John saw y");
}

TEST_CASE("strict misses raise ScriptMiss and lenient misses echo") {
  ScriptedBackend strict({}, true);
  try {
    strict.send(req("nothing"), Millis(1));
    FAIL("expected ScriptMiss");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ScriptMiss);
  }
  ScriptedBackend lenient({}, false);
  CHECK(lenient.send(req("echo me"), Millis(1)) == "echo me");
}

TEST_CASE("script parse errors carry the line number") {
  auto expect_line = [](const std::string& text, std::size_t line) {
    try {
      parse_script(text);
      FAIL("expected ScriptParseError");
    } catch (const ParseError& e) {
      CHECK(e.code() == Errc::ScriptParseError);
      CHECK(e.line() == line);
    }
  };
  expect_line("{not json", 1);
  expect_line("# comment\n\n{\"position\":0}", 3);
  expect_line(R"({"position":0,"digest":"d","response":"x"})", 1);
  expect_line(R"({"position":-1,"response":"x"})", 1);
  expect_line(R"({"digest":"d","response":"a"})" "\n" R"({"digest":"d","response":"b"})", 2);
  expect_line(R"({"contains":[],"response":"x"})", 1);
  expect_line(R"({"contains":"a","response":"x","echo_after":"y"})", 1);
  expect_line(R"({"contains":"a","echo_after":"y","replace":[["only"]]})", 1);
  CHECK(parse_script("").empty());
}

TEST_CASE("script serialization round-trips") {
  std::string text = R"({"digest":"abc","response":"x"})" "\n" R"({"position":3,"response":"y"})" "\n"
                     R"({"contains":["a","b"],"echo_after":"T: ","replace":[["p","q"]]})" "\n";
  auto entries = parse_script(text);
  CHECK(serialize_script(parse_script(serialize_script(entries))) == serialize_script(entries));
  CHECK(parse_script(serialize_script(entries)).size() == 3);
}

TEST_CASE("retry exhausts the budget with exponential backoff") {
  auto flaky = std::make_shared<FlakyBackend>(100, Errc::TransportError);
  Gateway gw(flaky, RetryPolicy{3, Millis(1000), 2.0, Millis(50)});
  std::vector<Millis> sleeps;
  gw.set_sleeper([&](Millis d) { sleeps.push_back(d); });
  try {
    gw.complete(req("x"));
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.code() == Errc::TransportError);
    CHECK(e.attempts() == 3);
  }
  CHECK(flaky->attempts == 3);
  CHECK(sleeps == std::vector<Millis>{Millis(1000), Millis(2000)});
  CHECK(gw.audit().size() == 1);
  CHECK(gw.audit().failures() == 1);
}

TEST_CASE("retry recovers from transient failures and timeouts") {
  auto flaky = std::make_shared<FlakyBackend>(2, Errc::TimeoutError);
  Gateway gw(flaky);
  gw.set_sleeper([](Millis) {});
  CHECK(gw.complete(req("x")).text == "ok:x");
  CHECK(flaky->attempts == 3);
  CHECK(gw.audit().failures() == 0);
}

TEST_CASE("non-retryable errors are not retried") {
  auto flaky = std::make_shared<FlakyBackend>(5, Errc::ScriptMiss);
  Gateway gw(flaky);
  gw.set_sleeper([](Millis) { FAIL("should not sleep"); });
  CHECK_THROWS_AS(gw.complete(req("x")), Error);
  CHECK(flaky->attempts == 1);
  CHECK(gw.audit().failures() == 1);
}

TEST_CASE("audit log records every call including failures") {
  testing_support::TempDir dir;
  auto audit = std::make_shared<AuditLog>(dir / "audit.jsonl");
  auto backend = std::make_shared<ScriptedBackend>(parse_script(R"({"contains":"ok","response":"fine"})"));
  Gateway gw(backend, RetryPolicy{1, Millis(0), 2.0, Millis(10)}, audit);
  gw.complete(req("ok 1", "sys"));
  CHECK_THROWS(gw.complete(req("miss")));
  gw.complete(req("ok 2"));
  CHECK(gw.calls() == 3);

  auto lines = audit_lines(dir / "audit.jsonl");
  REQUIRE(lines.size() == 3);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& j = lines[i];
    CHECK(j["seq"] == i);
    for (const char* key : {"request_digest", "model", "prompt", "temperature", "backend", "started_at",
                            "finished_at", "attempts", "latency_ms", "response", "error"})
      CHECK(j.contains(key));
  }
  CHECK(lines[0]["system"] == "sys");
  CHECK(lines[0]["response"] == "fine");
  CHECK(lines[1]["response"].is_null());
  CHECK(lines[1]["error"].is_string());
  CHECK(lines[0]["request_digest"] == req("ok 1", "sys").prompt_digest());
}

TEST_CASE("recorded audit replays to identical responses") {
  testing_support::TempDir dir;
  auto audit = std::make_shared<AuditLog>(dir / "audit.jsonl");
  auto live = std::make_shared<FlakyBackend>(0, Errc::TransportError);
  Gateway gw(live, RetryPolicy{}, audit);
  std::vector<CompletionRequest> requests = {req("one"), req("two", "s"), req("one"), req("three")};
  std::vector<std::string> recorded;
  for (const auto& r : requests) recorded.push_back(gw.complete(r).text);

  auto entries = script_from_audit(read_file(dir / "audit.jsonl"));
  CHECK(entries.size() == 3);
  Gateway replay(std::make_shared<ScriptedBackend>(parse_script(serialize_script(entries))));
  for (std::size_t i = 0; i < requests.size(); ++i) CHECK(replay.complete(requests[i]).text == recorded[i]);
}

TEST_CASE("chat response parsing") {
  CHECK(chat_response_text(R"({"message":{"role":"assistant","content":"hi"}})") == "hi");
  CHECK(chat_response_text(R"({"choices":[{"message":{"content":"yo"}}]})") == "yo");
  CHECK_THROWS_AS(chat_response_text("<html>"), Error);
  CHECK_THROWS_AS(chat_response_text(R"({"choices":[]})"), Error);
}

TEST_CASE("chat request body") {
  auto r = req("u", "s");
  r.max_output_tokens = 32;
  auto body = chat_request_body(r);
  CHECK(body["model"] == "m");
  CHECK(body["stream"] == false);
  CHECK(body["temperature"] == 0.0);
  REQUIRE(body["messages"].size() == 2);
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][1]["content"] == "u");
  CHECK(body["options"]["num_predict"] == 32);
}

TEST_CASE("http backend talks to a chat endpoint") {
  httplib::Server server;
  std::atomic<int> hits{0};
  Json last_body;
  server.Post("/api/chat", [&](const httplib::Request& rq, httplib::Response& rs) {
    ++hits;
    last_body = Json::parse(rq.body);
    if (rq.get_header_value("Authorization") != "Bearer k") {
      rs.status = 401;
      return;
    }
    rs.set_content(R"({"message":{"content":"answer"}})", "application/json");
  });
  server.Post("/slow", [&](const httplib::Request&, httplib::Response& rs) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    rs.set_content(R"({"message":{"content":"late"}})", "application/json");
  });
  server.Post("/broken", [&](const httplib::Request&, httplib::Response& rs) { rs.status = 500; });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  EndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.api_key = "k";
  HttpBackend http(cfg);
  CHECK(http.send(req("question"), Millis(5000)) == "answer");
  CHECK(last_body["messages"][0]["content"] == "question");

  cfg.api_key.clear();
  HttpBackend unauthorized(cfg);
  CHECK_THROWS_AS(unauthorized.send(req("q"), Millis(5000)), Error);

  cfg.api_key = "k";
  cfg.path = "/broken";
  auto broken = std::make_shared<HttpBackend>(cfg);
  Gateway gw(broken, RetryPolicy{3, Millis(1), 2.0, Millis(2000)});
  gw.set_sleeper([](Millis) {});
  try {
    gw.complete(req("q"));
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 3);
  }

  cfg.path = "/slow";
  HttpBackend slow(cfg);
  try {
    slow.send(req("q"), Millis(150));
    FAIL("expected TimeoutError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TimeoutError);
  }

  server.stop();
  t.join();

  EndpointConfig closed;
  closed.base_url = "http://127.0.0.1:" + std::to_string(port);
  HttpBackend gone(closed);
  try {
    gone.send(req("q"), Millis(500));
    FAIL("expected transport failure");
  } catch (const Error& e) {
    CHECK((e.code() == Errc::TransportError || e.code() == Errc::TimeoutError));
  }
}
