#pragma once

#include <chrono>
#include <cstdlib>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "corekg/llm_gateway.hpp"

namespace corekg::llm {

struct EndpointConfig {
  std::string base_url = "http://localhost:11434";
  std::string path = "/api/chat";
  std::string model_id = "llama3.3:70b";
  std::string api_key;

  /// COREKG_LLM_BASE_URL, COREKG_LLM_PATH, COREKG_LLM_MODEL, COREKG_LLM_API_KEY
  void apply_env() {
    if (const char* v = std::getenv("COREKG_LLM_BASE_URL"); v && *v) base_url = v;
    if (const char* v = std::getenv("COREKG_LLM_PATH"); v && *v) path = v;
    if (const char* v = std::getenv("COREKG_LLM_MODEL"); v && *v) model_id = v;
    if (const char* v = std::getenv("COREKG_LLM_API_KEY"); v && *v) api_key = v;
  }
};

/// Request body in the common local-serving chat shape.
inline Json chat_request_body(const CompletionRequest& request) {
  Json messages = Json::array();
  if (request.system_text) messages.push_back({{"role", "system"}, {"content", *request.system_text}});
  messages.push_back({{"role", "user"}, {"content", request.user_text}});
  Json body = {
      {"model", request.model_id},
      {"messages", messages},
      {"temperature", request.temperature},
      {"stream", false},
  };
  // Ollama reads sampling settings from `options`.
  Json options = {{"temperature", request.temperature}};
  if (request.max_output_tokens) {
    options["num_predict"] = *request.max_output_tokens;
    body["max_tokens"] = *request.max_output_tokens;
  }
  body["options"] = options;
  return body;
}

/// Accepts `{"message":{"content":...}}` and `{"choices":[{"message":{"content":...}}]}`.
inline std::string chat_response_text(std::string_view body) {
  Json j = Json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(Errc::TransportError, "response body is not JSON");
  if (j.contains("message") && j["message"].is_object() && j["message"].contains("content"))
    return j["message"]["content"].get<std::string>();
  if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
    const Json& c = j["choices"][0];
    if (c.contains("message") && c["message"].contains("content"))
      return c["message"]["content"].get<std::string>();
  }
  throw Error(Errc::TransportError, "response has no message content");
}

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(EndpointConfig config) : config_(std::move(config)) {}

  std::string id() const override { return "http:" + config_.base_url + config_.path; }

  std::string send(const CompletionRequest& request, Millis timeout) override {
    httplib::Client client(config_.base_url);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    const auto t0 = std::chrono::steady_clock::now();
    auto result = client.Post(config_.path, headers, chat_request_body(request).dump(), "application/json");
    if (!result) {
      auto err = result.error();
      auto elapsed = std::chrono::steady_clock::now() - t0;
      bool timed_out = err == httplib::Error::ConnectionTimeout ||
                       (err == httplib::Error::Read && elapsed >= timeout * 9 / 10);
      throw Error(timed_out ? Errc::TimeoutError : Errc::TransportError,
                  "POST " + config_.base_url + config_.path + ": " + httplib::to_string(err));
    }
    if (result->status != 200)
      throw Error(Errc::TransportError, "HTTP status " + std::to_string(result->status));
    return chat_response_text(result->body);
  }

  const EndpointConfig& config() const { return config_; }

 private:
  EndpointConfig config_;
};

}  // namespace corekg::llm
