#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include <fmt/core.h>

#include "clinstructor/llm_gateway.hpp"
#include "clinstructor/log.hpp"

namespace clinstructor::llm {

HttpOptions http_options_from_env() {
  HttpOptions opts;
  const char* base = std::getenv("CLINSTRUCTOR_API_BASE");
  if (base == nullptr || *base == '\0') {
    throw ConfigError("http backend requires CLINSTRUCTOR_API_BASE");
  }
  opts.base_url = base;
  if (const char* key = std::getenv("CLINSTRUCTOR_API_KEY")) opts.api_key = key;
  return opts;
}

HttpBackend::HttpBackend(HttpOptions options) : options_(std::move(options)) {
  const auto& url = options_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("API base URL must include a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  host_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

json HttpBackend::request_body(const ChatRequest& request) {
  return json{
      {"model", request.model_id},
      {"messages",
       json::array({json{{"role", "system"}, {"content", request.system_prompt}},
                    json{{"role", "user"}, {"content", request.user_prompt}}})},
      {"temperature", request.temperature},
      {"max_tokens", request.max_tokens},
      {"response_format",
       {{"type", "json_schema"},
        {"json_schema",
         {{"name", request.response_schema.name},
          {"description", request.response_schema.description},
          {"schema", request.response_schema.schema},
          {"strict", true}}}}}};
}

BackendReply HttpBackend::parse_reply(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw NetworkError(std::string("chat endpoint returned non-JSON body: ") + e.what());
  }
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw NetworkError("chat endpoint response has no choices: " + body.substr(0, 300));
  }
  const auto& choice = j["choices"][0];
  BackendReply reply;
  const auto& content = choice.value("message", json::object()).value("content", json());
  if (!content.is_string()) throw NetworkError("chat endpoint response has no message content");
  reply.content = content.get<std::string>();
  reply.truncated = choice.value("finish_reason", json()) == "length";
  return reply;
}

BackendReply HttpBackend::send(const ChatRequest& request) {
  httplib::Client client(host_);
  client.set_connection_timeout(options_.timeout_seconds, 0);
  client.set_read_timeout(options_.timeout_seconds, 0);
  client.set_write_timeout(options_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!options_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + options_.api_key);
  }
  const auto path = path_prefix_ + "/chat/completions";
  const auto body = request_body(request).dump();

  std::string last_error;
  int backoff = options_.initial_backoff_ms;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 200) {
      return parse_reply(res->body);
    } else if (res->status == 429 || res->status >= 500) {
      last_error = fmt::format("HTTP {}: {}", res->status, res->body.substr(0, 300));
    } else {
      throw NetworkError(fmt::format("chat endpoint rejected request with HTTP {}: {}",
                                     res->status, res->body.substr(0, 300)));
    }
    if (attempt < options_.max_attempts) {
      log::warn("chat request attempt {}/{} failed ({}); retrying in {} ms", attempt,
                options_.max_attempts, last_error, backoff);
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
  }
  throw NetworkError(fmt::format("chat request to {}{} failed after {} attempts: {}", host_,
                                 path, options_.max_attempts, last_error));
}

}  // namespace clinstructor::llm
