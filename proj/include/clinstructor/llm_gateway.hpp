#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <variant>
#include <string>

#include "clinstructor/errors.hpp"
#include "clinstructor/util.hpp"

namespace clinstructor::llm {

// A named JSON schema in the {"name", "description", "schema"} envelope used
// by structured-output chat endpoints.
struct ResponseSchema {
  std::string name;
  std::string description;
  json schema;
};

struct ChatRequest {
  std::string model_id;
  std::string system_prompt;
  std::string user_prompt;
  ResponseSchema response_schema;
  double temperature = 0.0;
  int max_tokens = 4096;
};

// Canonical form: a JSON object with sorted keys and compact separators.
// Prompt strings are carried byte-for-byte.
json canonical_json(const ChatRequest& request);
std::string canonical_serialization(const ChatRequest& request);
// SHA-256 hex digest of the canonical serialization.
std::string cache_key(const ChatRequest& request);

enum class BackendKind { kHttp, kMock };
std::string to_string(BackendKind kind);

struct ChatResponse {
  std::string raw_text;
  json parsed_value;
  BackendKind backend = BackendKind::kMock;
  bool cached = false;
};

class NetworkError : public Error {
 public:
  using Error::Error;
};

class TruncationError : public Error {
 public:
  using Error::Error;
};

class SchemaViolation : public Error {
 public:
  SchemaViolation(const std::string& message, std::string raw_text)
      : Error(message), raw_text_(std::move(raw_text)) {}
  const std::string& raw_text() const { return raw_text_; }

 private:
  std::string raw_text_;
};

class UnrecognizedPrompt : public Error {
 public:
  using Error::Error;
};

struct BackendReply {
  std::string content;
  bool truncated = false;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual BackendKind kind() const = 0;
  virtual BackendReply send(const ChatRequest& request) = 0;
};

// Content-addressed store of raw responses. Layout:
//   {dir}/{first two hex chars}/{digest}.json  -> {request, raw_text, timestamp}
// Entries are immutable; insertion writes a temp file and renames it.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<std::string> lookup(const std::string& digest) const;
  void store(const std::string& digest, const json& request, const std::string& raw_text) const;

  struct Stats {
    std::size_t entries = 0;
    std::uintmax_t bytes = 0;
  };
  Stats stats() const;
  // Removes every entry; returns the number removed.
  std::size_t clear() const;

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path entry_path(const std::string& digest) const;

 private:
  std::filesystem::path dir_;
};

struct GatewayOptions {
  std::size_t max_schema_retries = 3;
  std::size_t parallelism = 4;
};

struct GatewayStats {
  std::size_t requests = 0;
  std::size_t cache_hits = 0;
  std::size_t backend_calls = 0;
  std::size_t schema_retries = 0;
};

// Schema-constrained completion over one backend, with optional caching.
// complete() is thread-safe; at most `parallelism` backend calls are in
// flight at once.
class Gateway {
 public:
  Gateway(std::shared_ptr<ChatBackend> backend, std::optional<ResponseCache> cache,
          GatewayOptions options = {});

  ChatResponse complete(const ChatRequest& request);

  GatewayStats stats() const;
  std::size_t parallelism() const { return options_.parallelism; }
  BackendKind backend_kind() const { return backend_->kind(); }

 private:
  std::shared_ptr<ChatBackend> backend_;
  std::optional<ResponseCache> cache_;
  GatewayOptions options_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> backend_calls_{0};
  std::atomic<std::size_t> schema_retries_{0};
};

// Parses `raw_text` as JSON and validates it against the request schema.
// Returns the parsed value or an error message.
std::variant<json, std::string> parse_and_validate(const std::string& raw_text,
                                                   const ResponseSchema& schema);

// --- HTTP backend -------------------------------------------------------------

struct HttpOptions {
  std::string base_url;  // e.g. "https://api.example.com/v1"
  std::string api_key;
  int timeout_seconds = 120;
  int max_attempts = 3;
  int initial_backoff_ms = 500;
};

// POSTs {base}/chat/completions with model, messages and a json_schema
// response_format. Transport errors, 429 and 5xx are retried with
// exponential backoff.
class HttpBackend : public ChatBackend {
 public:
  explicit HttpBackend(HttpOptions options);
  BackendKind kind() const override { return BackendKind::kHttp; }
  BackendReply send(const ChatRequest& request) override;

  static json request_body(const ChatRequest& request);
  // Extracts choices[0].message.content and the truncation flag.
  static BackendReply parse_reply(const std::string& body);

 private:
  HttpOptions options_;
  std::string host_;  // scheme://host[:port]
  std::string path_prefix_;
};

// Reads CLINSTRUCTOR_API_BASE / CLINSTRUCTOR_API_KEY. Throws ConfigError if
// the base URL is unset.
HttpOptions http_options_from_env();

}  // namespace clinstructor::llm
