#include "clinstructor/llm_gateway.hpp"

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/core.h>

#include "clinstructor/log.hpp"
#include "clinstructor/schema.hpp"

namespace clinstructor::llm {

json canonical_json(const ChatRequest& request) {
  // nlohmann::json objects are ordered maps, so dump() emits sorted keys.
  return json{{"model_id", request.model_id},
              {"system_prompt", request.system_prompt},
              {"user_prompt", request.user_prompt},
              {"response_schema",
               {{"name", request.response_schema.name},
                {"description", request.response_schema.description},
                {"schema", request.response_schema.schema}}},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens}};
}

std::string canonical_serialization(const ChatRequest& request) {
  return canonical_json(request).dump();
}

std::string cache_key(const ChatRequest& request) {
  return sha256_hex(canonical_serialization(request));
}

std::string to_string(BackendKind kind) { return kind == BackendKind::kHttp ? "http" : "mock"; }

// --- cache -------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path ResponseCache::entry_path(const std::string& digest) const {
  return dir_ / digest.substr(0, 2) / (digest + ".json");
}

std::optional<std::string> ResponseCache::lookup(const std::string& digest) const {
  const auto path = entry_path(digest);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    const auto entry = json::parse(ss.str());
    return entry.at("raw_text").get<std::string>();
  } catch (const std::exception& e) {
    log::warn("ignoring unreadable cache entry {}: {}", path.string(), e.what());
    return std::nullopt;
  }
}

void ResponseCache::store(const std::string& digest, const json& request,
                          const std::string& raw_text) const {
  const auto path = entry_path(digest);
  if (std::filesystem::exists(path)) return;
  std::filesystem::create_directories(path.parent_path());
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  const json entry{{"request", request},
                   {"raw_text", raw_text},
                   {"timestamp", std::chrono::duration_cast<std::chrono::seconds>(now).count()}};
  static std::atomic<std::uint64_t> counter{0};
  const auto tmp = path.parent_path() /
                   fmt::format(".{}.{}.{}.tmp", digest,
                               std::hash<std::thread::id>{}(std::this_thread::get_id()),
                               counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write cache entry " + tmp.string());
    out << entry.dump();
    if (!out) throw Error("cache write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ResponseCache::Stats ResponseCache::stats() const {
  Stats s;
  if (!std::filesystem::exists(dir_)) return s;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir_)) {
    if (e.is_regular_file() && e.path().extension() == ".json") {
      ++s.entries;
      s.bytes += e.file_size();
    }
  }
  return s;
}

std::size_t ResponseCache::clear() const {
  const auto n = stats().entries;
  if (std::filesystem::exists(dir_)) {
    for (const auto& e : std::filesystem::directory_iterator(dir_)) {
      std::filesystem::remove_all(e.path());
    }
  }
  return n;
}

// --- gateway -----------------------------------------------------------------

std::variant<json, std::string> parse_and_validate(const std::string& raw_text,
                                                   const ResponseSchema& schema) {
  json value;
  try {
    value = json::parse(raw_text);
  } catch (const json::parse_error& e) {
    return std::string("response is not valid JSON: ") + e.what();
  }
  if (auto err = schema::validate(value, schema.schema)) return *err;
  return value;
}

namespace {

std::string corrective_prompt(const ChatRequest& request, const std::string& problem) {
  return request.user_prompt +
         "\n\nYour previous reply did not satisfy the required output schema (" + problem +
         "). Reply again with a single JSON object that conforms exactly to the schema.";
}

}  // namespace

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, std::optional<ResponseCache> cache,
                 GatewayOptions options)
    : backend_(std::move(backend)), cache_(std::move(cache)), options_(options) {
  if (!backend_) throw ConfigError("gateway needs a backend");
  if (options_.parallelism < 1) throw ConfigError("gateway parallelism must be >= 1");
  slots_ = std::make_unique<std::counting_semaphore<>>(
      static_cast<std::ptrdiff_t>(options_.parallelism));
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  if (auto err = schema::check_document(request.response_schema.schema)) {
    throw ConfigError("invalid response schema " + request.response_schema.name + ": " + *err);
  }
  ++requests_;
  const auto digest = cache_key(request);

  if (cache_) {
    if (auto hit = cache_->lookup(digest)) {
      auto parsed = parse_and_validate(*hit, request.response_schema);
      if (auto* value = std::get_if<json>(&parsed)) {
        ++cache_hits_;
        return ChatResponse{*hit, std::move(*value), backend_->kind(), true};
      }
      log::warn("cache entry {} no longer validates; re-requesting", digest);
    }
  }

  ChatRequest attempt = request;
  std::string last_raw, last_problem;
  for (std::size_t i = 0; i <= options_.max_schema_retries; ++i) {
    if (i > 0) {
      ++schema_retries_;
      attempt.user_prompt = corrective_prompt(request, last_problem);
    }
    BackendReply reply;
    {
      slots_->acquire();
      struct Release {
        std::counting_semaphore<>* s;
        ~Release() { s->release(); }
      } release{slots_.get()};
      ++backend_calls_;
      reply = backend_->send(attempt);
    }
    if (reply.truncated) {
      throw TruncationError(fmt::format("response to {} truncated at max_tokens={}",
                                        request.response_schema.name, request.max_tokens));
    }
    auto parsed = parse_and_validate(reply.content, request.response_schema);
    if (auto* value = std::get_if<json>(&parsed)) {
      if (cache_) cache_->store(digest, canonical_json(request), reply.content);
      return ChatResponse{std::move(reply.content), std::move(*value), backend_->kind(), false};
    }
    last_problem = std::get<std::string>(parsed);
    last_raw = std::move(reply.content);
  }
  throw SchemaViolation(fmt::format("schema {} still violated after {} retries: {}; raw text: {}",
                                    request.response_schema.name, options_.max_schema_retries,
                                    last_problem, last_raw.substr(0, 500)),
                        last_raw);
}

GatewayStats Gateway::stats() const {
  return GatewayStats{requests_.load(), cache_hits_.load(), backend_calls_.load(),
                      schema_retries_.load()};
}

}  // namespace clinstructor::llm
