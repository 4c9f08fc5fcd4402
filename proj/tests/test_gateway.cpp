#include <gtest/gtest.h>

#include <deque>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "clinstructor/llm_gateway.hpp"
#include "test_helpers.hpp"

namespace clinstructor::llm {
namespace {

ChatRequest sample_request() {
  ChatRequest r;
  r.model_id = "test-model";
  r.system_prompt = "system";
  r.user_prompt = "user";
  r.response_schema.name = "pair";
  r.response_schema.description = "two fields";
  r.response_schema.schema = json::parse(R"({
    "type": "object",
    "properties": {"a": {"type": "string"}, "b": {"type": "string"}},
    "required": ["a", "b"],
    "additionalProperties": false
  })");
  return r;
}

class ScriptedBackend : public ChatBackend {
 public:
  explicit ScriptedBackend(std::deque<BackendReply> replies) : replies_(std::move(replies)) {}
  BackendKind kind() const override { return BackendKind::kMock; }
  BackendReply send(const ChatRequest& request) override {
    std::lock_guard lock(mu_);
    prompts_.push_back(request.user_prompt);
    if (replies_.empty()) return {R"({"a": "x", "b": "y"})", false};
    auto r = replies_.front();
    if (replies_.size() > 1) replies_.pop_front();
    return r;
  }
  std::vector<std::string> prompts() const {
    std::lock_guard lock(mu_);
    return prompts_;
  }

 private:
  mutable std::mutex mu_;
  std::deque<BackendReply> replies_;
  std::vector<std::string> prompts_;
};

TEST(CacheKey, SensitiveToEveryField) {
  const auto base = sample_request();
  std::set<std::string> keys{cache_key(base)};
  auto vary = [&](auto mutate) {
    auto r = base;
    mutate(r);
    EXPECT_TRUE(keys.insert(cache_key(r)).second);
  };
  vary([](ChatRequest& r) { r.model_id = "other"; });
  vary([](ChatRequest& r) { r.system_prompt += " "; });
  vary([](ChatRequest& r) { r.user_prompt = "User"; });
  vary([](ChatRequest& r) { r.response_schema.name = "pair2"; });
  vary([](ChatRequest& r) { r.response_schema.schema["required"] = json::array({"a"}); });
  vary([](ChatRequest& r) { r.temperature = 0.5; });
  vary([](ChatRequest& r) { r.max_tokens = 100; });
  EXPECT_EQ(cache_key(base), cache_key(sample_request()));
}

TEST(CacheKey, FieldBoundariesAreUnambiguous) {
  auto a = sample_request();
  auto b = sample_request();
  a.system_prompt = "ab";
  a.user_prompt = "c";
  b.system_prompt = "a";
  b.user_prompt = "bc";
  EXPECT_NE(canonical_serialization(a), canonical_serialization(b));
  EXPECT_NE(cache_key(a), cache_key(b));
}

TEST(CacheKey, SchemaKeyOrderDoesNotMatter) {
  auto a = sample_request();
  auto b = sample_request();
  b.response_schema.schema = json::parse(R"({
    "additionalProperties": false, "required": ["a", "b"],
    "properties": {"b": {"type": "string"}, "a": {"type": "string"}}, "type": "object"
  })");
  EXPECT_EQ(cache_key(a), cache_key(b));
}

TEST(Gateway, SecondCallIsServedFromCache) {
  testing_util::TempDir dir;
  auto backend = std::make_shared<ScriptedBackend>(std::deque<BackendReply>{});
  Gateway gw(backend, ResponseCache(dir.path()));
  const auto first = gw.complete(sample_request());
  const auto second = gw.complete(sample_request());
  EXPECT_FALSE(first.cached);
  EXPECT_TRUE(second.cached);
  EXPECT_EQ(first.raw_text, second.raw_text);
  EXPECT_EQ(first.parsed_value, second.parsed_value);
  EXPECT_EQ(gw.stats().backend_calls, 1u);
  EXPECT_EQ(gw.stats().cache_hits, 1u);

  Gateway fresh(backend, ResponseCache(dir.path()));
  EXPECT_TRUE(fresh.complete(sample_request()).cached);
  EXPECT_EQ(backend->prompts().size(), 1u);
}

TEST(Gateway, CacheEntryRecordsRequest) {
  testing_util::TempDir dir;
  ResponseCache cache(dir.path());
  auto backend = std::make_shared<ScriptedBackend>(std::deque<BackendReply>{});
  Gateway gw(backend, cache);
  gw.complete(sample_request());
  const auto digest = cache_key(sample_request());
  const auto entry = read_json_file(cache.entry_path(digest));
  EXPECT_EQ(entry["request"], canonical_json(sample_request()));
  EXPECT_EQ(entry["raw_text"], R"({"a": "x", "b": "y"})");
  EXPECT_TRUE(entry.contains("timestamp"));
  EXPECT_EQ(cache.stats().entries, 1u);
  EXPECT_EQ(cache.clear(), 1u);
  EXPECT_EQ(cache.stats().entries, 0u);
}

TEST(Gateway, RetriesThenSucceeds) {
  auto backend = std::make_shared<ScriptedBackend>(
      std::deque<BackendReply>{{"not json", false}, {R"({"a": "x"})", false},
                               {R"({"a": "1", "b": "2"})", false}});
  Gateway gw(backend, std::nullopt);
  const auto resp = gw.complete(sample_request());
  EXPECT_EQ(resp.parsed_value["b"], "2");
  EXPECT_EQ(gw.stats().schema_retries, 2u);
  const auto prompts = backend->prompts();
  ASSERT_EQ(prompts.size(), 3u);
  EXPECT_EQ(prompts[0], "user");
  EXPECT_NE(prompts[1], "user");
  EXPECT_EQ(prompts[1].rfind("user", 0), 0u);
}

TEST(Gateway, PersistentViolationRaisesAfterRetries) {
  auto backend = std::make_shared<ScriptedBackend>(
      std::deque<BackendReply>{{R"({"a": "only"})", false}});
  Gateway gw(backend, std::nullopt, GatewayOptions{2, 1});
  try {
    gw.complete(sample_request());
    FAIL() << "expected SchemaViolation";
  } catch (const SchemaViolation& e) {
    EXPECT_EQ(e.raw_text(), R"({"a": "only"})");
    EXPECT_NE(std::string(e.what()).find(R"({"a": "only"})"), std::string::npos);
  }
  EXPECT_EQ(backend->prompts().size(), 3u);
}

TEST(Gateway, FailedRequestIsNotCached) {
  testing_util::TempDir dir;
  auto backend = std::make_shared<ScriptedBackend>(std::deque<BackendReply>{{"{}", false}});
  Gateway gw(backend, ResponseCache(dir.path()), GatewayOptions{0, 1});
  EXPECT_THROW(gw.complete(sample_request()), SchemaViolation);
  EXPECT_EQ(ResponseCache(dir.path()).stats().entries, 0u);
}

TEST(Gateway, TruncationIsDistinctError) {
  auto backend = std::make_shared<ScriptedBackend>(
      std::deque<BackendReply>{{R"({"a": "x", "b)", true}});
  Gateway gw(backend, std::nullopt);
  EXPECT_THROW(gw.complete(sample_request()), TruncationError);
  EXPECT_EQ(backend->prompts().size(), 1u);
}

TEST(Gateway, InvalidSchemaDocumentRejected) {
  auto backend = std::make_shared<ScriptedBackend>(std::deque<BackendReply>{});
  Gateway gw(backend, std::nullopt);
  auto r = sample_request();
  r.response_schema.schema = json::parse(R"({"type": "tuple"})");
  EXPECT_THROW(gw.complete(r), ConfigError);
  EXPECT_TRUE(backend->prompts().empty());
}

TEST(HttpBackend, RequestBodyWireFormat) {
  const auto body = HttpBackend::request_body(sample_request());
  EXPECT_EQ(body["model"], "test-model");
  ASSERT_EQ(body["messages"].size(), 2u);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "user");
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["max_tokens"], 4096);
  EXPECT_EQ(body["response_format"]["type"], "json_schema");
  EXPECT_EQ(body["response_format"]["json_schema"]["name"], "pair");
  EXPECT_EQ(body["response_format"]["json_schema"]["strict"], true);
}

TEST(HttpBackend, ParseReply) {
  const auto ok = HttpBackend::parse_reply(
      R"({"choices": [{"message": {"content": "{}"}, "finish_reason": "stop"}]})");
  EXPECT_EQ(ok.content, "{}");
  EXPECT_FALSE(ok.truncated);
  EXPECT_TRUE(HttpBackend::parse_reply(
                  R"({"choices": [{"message": {"content": "{"}, "finish_reason": "length"}]})")
                  .truncated);
  EXPECT_THROW(HttpBackend::parse_reply("<html>"), NetworkError);
  EXPECT_THROW(HttpBackend::parse_reply(R"({"choices": []})"), NetworkError);
}

class LocalServer {
 public:
  LocalServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(HttpBackend, RoundTripWithRetryOnServerError) {
  std::atomic<int> calls{0};
  std::string seen_auth, seen_path;
  json seen_body;
  auto srv = std::make_unique<LocalServer>();
  srv->server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 503;
      res.set_content("busy", "text/plain");
      return;
    }
    seen_auth = req.get_header_value("Authorization");
    seen_body = json::parse(req.body);
    res.set_content(
        R"({"choices": [{"message": {"content": "{\"a\": \"1\", \"b\": \"2\"}"}, "finish_reason": "stop"}]})",
        "application/json");
  });
  HttpBackend backend(HttpOptions{srv->base(), "secret", 10, 3, 1});
  const auto reply = backend.send(sample_request());
  EXPECT_EQ(reply.content, R"({"a": "1", "b": "2"})");
  EXPECT_EQ(calls.load(), 2);
  EXPECT_EQ(seen_auth, "Bearer secret");
  EXPECT_EQ(seen_body, HttpBackend::request_body(sample_request()));
}

TEST(HttpBackend, ClientErrorIsNotRetried) {
  std::atomic<int> calls{0};
  LocalServer srv;
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 400;
    res.set_content("bad", "text/plain");
  });
  HttpBackend backend(HttpOptions{srv.base(), "", 10, 3, 1});
  EXPECT_THROW(backend.send(sample_request()), NetworkError);
  EXPECT_EQ(calls.load(), 1);
}

TEST(HttpBackend, GivesUpAfterMaxAttempts) {
  std::atomic<int> calls{0};
  LocalServer srv;
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 500;
  });
  HttpBackend backend(HttpOptions{srv.base(), "", 10, 3, 1});
  EXPECT_THROW(backend.send(sample_request()), NetworkError);
  EXPECT_EQ(calls.load(), 3);
}

TEST(HttpBackend, RequiresScheme) {
  EXPECT_THROW(HttpBackend(HttpOptions{"localhost:8000", "", 1, 1, 1}), ConfigError);
}

}  // namespace
}  // namespace clinstructor::llm
