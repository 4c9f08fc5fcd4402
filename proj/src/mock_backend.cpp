#include "clinstructor/mock_backend.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/core.h>

#include "clinstructor/identify.hpp"
#include "clinstructor/prompts.hpp"

namespace clinstructor::llm {

std::vector<std::pair<std::string, std::string>> planted_attributes(std::string_view note) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& raw : split(note, '\n')) {
    const auto colon = raw.find(": ");
    if (colon == std::string::npos || colon == 0) continue;
    const auto key = raw.substr(0, colon);
    const bool is_key =
        key[0] >= 'A' && key[0] <= 'Z' &&
        std::all_of(key.begin(), key.end(), [](char c) {
          return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
        });
    if (!is_key) continue;
    auto value = trim(std::string_view(raw).substr(colon + 2));
    if (value.empty()) continue;
    out.emplace_back(key, std::move(value));
  }
  return out;
}

MockBackend::MockBackend(std::vector<corpus::AttributeTemplate> pool,
                         std::size_t candidates_per_note)
    : pool_(std::move(pool)), candidates_per_note_(candidates_per_note) {
  for (const auto& a : pool_) max_abs_weight_ = std::max(max_abs_weight_, std::abs(a.weight));
}

double MockBackend::importance_of(const std::string& key) const {
  for (const auto& a : pool_) {
    if (a.name != key) continue;
    const double scaled = max_abs_weight_ > 0 ? std::abs(a.weight) / max_abs_weight_ : 0.0;
    return 0.05 + 0.95 * scaled;
  }
  return 0.5;
}

std::vector<MockBackend::Phrasing> MockBackend::phrasings(const std::string& key) {
  const auto keyword = to_lower_ascii(key);
  std::string phrase = keyword;
  std::replace(phrase.begin(), phrase.end(), '_', ' ');
  // The three phrasings are linked: 0-1 share the keyword, 0-2 share the
  // normalized question.
  return {
      {"What is the patient's " + phrase + "?", keyword, 1.0},
      {"What is the patient’s current " + phrase + "?", keyword, 0.9},
      {"what is the patient's " + phrase + "?", "patient_" + keyword, 0.8},
  };
}

namespace {

double round2(double x) { return std::round(x * 100.0) / 100.0; }

std::string section_after(const std::string& text, std::string_view marker) {
  const auto pos = text.find(marker);
  if (pos == std::string::npos) return {};
  return text.substr(pos + marker.size());
}

}  // namespace

std::string MockBackend::identify(const std::string& note) const {
  const auto attrs = planted_attributes(note);
  const auto note_hash = hash_bytes(note);
  json items = json::array();
  auto emit = [&](const std::string& key, std::size_t variant) {
    const auto p = phrasings(key)[variant];
    items.push_back({{"question", p.question},
                     {"keyword", p.keyword},
                     {"importance", round2(importance_of(key) * p.importance_factor)}});
  };

  if (attrs.empty()) {
    for (std::size_t i = 0; i < candidates_per_note_; ++i) {
      items.push_back({{"question", fmt::format("What is the patient's general finding {}?", i + 1)},
                       {"keyword", fmt::format("general_finding_{}", i + 1)},
                       {"importance", 0.01}});
    }
  } else if (attrs.size() >= candidates_per_note_) {
    // Seeded subset of the planted attributes, one phrasing each.
    std::vector<std::size_t> order(attrs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(note_hash);
    rng.shuffle(order);
    order.resize(candidates_per_note_);
    std::sort(order.begin(), order.end());
    for (auto i : order) emit(attrs[i].first, hash_bytes(attrs[i].first, note_hash) % 3);
  } else {
    for (std::size_t n = 0; n < candidates_per_note_; ++n) {
      emit(attrs[n % attrs.size()].first, (n / attrs.size()) % 3);
    }
  }
  return json{{"question_info", items}}.dump();
}

std::string MockBackend::extract(const ChatRequest& request) const {
  const auto& prompt = request.user_prompt;
  const auto q_pos = prompt.find(prompts::kQuestionsMarker);
  const auto n_pos = prompt.find(prompts::kNoteMarker);
  if (q_pos == std::string::npos || n_pos == std::string::npos || n_pos < q_pos) {
    throw UnrecognizedPrompt("mock backend: extraction prompt lacks question or note section");
  }
  const auto note = prompt.substr(n_pos + prompts::kNoteMarker.size());
  std::map<std::string, std::string> lookup;
  for (const auto& [key, value] : planted_attributes(note)) {
    for (const auto& p : phrasings(key)) lookup.emplace(identify::normalize_key(p.question), value);
  }
  json answers = json::object();
  const auto block = prompt.substr(q_pos + prompts::kQuestionsMarker.size(),
                                   n_pos - q_pos - prompts::kQuestionsMarker.size());
  for (const auto& line : split(block, '\n')) {
    if (line.size() < 2 || line[0] != 'Q') continue;
    const auto colon = line.find(": ");
    if (colon == std::string::npos) continue;
    const auto id = line.substr(0, colon);
    const auto it = lookup.find(identify::normalize_key(line.substr(colon + 2)));
    answers[id] = it == lookup.end() ? "N/A" : it->second;
  }
  return answers.dump();
}

BackendReply MockBackend::send(const ChatRequest& request) {
  const auto& name = request.response_schema.name;
  if (name == prompts::kIdentifySchemaName) {
    if (request.user_prompt.find(prompts::kIdentifyNotesMarker) == std::string::npos) {
      throw UnrecognizedPrompt("mock backend: identification prompt lacks the notes section");
    }
    return {identify(section_after(request.user_prompt, prompts::kIdentifyNotesMarker)), false};
  }
  if (name.rfind("answer_", 0) == 0) return {extract(request), false};
  throw UnrecognizedPrompt("mock backend: cannot classify request with schema \"" + name + "\"");
}

ChatResponse mock_complete(const ChatRequest& request,
                           const std::vector<corpus::AttributeTemplate>& pool) {
  MockBackend backend(pool);
  auto reply = backend.send(request);
  auto parsed = parse_and_validate(reply.content, request.response_schema);
  if (auto* err = std::get_if<std::string>(&parsed)) {
    throw SchemaViolation("mock response violates schema: " + *err, reply.content);
  }
  return ChatResponse{std::move(reply.content), std::move(std::get<json>(parsed)),
                      BackendKind::kMock, false};
}

}  // namespace clinstructor::llm
