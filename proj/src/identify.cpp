#include "clinstructor/identify.hpp"

#include <atomic>
#include <optional>

#include <fmt/core.h>

#include "clinstructor/log.hpp"
#include "clinstructor/prompts.hpp"

namespace clinstructor::identify {

llm::ChatRequest build_identify_prompt(const corpus::AdmissionNote& note,
                                       const PromptOptions& options) {
  std::string user(prompts::kIdentifyInstruction);
  user.replace(user.find(prompts::kNotesSlot), prompts::kNotesSlot.size(), note.text);
  llm::ChatRequest req;
  req.model_id = options.model_id;
  req.system_prompt = std::string(prompts::kIdentifySystem);
  req.user_prompt = std::move(user);
  req.response_schema = {std::string(prompts::kIdentifySchemaName),
                         "20 questions that serves as a feature for mortality prediction.",
                         prompts::identify_schema()};
  req.temperature = options.temperature;
  req.max_tokens = options.max_tokens;
  return req;
}

std::vector<FeatureCandidate> parse_candidates(const llm::ChatResponse& response,
                                               const std::string& note_id,
                                               std::size_t expected) {
  const auto& v = response.parsed_value;
  if (!v.is_object() || !v.contains("question_info") || !v["question_info"].is_array()) {
    throw CandidateError("note " + note_id + ": response lacks a question_info array");
  }
  const auto& items = v["question_info"];
  if (items.size() != expected) {
    throw CandidateError(fmt::format("note {}: expected {} candidates, got {}", note_id,
                                     expected, items.size()));
  }
  std::vector<FeatureCandidate> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    FeatureCandidate c;
    c.source_note_id = note_id;
    c.question = item.at("question").get<std::string>();
    c.keyword = item.at("keyword").get<std::string>();
    c.importance = item.at("importance").get<double>();
    if (!(c.importance >= 0.0 && c.importance <= 1.0)) {
      throw CandidateError(fmt::format("note {}: candidate {} importance {} outside [0, 1]",
                                       note_id, i, c.importance));
    }
    if (normalize_key(c.question).empty() || normalize_key(c.keyword).empty()) {
      throw CandidateError(fmt::format("note {}: candidate {} has an empty question or keyword",
                                       note_id, i));
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::string normalize_key(std::string_view text) {
  std::string mapped;
  mapped.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    // U+2018/U+2019 and U+201C/U+201D are E2 80 {98,99,9C,9D} in UTF-8.
    if (i + 2 < text.size() && static_cast<unsigned char>(text[i]) == 0xE2 &&
        static_cast<unsigned char>(text[i + 1]) == 0x80) {
      const auto third = static_cast<unsigned char>(text[i + 2]);
      if (third == 0x98 || third == 0x99) {
        mapped.push_back('\'');
        i += 2;
        continue;
      }
      if (third == 0x9C || third == 0x9D) {
        mapped.push_back('"');
        i += 2;
        continue;
      }
    }
    mapped.push_back(text[i]);
  }
  std::string out;
  out.reserve(mapped.size());
  bool pending_space = false;
  for (char c : to_lower_ascii(mapped)) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

IdentificationResult run_identification(const std::vector<corpus::AdmissionNote>& sample,
                                        llm::Gateway& gateway, const IdentifyOptions& options) {
  if (sample.empty()) throw Error("identification sample is empty");

  struct Slot {
    std::vector<FeatureCandidate> candidates;
    std::optional<std::string> error;
  };
  std::vector<Slot> slots(sample.size());
  std::atomic<std::size_t> done{0};
  parallel_for(sample.size(), gateway.parallelism(), [&](std::size_t i) {
    const auto& note = sample[i];
    try {
      const auto response = gateway.complete(build_identify_prompt(note, options.prompt));
      slots[i].candidates = parse_candidates(response, note.note_id, options.candidates_per_note);
    } catch (const std::exception& e) {
      slots[i].error = e.what();
    }
    const auto n = ++done;
    if (n % 100 == 0 || n == sample.size()) {
      log::info("identification: {}/{} notes processed", n, sample.size());
    }
  });

  IdentificationResult result;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (slots[i].error) {
      log::warn("identification failed for note {}: {}", sample[i].note_id, *slots[i].error);
      result.failures.push_back({sample[i].note_id, *slots[i].error});
      continue;
    }
    result.pool.sampled_note_ids.push_back(sample[i].note_id);
    for (auto& c : slots[i].candidates) result.pool.candidates.push_back(std::move(c));
  }
  result.gateway_stats = gateway.stats();
  const auto& st = result.gateway_stats;
  log::info("identification: {} candidates from {} notes, {} failed; cache hits {}/{} requests",
            result.pool.candidates.size(), result.pool.sampled_note_ids.size(),
            result.failures.size(), st.cache_hits, st.requests);
  if (result.pool.candidates.empty()) {
    throw Error(fmt::format("identification produced no candidates ({} of {} notes failed)",
                            result.failures.size(), sample.size()));
  }
  return result;
}

json to_json(const FeatureCandidate& c) {
  return json{{"note_id", c.source_note_id},
              {"question", c.question},
              {"keyword", c.keyword},
              {"importance", c.importance}};
}

FeatureCandidate candidate_from_json(const json& j) {
  try {
    return FeatureCandidate{j.at("note_id").get<std::string>(), j.at("question").get<std::string>(),
                            j.at("keyword").get<std::string>(), j.at("importance").get<double>()};
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed candidate: ") + e.what());
  }
}

void write_candidates(const std::filesystem::path& path,
                      const std::vector<FeatureCandidate>& candidates) {
  std::vector<json> rows;
  rows.reserve(candidates.size());
  for (const auto& c : candidates) rows.push_back(to_json(c));
  write_jsonl(path, rows);
}

std::vector<FeatureCandidate> load_candidates(const std::filesystem::path& path) {
  std::vector<FeatureCandidate> out;
  for (const auto& j : read_jsonl(path)) out.push_back(candidate_from_json(j));
  return out;
}

}  // namespace clinstructor::identify
