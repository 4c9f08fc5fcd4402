#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "clinstructor/corpus.hpp"
#include "clinstructor/errors.hpp"
#include "clinstructor/llm_gateway.hpp"

namespace clinstructor::identify {

struct FeatureCandidate {
  std::string source_note_id;
  std::string question;  // as produced, original casing
  std::string keyword;
  double importance = 0.0;
};

struct CandidatePool {
  std::vector<FeatureCandidate> candidates;
  std::vector<std::string> sampled_note_ids;
};

// A response that cannot be turned into exactly the expected number of
// valid candidates.
class CandidateError : public Error {
 public:
  using Error::Error;
};

struct PromptOptions {
  std::string model_id = "mock";
  double temperature = 0.0;
  int max_tokens = 4096;
};

llm::ChatRequest build_identify_prompt(const corpus::AdmissionNote& note,
                                       const PromptOptions& options = {});

std::vector<FeatureCandidate> parse_candidates(const llm::ChatResponse& response,
                                               const std::string& note_id,
                                               std::size_t expected = 20);

// Lower-cases ASCII, maps curly quotes to straight ones, trims and collapses
// whitespace runs. Punctuation is kept.
std::string normalize_key(std::string_view text);

struct NoteFailure {
  std::string note_id;
  std::string message;
};

struct IdentificationResult {
  CandidatePool pool;
  std::vector<NoteFailure> failures;
  llm::GatewayStats gateway_stats;
};

struct IdentifyOptions {
  PromptOptions prompt;
  std::size_t candidates_per_note = 20;
};

// One request per note, run concurrently up to the gateway's parallelism.
// Failed notes are dropped and recorded. The pool is ordered by sample order.
// Throws Error if every note failed.
IdentificationResult run_identification(const std::vector<corpus::AdmissionNote>& sample,
                                        llm::Gateway& gateway,
                                        const IdentifyOptions& options = {});

json to_json(const FeatureCandidate& c);
FeatureCandidate candidate_from_json(const json& j);
void write_candidates(const std::filesystem::path& path,
                      const std::vector<FeatureCandidate>& candidates);
std::vector<FeatureCandidate> load_candidates(const std::filesystem::path& path);

}  // namespace clinstructor::identify
