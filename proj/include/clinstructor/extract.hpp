#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "clinstructor/cluster_select.hpp"
#include "clinstructor/corpus.hpp"
#include "clinstructor/identify.hpp"
#include "clinstructor/llm_gateway.hpp"

namespace clinstructor::extract {

inline constexpr std::string_view kNa = "N/A";

struct StructuredRecord {
  std::string note_id;
  int label = 0;
  std::vector<std::string> answers;  // answers[i] belongs to rank i + 1
  std::string question_set_digest;
};

llm::ChatRequest build_extract_prompt(const corpus::AdmissionNote& note,
                                      const cluster::QuestionSet& qs,
                                      const identify::PromptOptions& options = {});

// Answers Q1..Qk, trimmed; an empty answer becomes "N/A". Other spellings of
// "none"/"n/a" are kept verbatim.
std::vector<std::string> parse_answers(const llm::ChatResponse& response, std::size_t k);

// Case-insensitive, whitespace-trimmed comparison with "n/a".
bool is_na(std::string_view answer);
std::size_t effective_feature_count(const StructuredRecord& record);

struct ExtractOptions {
  identify::PromptOptions prompt;
  // When set, records are appended here as they complete and notes already
  // present are skipped.
  std::optional<std::filesystem::path> output_path;
};

struct ExtractionResult {
  std::vector<StructuredRecord> records;  // notes order, including resumed ones
  std::vector<identify::NoteFailure> failures;
  std::size_t resumed = 0;
};

// Throws Error if no record could be produced, DigestMismatch if the output
// file holds records for a different question set.
ExtractionResult run_extraction(const std::vector<corpus::AdmissionNote>& notes,
                                const cluster::QuestionSet& qs, llm::Gateway& gateway,
                                const ExtractOptions& options = {});

json to_json(const StructuredRecord& r);
StructuredRecord record_from_json(const json& j);
std::vector<StructuredRecord> load_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, const std::vector<StructuredRecord>& records);

// Throws DigestMismatch unless every record references `qs` and has K answers.
void check_records(const std::vector<StructuredRecord>& records, const cluster::QuestionSet& qs);

// "Q: {question}\nA: {answer}\n" per question in rank order.
std::string finetune_text(const StructuredRecord& record, const cluster::QuestionSet& qs);
// Inverse of finetune_text given the same questions.
std::vector<std::string> parse_finetune_text(const std::string& text,
                                             const std::vector<std::string>& questions);
// JSONL rows {"note_id", "label", "text"}.
void export_finetune_file(const std::vector<StructuredRecord>& records,
                          const cluster::QuestionSet& qs, const std::filesystem::path& path);

}  // namespace clinstructor::extract
