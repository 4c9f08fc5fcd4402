#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clinstructor/errors.hpp"
#include "clinstructor/identify.hpp"

namespace clinstructor::cluster {

using identify::FeatureCandidate;

struct FeatureCluster {
  std::vector<std::size_t> members;  // indices into the candidate list, ascending
  std::set<std::string> questions;   // normalized
  std::set<std::string> keywords;    // normalized
  double weight = 0.0;               // sum of member importances
};

// Connected components of the graph joining candidates that share a
// normalized question or a normalized keyword. Clusters are ordered by their
// smallest member index.
std::vector<FeatureCluster> cluster_candidates(const std::vector<FeatureCandidate>& candidates);

// The normalized question with the largest summed importance over its exact
// occurrences; ties go to the higher occurrence count, then the
// lexicographically smaller string. Returned in the casing of its
// highest-importance occurrence (ties: lexicographically smallest original).
std::string representative_question(const FeatureCluster& cluster,
                                    const std::vector<FeatureCandidate>& candidates);

enum class Provenance { kLlm, kHuman };

struct QuestionEntry {
  std::size_t rank = 0;  // 1-based
  std::string question;
  double weight = 0.0;
  std::vector<std::string> keywords;  // sorted
  std::size_t member_count = 0;
  Provenance provenance = Provenance::kLlm;
};

struct QuestionSet {
  std::vector<QuestionEntry> entries;
  json edit_log = json::array();

  std::size_t k() const { return entries.size(); }
  std::vector<std::string> questions() const;
};

// Top-k clusters by weight, ties broken by representative question
// (byte-lexicographic ascending).
QuestionSet rank_and_select(const std::vector<FeatureCluster>& clusters,
                            const std::vector<FeatureCandidate>& candidates, std::size_t k);

struct ReviewEdit {
  enum class Action { kDrop, kReplace };
  Action action = Action::kDrop;
  std::string question;  // matched after normalization
  std::optional<std::size_t> rank;  // alternative reference
  std::string replacement;
};

class ReviewError : public Error {
 public:
  using Error::Error;
};

// Applies edits in order; ranks are re-assigned densely afterwards. Each
// applied edit is appended to edit_log together with the source digest.
QuestionSet apply_review(const QuestionSet& qs, const std::vector<ReviewEdit>& edits);

json to_json(const QuestionSet& qs);
QuestionSet question_set_from_json(const json& j);
// SHA-256 of the compact serialization of to_json(qs); this is what records
// and models refer to.
std::string digest(const QuestionSet& qs);
void write_question_set(const std::filesystem::path& path, const QuestionSet& qs);
QuestionSet load_question_set(const std::filesystem::path& path);

ReviewEdit review_edit_from_json(const json& j);
std::vector<ReviewEdit> load_review_edits(const std::filesystem::path& path);

}  // namespace clinstructor::cluster
