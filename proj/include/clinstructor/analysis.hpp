#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "clinstructor/cluster_select.hpp"
#include "clinstructor/extract.hpp"
#include "clinstructor/predictor.hpp"

namespace clinstructor::analysis {

struct NaStats {
  std::map<std::size_t, std::size_t> histogram;  // effective count -> records
  std::size_t num_records = 0;
  std::size_t k = 0;
  double mean_effective = 0.0;
  double na_fraction = 0.0;
};

NaStats na_distribution(const std::vector<extract::StructuredRecord>& records, std::size_t k);
json to_json(const NaStats& s);
// "effective_features,records" with one row per count 0..k.
std::string histogram_csv(const NaStats& s);
// gnuplot script plotting the CSV named `csv_name`.
std::string histogram_gnuplot(const std::string& csv_name);

struct RecordSplits {
  std::vector<extract::StructuredRecord> train;
  std::vector<extract::StructuredRecord> val;
  std::vector<extract::StructuredRecord> test;
};

struct AblationRow {
  std::size_t k = 0;
  double auc = 0.0;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
  std::size_t test_size = 0;
};

// The first k entries of qs, keeping edit history.
cluster::QuestionSet truncate(const cluster::QuestionSet& qs, std::size_t k);
// Records sliced to their first k answers and re-stamped for `truncated`.
std::vector<extract::StructuredRecord> truncate_records(
    const std::vector<extract::StructuredRecord>& records, const cluster::QuestionSet& truncated);

// Retrains on each rank prefix and reports test AUC. Rows follow k_list
// order and are computed on up to `parallelism` threads.
std::vector<AblationRow> topk_ablation(const RecordSplits& splits, const cluster::QuestionSet& qs,
                                       const std::vector<std::size_t>& k_list,
                                       const predictor::EncoderConfig& ecfg,
                                       const predictor::TrainConfig& tcfg,
                                       std::size_t parallelism = 1);
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct QuestionReport {
  std::vector<cluster::QuestionEntry> rows;
  std::string text() const;
  std::string csv() const;
};

QuestionReport question_report(const cluster::QuestionSet& qs, std::size_t top_n);

struct ReportRow {
  std::size_t rank;
  std::string question;
  std::size_t member_count;
  double weight;
};
// Parses QuestionReport::csv() output.
std::vector<ReportRow> parse_question_report_csv(const std::string& csv);

struct ContributionRow {
  std::size_t rank;
  std::string question;
  std::string answer;
  double contribution;
};

struct ContributionReport {
  std::string note_id;
  double bias = 0.0;
  double logit = 0.0;
  double probability = 0.0;
  std::vector<ContributionRow> rows;  // by |contribution| descending, then rank
  std::string text() const;
};

ContributionReport contribution_report(const predictor::AdditiveModel& model,
                                       const extract::StructuredRecord& record,
                                       const cluster::QuestionSet& qs);

// RFC 4180 quoting for a single field.
std::string csv_field(const std::string& s);
std::vector<std::vector<std::string>> parse_csv(const std::string& csv);

}  // namespace clinstructor::analysis
