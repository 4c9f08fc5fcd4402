#include <gtest/gtest.h>

#include "clinstructor/analysis.hpp"
#include "pipeline_fixture.hpp"

namespace clinstructor::analysis {
namespace {

using extract::StructuredRecord;

cluster::QuestionSet make_qs(std::size_t k) {
  cluster::QuestionSet qs;
  for (std::size_t i = 1; i <= k; ++i) {
    qs.entries.push_back({i, "Q" + std::to_string(i) + " text?", 10.0 - static_cast<double>(i),
                          {"k" + std::to_string(i)}, i, cluster::Provenance::kLlm});
  }
  return qs;
}

TEST(NaStats, WorkedExample) {
  // Five questions, two records: 3 and 3 real answers -> 4 of 10 are N/A.
  std::vector<StructuredRecord> recs = {{"a", 0, {"x", "N/A", "y", "z", "N/A"}, ""},
                                        {"b", 1, {"N/A", "p", "q", "N/A", "r"}, ""}};
  const auto s = na_distribution(recs, 5);
  EXPECT_DOUBLE_EQ(s.na_fraction, 0.4);
  EXPECT_DOUBLE_EQ(s.mean_effective, 3.0);
  EXPECT_EQ(s.histogram.at(3), 2u);
  EXPECT_EQ(s.histogram.size(), 1u);
}

TEST(NaStats, AllNaCorpus) {
  std::vector<StructuredRecord> recs(4, StructuredRecord{"a", 0, {"N/A", "N/A"}, ""});
  const auto s = na_distribution(recs, 2);
  EXPECT_DOUBLE_EQ(s.na_fraction, 1.0);
  EXPECT_EQ(s.histogram.at(0), 4u);
  const auto csv = histogram_csv(s);
  EXPECT_EQ(csv, "effective_features,records\n0,4\n1,0\n2,0\n");
}

TEST(NaStats, RejectsEmptyOrMisshapen) {
  EXPECT_THROW(na_distribution({}, 3), Error);
  EXPECT_THROW(na_distribution({StructuredRecord{"a", 0, {"x"}, ""}}, 3), Error);
}

TEST(NaStats, SyntheticRateIsRecovered) {
  // Questions cover planted attributes only, so measured N/A tracks na_rate.
  corpus::SyntheticSpec spec{1000, 0.5, corpus::default_attribute_pool(), 0.3, 31};
  const auto run = testing_util::run_mock_pipeline(spec, 50);
  const auto s = na_distribution(run.records, 50);
  EXPECT_NEAR(s.na_fraction, 0.3, 0.02);
}

TEST(Truncate, KeepsPrefixAndRestampsDigest) {
  const auto qs = make_qs(5);
  const auto t = truncate(qs, 2);
  EXPECT_EQ(t.k(), 2u);
  EXPECT_EQ(t.entries[1].question, qs.entries[1].question);
  std::vector<StructuredRecord> recs = {{"a", 1, {"1", "2", "3", "4", "5"}, cluster::digest(qs)}};
  const auto tr = truncate_records(recs, t);
  EXPECT_EQ(tr[0].answers, (std::vector<std::string>{"1", "2"}));
  EXPECT_EQ(tr[0].question_set_digest, cluster::digest(t));
  EXPECT_THROW(truncate(qs, 6), Error);
}

RecordSplits splits_from(const testing_util::MockRun& run, std::uint64_t seed) {
  std::map<std::string, StructuredRecord> by_id;
  for (const auto& r : run.records) by_id[r.note_id] = r;
  const auto parts = corpus::resolve_splits(run.corpus.notes, corpus::SplitRatios{0.7, 0.1, 0.2}, seed);
  RecordSplits s;
  for (const auto& n : parts.train) s.train.push_back(by_id.at(n.note_id));
  for (const auto& n : parts.val) s.val.push_back(by_id.at(n.note_id));
  for (const auto& n : parts.test) s.test.push_back(by_id.at(n.note_id));
  return s;
}

TEST(Ablation, FiveRowsAndFullKMatchesDirectTraining) {
  corpus::SyntheticSpec spec{400, 0.5, corpus::default_attribute_pool(), 0.1, 32};
  const auto run = testing_util::run_mock_pipeline(spec, 50);
  const auto splits = splits_from(run, 32);
  const predictor::TrainConfig tcfg{0.3, 60, 1e-4, 5, 0, {}};
  const auto rows = topk_ablation(splits, run.qs, {10, 20, 30, 40, 50}, {}, tcfg, 2);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].k, 10u);
  EXPECT_EQ(rows[4].test_size, splits.test.size());
  const auto direct = predictor::train(splits.train, splits.val, run.qs, {}, tcfg).model;
  EXPECT_EQ(rows[4].auc, predictor::evaluate(direct, splits.test).auc);
  EXPECT_EQ(ablation_csv(rows).rfind("k,auc,train_size,val_size,test_size\n10,", 0), 0u);
  const auto again = topk_ablation(splits, run.qs, {10, 20, 30, 40, 50}, {}, tcfg, 1);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(again[i].auc, rows[i].auc);
}

TEST(Ablation, SignalInTopQuestionsSurvivesTruncation) {
  // Three informative attributes dominate importance, so they rank first.
  auto pool = corpus::default_attribute_pool();
  for (auto& a : pool) {
    if (a.name != "AGE" && a.name != "MENTAL_STATUS" && a.name != "OXYGEN_SATURATION") a.weight = 0.0;
  }
  corpus::SyntheticSpec spec{600, 0.5, pool, 0.1, 33};
  const auto run = testing_util::run_mock_pipeline(spec, 20);
  std::set<std::string> top3;
  for (std::size_t i = 0; i < 3; ++i) {
    top3.insert(testing_util::attribute_for_question(run.qs.entries[i].question, pool));
  }
  EXPECT_EQ(top3, (std::set<std::string>{"AGE", "MENTAL_STATUS", "OXYGEN_SATURATION"}));
  const auto splits = splits_from(run, 33);
  const predictor::TrainConfig tcfg{0.3, 300, 1e-4, 5, 0, {}};
  const auto rows = topk_ablation(splits, run.qs, {3, 20}, {}, tcfg, 2);
  EXPECT_GE(rows[0].auc, rows[1].auc - 0.03);
}

TEST(Report, TopNAndCsvRoundTrip) {
  auto qs = make_qs(8);
  qs.entries[2].question = "What is \"x\", exactly?";
  qs.entries[0].weight = 0.1 + 0.2;
  const auto r = question_report(qs, 5);
  ASSERT_EQ(r.rows.size(), 5u);
  EXPECT_TRUE(question_report(qs, 0).rows.empty());
  EXPECT_EQ(question_report(qs, 8).rows.size(), 8u);
  EXPECT_THROW(question_report(qs, 9), Error);
  const auto rows = parse_question_report_csv(r.csv());
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(rows[i].rank, qs.entries[i].rank);
    EXPECT_EQ(rows[i].question, qs.entries[i].question);
    EXPECT_EQ(rows[i].weight, qs.entries[i].weight);
    EXPECT_EQ(rows[i].member_count, qs.entries[i].member_count);
  }
  EXPECT_NE(r.text().find("What is \"x\", exactly?"), std::string::npos);
}

TEST(Csv, QuotingRoundTrip) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  const auto rows = parse_csv("a,\"b,c\",\"d\"\"e\"\n1,2,3\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"a", "b,c", "d\"e"}));
}

TEST(Contributions, SumToLogitAndMaskingZeroes) {
  corpus::SyntheticSpec spec{200, 0.5, corpus::default_attribute_pool(), 0.2, 34};
  const auto run = testing_util::run_mock_pipeline(spec, 10, 100);
  const auto model =
      predictor::train(run.records, run.records, run.qs, {}, {0.3, 40, 1e-4, 5, 0, {}}).model;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto rep = contribution_report(model, run.records[i], run.qs);
    double sum = rep.bias;
    for (const auto& row : rep.rows) sum += row.contribution;
    EXPECT_NEAR(sum, rep.logit, 1e-9);
    for (std::size_t j = 1; j < rep.rows.size(); ++j) {
      EXPECT_GE(std::abs(rep.rows[j - 1].contribution), std::abs(rep.rows[j].contribution));
    }
    for (const auto& row : rep.rows) {
      if (extract::is_na(row.answer)) EXPECT_EQ(row.contribution, 0.0);
    }
  }
  auto other = run.qs;
  other.entries.pop_back();
  EXPECT_THROW(contribution_report(model, run.records[0], other), DigestMismatch);
}

}  // namespace
}  // namespace clinstructor::analysis
