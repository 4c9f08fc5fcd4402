#include <gtest/gtest.h>

#include <cmath>

#include "clinstructor/predictor.hpp"
#include "oracles.hpp"
#include "pipeline_fixture.hpp"
#include "test_helpers.hpp"

namespace clinstructor::predictor {
namespace {

using extract::StructuredRecord;
using cluster::QuestionSet;

QuestionSet make_qs(std::size_t k) {
  QuestionSet qs;
  for (std::size_t i = 1; i <= k; ++i) {
    qs.entries.push_back({i, "Question " + std::to_string(i) + "?", 1.0, {}, 1,
                          cluster::Provenance::kLlm});
  }
  return qs;
}

// Question 1 carries the label, question 2 is noise and question 3 is always N/A.
std::vector<StructuredRecord> toy_records(const QuestionSet& qs, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<StructuredRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(rng.below(2));
    const bool flip = rng.below(10) == 0;
    std::string a1 = (y == 1) != flip ? "very low pressure" : "normal pressure";
    std::string a2 = rng.below(2) ? "blue" : "green";
    std::string a3 = "N/A";
    out.push_back({"r" + std::to_string(1000 + i), y, {a1, a2, a3}, cluster::digest(qs)});
  }
  return out;
}

TEST(Encoder, NaIsZeroVector) {
  EncoderConfig cfg;
  EXPECT_TRUE(encode_answer("N/A", 1, cfg).empty());
  EXPECT_TRUE(encode_answer(" n/a", 7, cfg).empty());
  EXPECT_FALSE(encode_answer("74", 1, cfg).empty());
}

TEST(Encoder, TokenizeLowercasesAndSplits) {
  EXPECT_EQ(tokenize("BP 80/40, HR-120"), (std::vector<std::string>{"bp", "80", "40", "hr", "120"}));
  EXPECT_TRUE(tokenize(" ;; ").empty());
}

TEST(Encoder, UnigramsAndBigramsAreDistinctBuckets) {
  EncoderConfig cfg;
  cfg.hash_dim = 1 << 20;
  EXPECT_EQ(encode_answer("acute renal failure", 1, cfg).size(), 5u);
  cfg.ngram_orders = {1};
  EXPECT_EQ(encode_answer("acute renal failure", 1, cfg).size(), 3u);
}

TEST(Encoder, RankSaltDecorrelatesQuestions) {
  // Same string under two ranks lands in the same bucket only by chance:
  // with H buckets the expected collision rate is about 1/H.
  EncoderConfig cfg;
  cfg.hash_dim = 512;
  cfg.ngram_orders = {1};
  Rng rng(3);
  int collisions = 0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) {
    const std::string word = "w" + std::to_string(rng.next_u64());
    collisions += encode_answer(word, 1, cfg) == encode_answer(word, 2, cfg) ? 1 : 0;
  }
  EXPECT_LE(collisions, 10);  // mean about 2
  cfg.salt_scheme = "none";
  EXPECT_EQ(encode_answer("fever", 1, cfg), encode_answer("fever", 2, cfg));
}

TEST(Encoder, ConfigValidation) {
  EncoderConfig cfg;
  cfg.hash_dim = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.salt_scheme = "pepper";
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Train, ObjectiveDecreasesEarly) {
  const auto qs = make_qs(3);
  const auto recs = toy_records(qs, 200, 1);
  TrainConfig t;
  t.epochs = 10;
  t.eval_every = 1;
  const auto res = train(recs, recs, qs, EncoderConfig{}, t);
  ASSERT_EQ(res.log.size(), 11u);
  for (std::size_t e = 1; e < res.log.size(); ++e) {
    EXPECT_LT(res.log[e].train_objective, res.log[e - 1].train_objective) << e;
  }
}

TEST(Train, LearnsPlantedSignal) {
  const auto qs = make_qs(3);
  const auto m = train(toy_records(qs, 400, 2), toy_records(qs, 100, 3), qs, EncoderConfig{},
                       TrainConfig{0.5, 300, 1e-4, 5, 0, {}})
                     .model;
  const auto metrics = evaluate(m, toy_records(qs, 400, 4));
  EXPECT_GT(metrics.auc, 0.85);
}

TEST(Train, HugeRidgeShrinksWeightsToZero) {
  const auto qs = make_qs(3);
  const auto recs = toy_records(qs, 100, 5);
  const auto m = train(recs, recs, qs, EncoderConfig{}, TrainConfig{0.5, 50, 1e6, 5, 0, {}}).model;
  double max_abs = 0;
  for (double w : m.weights) max_abs = std::max(max_abs, std::abs(w));
  EXPECT_LT(max_abs, 1e-6);
}

TEST(Train, SelectsMinimumValidationLoss) {
  const auto qs = make_qs(3);
  auto train_recs = toy_records(qs, 60, 6);
  const auto res = train(train_recs, toy_records(qs, 60, 7), qs, EncoderConfig{},
                         TrainConfig{1.0, 200, 0.0, 5, 0, {0.05, 1.0}});
  double best = 1e300;
  for (const auto& e : res.log) {
    if (e.val_bce) best = std::min(best, *e.val_bce);
  }
  EXPECT_EQ(res.best_val_bce, best);
  EXPECT_EQ(res.model.selection["grid"].size(), 2u);
  EXPECT_EQ(res.model.selection["learning_rate"], res.learning_rate);
}

TEST(Train, BitIdenticalAcrossRunsAndInputOrder) {
  testing_util::TempDir dir;
  const auto qs = make_qs(3);
  auto recs = toy_records(qs, 150, 8);
  const auto val = toy_records(qs, 50, 9);
  const TrainConfig t{0.3, 40, 1e-3, 5, 11, {}};
  write_model(dir.path() / "a.json", train(recs, val, qs, EncoderConfig{}, t).model);
  write_model(dir.path() / "b.json", train(recs, val, qs, EncoderConfig{}, t).model);
  Rng rng(1);
  rng.shuffle(recs);
  write_model(dir.path() / "c.json", train(recs, val, qs, EncoderConfig{}, t).model);
  const auto a = read_text_file(dir.path() / "a.json");
  EXPECT_EQ(a, read_text_file(dir.path() / "b.json"));
  EXPECT_EQ(a, read_text_file(dir.path() / "c.json"));
}

TEST(Train, AlwaysNaQuestionKeepsZeroBlock) {
  const auto qs = make_qs(3);
  const auto recs = toy_records(qs, 100, 10);
  const auto m = train(recs, recs, qs, EncoderConfig{}, TrainConfig{0.5, 50, 0.0, 5, 0, {}}).model;
  for (double w : m.block(2)) EXPECT_EQ(w, 0.0);
}

TEST(Train, RejectsSingleClassAndDigestMismatch) {
  const auto qs = make_qs(3);
  auto recs = toy_records(qs, 20, 11);
  for (auto& r : recs) r.label = 1;
  EXPECT_THROW(train(recs, recs, qs, EncoderConfig{}, TrainConfig{}), TrainingError);
  recs = toy_records(qs, 20, 11);
  recs[3].question_set_digest = "other";
  EXPECT_THROW(train(recs, recs, qs, EncoderConfig{}, TrainConfig{}), DigestMismatch);
}

TEST(Predict, AllNaRecordAtZeroBiasIsOneHalf) {
  const auto qs = make_qs(3);
  AdditiveModel m;
  m.num_questions = 3;
  m.weights.assign(3 * m.encoder.hash_dim, 0.7);
  m.question_set_digest = cluster::digest(qs);
  const StructuredRecord r{"x", 0, {"N/A", "N/A", "N/A"}, m.question_set_digest};
  const auto p = predict(m, r);
  EXPECT_EQ(p.probability, 0.5);
  EXPECT_EQ(p.contributions, std::vector<double>(3, 0.0));
}

TEST(Predict, MaskingOneAnswerRemovesOnlyItsContribution) {
  const auto qs = make_qs(3);
  const auto recs = toy_records(qs, 200, 12);
  const auto m = train(recs, recs, qs, EncoderConfig{}, TrainConfig{0.5, 60, 1e-4, 5, 0, {}}).model;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto full = predict(m, recs[i]);
    auto masked_rec = recs[i];
    masked_rec.answers[0] = "N/A";
    const auto masked = predict(m, masked_rec);
    EXPECT_NEAR(full.logit - masked.logit, full.contributions[0], 1e-12);
    EXPECT_EQ(masked.contributions[1], full.contributions[1]);
    EXPECT_EQ(masked.contributions[0], 0.0);
  }
}

TEST(Predict, DigestChecked) {
  const auto qs = make_qs(3);
  AdditiveModel m;
  m.num_questions = 3;
  m.weights.assign(3 * m.encoder.hash_dim, 0.0);
  m.question_set_digest = cluster::digest(qs);
  EXPECT_THROW(predict(m, StructuredRecord{"x", 0, {"a", "b", "c"}, "nope"}), DigestMismatch);
}

TEST(Auc, WorkedExamples) {
  const std::vector<double> s1 = {0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y1 = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auc_roc(s1, y1), 0.75);
  const std::vector<double> s2 = {0.1, 0.2, 0.8, 0.9};
  EXPECT_DOUBLE_EQ(auc_roc(s2, y1), 1.0);
  const std::vector<double> s3 = {0.5, 0.5, 0.5, 0.5};
  EXPECT_DOUBLE_EQ(auc_roc(s3, y1), 0.5);
}

TEST(Auc, RejectsDegenerateInput) {
  const std::vector<double> s = {0.1, 0.2};
  EXPECT_THROW(auc_roc(s, std::vector<int>{1, 1}), Error);
  EXPECT_THROW(auc_roc(s, std::vector<int>{0, 2}), Error);
  EXPECT_THROW(auc_roc(std::vector<double>{NAN, 0.1}, std::vector<int>{0, 1}), Error);
}

TEST(Auc, MatchesPairwiseOracleProperty) {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng.below(300);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const auto levels = 1 + rng.below(t % 2 ? 5 : 1000);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(levels)) / 7.0;
      y[i] = static_cast<int>(rng.below(2));
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_NEAR(auc_roc(s, y), oracle::pairwise_auc(s, y), 1e-12);
  }
}

TEST(Auc, InvariantUnderMonotoneTransform) {
  Rng rng(22);
  std::vector<double> s(200), t(200);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    s[i] = static_cast<double>(rng.below(40)) / 10.0 - 2.0;
    t[i] = 3.0 * s[i] + 1.0;
    y[i] = static_cast<int>(i % 2);
  }
  EXPECT_EQ(auc_roc(s, y), auc_roc(t, y));
  for (auto& v : t) v = std::exp(v);
  EXPECT_EQ(auc_roc(s, y), auc_roc(t, y));
}

// Independent central differences straight from the objective.
double fd_max_rel_error(const Parameters& point, const EncodedBatch& batch, double l2, Rng& rng,
                        std::size_t coords) {
  Parameters grad;
  objective(point, batch, l2, &grad);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t c = 0; c < coords; ++c) {
    const auto j = rng.below(point.weights.size());
    Parameters plus = point, minus = point;
    plus.weights[j] += h;
    minus.weights[j] -= h;
    const double numeric = (objective(plus, batch, l2) - objective(minus, batch, l2)) / (2 * h);
    const double scale = std::max(std::abs(numeric), std::abs(grad.weights[j]));
    worst = std::max(worst, scale < 1e-10 ? std::abs(numeric - grad.weights[j])
                                          : std::abs(numeric - grad.weights[j]) / scale);
  }
  return worst;
}

Parameters random_point(std::size_t dim, Rng& rng) {
  Parameters p;
  p.bias = rng.uniform() - 0.5;
  p.weights.resize(dim);
  for (auto& w : p.weights) w = (rng.uniform() - 0.5) * 0.2;
  return p;
}

TEST(Gradient, MatchesFiniteDifferences) {
  const auto qs = make_qs(3);
  EncoderConfig cfg;
  cfg.hash_dim = 32;
  const auto batch = encode_records(toy_records(qs, 80, 13), 3, cfg);
  Rng rng(14);
  const auto p = random_point(3 * 32, rng);
  EXPECT_LT(fd_max_rel_error(p, batch, 1e-2, rng, 96), 1e-4);
  EXPECT_LT(gradient_check(p, batch, 1e-2, 15), 1e-4);
}

TEST(Gradient, ZeroWeightsOnAllNaRecordsGiveZeroWeightGradient) {
  EncoderConfig cfg;
  cfg.hash_dim = 16;
  const auto qs = make_qs(2);
  std::vector<StructuredRecord> recs = {{"a", 1, {"N/A", "N/A"}, ""}, {"b", 0, {"N/A", "N/A"}, ""}};
  const auto batch = encode_records(recs, 2, cfg);
  Parameters p;
  p.weights.assign(32, 0.0);
  Parameters g;
  objective(p, batch, 0.5, &g);
  for (double v : g.weights) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(g.bias, 0.0, 1e-15);
}

TEST(Gradient, DuplicatingEveryRecordLeavesMeanGradientUnchanged) {
  EncoderConfig cfg;
  cfg.hash_dim = 32;
  const auto qs = make_qs(3);
  const auto recs = toy_records(qs, 40, 16);
  auto doubled = recs;
  doubled.insert(doubled.end(), recs.begin(), recs.end());
  Rng rng(17);
  const auto p = random_point(96, rng);
  Parameters g1, g2;
  objective(p, encode_records(recs, 3, cfg), 0.0, &g1);
  objective(p, encode_records(doubled, 3, cfg), 0.0, &g2);
  EXPECT_NEAR(g1.bias, g2.bias, 1e-14);
  for (std::size_t j = 0; j < g1.weights.size(); ++j) EXPECT_NEAR(g1.weights[j], g2.weights[j], 1e-14);
}

TEST(ModelIo, RoundTrip) {
  testing_util::TempDir dir;
  const auto qs = make_qs(3);
  const auto recs = toy_records(qs, 50, 18);
  const auto m = train(recs, recs, qs, EncoderConfig{}, TrainConfig{0.5, 10, 1e-4, 5, 3, {}}).model;
  write_model(dir.path() / "m.json", m);
  const auto back = load_model(dir.path() / "m.json");
  EXPECT_EQ(back.weights, m.weights);
  EXPECT_EQ(back.bias, m.bias);
  EXPECT_EQ(back.question_set_digest, m.question_set_digest);
  EXPECT_EQ(evaluate(back, recs).auc, evaluate(m, recs).auc);
}

}  // namespace
}  // namespace clinstructor::predictor
