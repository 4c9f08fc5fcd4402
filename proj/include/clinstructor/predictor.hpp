#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clinstructor/cluster_select.hpp"
#include "clinstructor/errors.hpp"
#include "clinstructor/extract.hpp"

namespace clinstructor::predictor {

struct EncoderConfig {
  std::size_t hash_dim = 512;
  std::vector<int> ngram_orders = {1, 2};
  // "rank": the question rank seeds the token hash; "none": unsalted.
  std::string salt_scheme = "rank";

  void validate() const;
};

// Sorted, de-duplicated active bucket indices in [0, hash_dim).
using SparseBinary = std::vector<std::uint32_t>;

std::vector<std::string> tokenize(std::string_view answer);
SparseBinary encode_answer(std::string_view answer, std::size_t question_rank,
                           const EncoderConfig& cfg);

// Logit = bias + sum_q contribution_q, with contribution_q the dot product of
// weight block q with encode_answer(answer_q, q + 1).
struct AdditiveModel {
  double bias = 0.0;
  std::size_t num_questions = 0;
  std::vector<double> weights;  // num_questions blocks of encoder.hash_dim
  EncoderConfig encoder;
  std::string question_set_digest;
  std::uint64_t train_seed = 0;
  json train_log = json::array();
  json selection = json::object();

  std::span<const double> block(std::size_t q) const {
    return std::span<const double>(weights).subspan(q * encoder.hash_dim, encoder.hash_dim);
  }
};

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 200;
  double l2 = 1e-4;
  std::size_t eval_every = 5;
  std::uint64_t seed = 0;
  // Learning rates to search; empty means just learning_rate.
  std::vector<double> grid;

  void validate() const;
};

struct TrainLogEntry {
  std::size_t epoch = 0;
  double train_objective = 0.0;  // mean BCE + l2/2 |w|^2
  double train_bce = 0.0;
  std::optional<double> val_bce;
};

struct TrainResult {
  AdditiveModel model;
  std::vector<TrainLogEntry> log;  // of the selected grid member
  double best_val_bce = 0.0;
  std::size_t best_epoch = 0;
  double learning_rate = 0.0;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// Full-batch proximal gradient descent on mean BCE + (l2/2)|w|^2 (bias not
// regularized), from w = 0 and bias = log(n_pos / n_neg). Validation BCE is
// measured at epoch 0, every eval_every epochs and at the last epoch; the
// snapshot with the lowest value is returned. Records are put in note_id
// order first, so the result does not depend on input order.
TrainResult train(const std::vector<extract::StructuredRecord>& train_records,
                  const std::vector<extract::StructuredRecord>& val_records,
                  const cluster::QuestionSet& qs, const EncoderConfig& ecfg,
                  const TrainConfig& tcfg);

struct Prediction {
  double probability = 0.0;
  double logit = 0.0;
  std::vector<double> contributions;  // one per question, rank order
};

// Throws DigestMismatch if the record was built against another question set.
Prediction predict(const AdditiveModel& model, const extract::StructuredRecord& record);

// Rank-based AUC with average ranks for ties. Throws Error unless both
// classes are present and sizes match.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

struct Metrics {
  double auc = 0.0;
  double mean_bce = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

Metrics evaluate(const AdditiveModel& model, const std::vector<extract::StructuredRecord>& records);

// --- optimisation internals, exposed for gradient checking -----------------

struct EncodedBatch {
  std::size_t num_questions = 0;
  std::size_t hash_dim = 0;
  // Per record: global indices q * hash_dim + bucket, ascending.
  std::vector<std::vector<std::uint32_t>> features;
  std::vector<int> labels;
};

EncodedBatch encode_records(const std::vector<extract::StructuredRecord>& records,
                            std::size_t num_questions, const EncoderConfig& cfg);

struct Parameters {
  double bias = 0.0;
  std::vector<double> weights;
};

// Mean BCE + (l2/2)|w|^2. When grad is non-null it receives the analytic
// gradient (resized to match).
double objective(const Parameters& params, const EncodedBatch& batch, double l2,
                 Parameters* grad = nullptr);
double mean_bce(const Parameters& params, const EncodedBatch& batch);

// Max relative error between the analytic gradient and central differences
// (step 1e-5) over the bias plus at least `coordinates` weight coordinates,
// half of them drawn from buckets active in the batch.
double gradient_check(const Parameters& point, const EncodedBatch& batch, double l2,
                      std::uint64_t seed, std::size_t coordinates = 64);

json to_json(const EncoderConfig& cfg);
EncoderConfig encoder_from_json(const json& j);
json to_json(const AdditiveModel& model);
AdditiveModel model_from_json(const json& j);
void write_model(const std::filesystem::path& path, const AdditiveModel& model);
AdditiveModel load_model(const std::filesystem::path& path);
json to_json(const Metrics& m);

}  // namespace clinstructor::predictor
