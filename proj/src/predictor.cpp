#include "clinstructor/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/core.h>

#include "clinstructor/log.hpp"

namespace clinstructor::predictor {

void EncoderConfig::validate() const {
  if (hash_dim < 2) throw ConfigError("encoder hash_dim must be >= 2");
  if (hash_dim > (std::size_t{1} << 24)) throw ConfigError("encoder hash_dim is unreasonably large");
  if (ngram_orders.empty()) throw ConfigError("encoder ngram_orders must be non-empty");
  for (int n : ngram_orders) {
    if (n < 1) throw ConfigError("encoder n-gram orders must be >= 1");
  }
  if (salt_scheme != "rank" && salt_scheme != "none") {
    throw ConfigError("encoder salt_scheme must be \"rank\" or \"none\"");
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(l2 >= 0.0)) throw ConfigError("l2 must be >= 0");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  for (double lr : grid) {
    if (!(lr > 0.0)) throw ConfigError("grid learning rates must be > 0");
  }
}

std::vector<std::string> tokenize(std::string_view answer) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : answer) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c >= 0x80;
    if (word) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

SparseBinary encode_answer(std::string_view answer, std::size_t question_rank,
                           const EncoderConfig& cfg) {
  if (extract::is_na(answer)) return {};
  const auto tokens = tokenize(answer);
  const std::uint64_t salt = cfg.salt_scheme == "rank" ? question_rank : 0;
  std::set<std::uint32_t> buckets;
  for (int n : cfg.ngram_orders) {
    const auto order = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
      std::string gram = tokens[i];
      for (std::size_t j = 1; j < order; ++j) gram += ' ' + tokens[i + j];
      // The order is mixed in so a unigram never aliases a bigram by text.
      const auto h = hash_bytes(gram, salt * 31 + order);
      buckets.insert(static_cast<std::uint32_t>(h % cfg.hash_dim));
    }
  }
  return SparseBinary(buckets.begin(), buckets.end());
}

EncodedBatch encode_records(const std::vector<extract::StructuredRecord>& records,
                            std::size_t num_questions, const EncoderConfig& cfg) {
  EncodedBatch batch;
  batch.num_questions = num_questions;
  batch.hash_dim = cfg.hash_dim;
  batch.features.reserve(records.size());
  batch.labels.reserve(records.size());
  for (const auto& r : records) {
    if (r.answers.size() != num_questions) {
      throw DigestMismatch(fmt::format("record {} has {} answers, expected {}", r.note_id,
                                       r.answers.size(), num_questions));
    }
    std::vector<std::uint32_t> f;
    for (std::size_t q = 0; q < num_questions; ++q) {
      for (auto b : encode_answer(r.answers[q], q + 1, cfg)) {
        f.push_back(static_cast<std::uint32_t>(q * cfg.hash_dim + b));
      }
    }
    batch.features.push_back(std::move(f));
    batch.labels.push_back(r.label);
  }
  return batch;
}

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_from_logit(double z, int y) { return softplus(z) - (y == 1 ? z : 0.0); }

double logit_of(const Parameters& p, const std::vector<std::uint32_t>& f) {
  double z = 0.0;
  for (auto j : f) z += p.weights[j];
  return p.bias + z;
}

// Mean BCE and, optionally, its gradient (no regularization term).
double data_loss(const Parameters& p, const EncodedBatch& batch, Parameters* grad) {
  const auto n = batch.features.size();
  if (grad) {
    grad->bias = 0.0;
    grad->weights.assign(p.weights.size(), 0.0);
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logit_of(p, batch.features[i]);
    loss += bce_from_logit(z, batch.labels[i]);
    if (grad) {
      const double r = sigmoid(z) - batch.labels[i];
      grad->bias += r;
      for (auto j : batch.features[i]) grad->weights[j] += r;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad) {
    grad->bias *= inv_n;
    for (double& g : grad->weights) g *= inv_n;
  }
  return loss * inv_n;
}

double squared_norm(const std::vector<double>& w) {
  double s = 0.0;
  for (double x : w) s += x * x;
  return s;
}

std::vector<extract::StructuredRecord> canonical_order(std::vector<extract::StructuredRecord> v) {
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (a.note_id != b.note_id) return a.note_id < b.note_id;
    if (a.label != b.label) return a.label < b.label;
    return a.answers < b.answers;
  });
  return v;
}

struct RunResult {
  Parameters best;
  std::vector<TrainLogEntry> log;
  double best_val = 0.0;
  std::size_t best_epoch = 0;
};

RunResult run_descent(const EncodedBatch& train, const EncodedBatch& val, double init_bias,
                      double lr, const TrainConfig& tcfg) {
  Parameters p;
  p.bias = init_bias;
  p.weights.assign(train.num_questions * train.hash_dim, 0.0);
  Parameters grad;
  RunResult run;
  bool have_best = false;
  const double shrink = 1.0 / (1.0 + lr * tcfg.l2);
  for (std::size_t epoch = 0; epoch <= tcfg.epochs; ++epoch) {
    TrainLogEntry entry;
    entry.epoch = epoch;
    entry.train_bce = data_loss(p, train, &grad);
    entry.train_objective = entry.train_bce + 0.5 * tcfg.l2 * squared_norm(p.weights);
    if (!std::isfinite(entry.train_objective)) {
      throw TrainingError(fmt::format("training diverged at epoch {} with learning rate {}", epoch, lr));
    }
    if (epoch % tcfg.eval_every == 0 || epoch == tcfg.epochs) {
      entry.val_bce = mean_bce(p, val);
      if (!std::isfinite(*entry.val_bce)) {
        throw TrainingError(fmt::format("validation loss non-finite at epoch {} with learning rate {}",
                                        epoch, lr));
      }
      if (!have_best || *entry.val_bce < run.best_val) {
        have_best = true;
        run.best = p;
        run.best_val = *entry.val_bce;
        run.best_epoch = epoch;
      }
    }
    run.log.push_back(entry);
    if (epoch == tcfg.epochs) break;
    // Gradient step on the data term, then the proximal map of the ridge term.
    p.bias -= lr * grad.bias;
    for (std::size_t j = 0; j < p.weights.size(); ++j) {
      p.weights[j] = (p.weights[j] - lr * grad.weights[j]) * shrink;
    }
  }
  return run;
}

json log_to_json(const std::vector<TrainLogEntry>& log) {
  json out = json::array();
  for (const auto& e : log) {
    json row{{"epoch", e.epoch}, {"train_objective", e.train_objective}, {"train_bce", e.train_bce}};
    if (e.val_bce) row["val_bce"] = *e.val_bce;
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

double objective(const Parameters& params, const EncodedBatch& batch, double l2, Parameters* grad) {
  const double loss = data_loss(params, batch, grad) + 0.5 * l2 * squared_norm(params.weights);
  if (grad) {
    for (std::size_t j = 0; j < params.weights.size(); ++j) grad->weights[j] += l2 * params.weights[j];
  }
  return loss;
}

double mean_bce(const Parameters& params, const EncodedBatch& batch) {
  return data_loss(params, batch, nullptr);
}

TrainResult train(const std::vector<extract::StructuredRecord>& train_records,
                  const std::vector<extract::StructuredRecord>& val_records,
                  const cluster::QuestionSet& qs, const EncoderConfig& ecfg,
                  const TrainConfig& tcfg) {
  ecfg.validate();
  tcfg.validate();
  if (train_records.empty()) throw TrainingError("training set is empty");
  if (val_records.empty()) throw TrainingError("validation set is empty");
  extract::check_records(train_records, qs);
  extract::check_records(val_records, qs);

  const auto train_sorted = canonical_order(train_records);
  const auto val_sorted = canonical_order(val_records);
  std::size_t n_pos = 0;
  for (const auto& r : train_sorted) n_pos += r.label == 1 ? 1 : 0;
  const std::size_t n_neg = train_sorted.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw TrainingError("training set contains a single class");

  const auto k = qs.k();
  const auto train_batch = encode_records(train_sorted, k, ecfg);
  const auto val_batch = encode_records(val_sorted, k, ecfg);
  const double init_bias = std::log(static_cast<double>(n_pos) / static_cast<double>(n_neg));

  std::vector<double> rates = tcfg.grid.empty() ? std::vector<double>{tcfg.learning_rate} : tcfg.grid;
  std::optional<RunResult> best;
  double best_lr = 0.0;
  json grid_summary = json::array();
  for (double lr : rates) {
    auto run = run_descent(train_batch, val_batch, init_bias, lr, tcfg);
    log::info("train: lr={} best val_bce={:.6f} at epoch {}", lr, run.best_val, run.best_epoch);
    grid_summary.push_back(
        {{"learning_rate", lr}, {"best_val_bce", run.best_val}, {"best_epoch", run.best_epoch}});
    if (!best || run.best_val < best->best_val) {
      best = std::move(run);
      best_lr = lr;
    }
  }

  TrainResult result;
  auto& m = result.model;
  m.bias = best->best.bias;
  m.num_questions = k;
  m.weights = std::move(best->best.weights);
  m.encoder = ecfg;
  m.question_set_digest = cluster::digest(qs);
  m.train_seed = tcfg.seed;
  m.train_log = log_to_json(best->log);
  m.selection = {{"learning_rate", best_lr},
                 {"best_epoch", best->best_epoch},
                 {"best_val_bce", best->best_val},
                 {"l2", tcfg.l2},
                 {"epochs", tcfg.epochs},
                 {"eval_every", tcfg.eval_every},
                 {"grid", grid_summary}};
  result.log = std::move(best->log);
  result.best_val_bce = best->best_val;
  result.best_epoch = best->best_epoch;
  result.learning_rate = best_lr;
  return result;
}

Prediction predict(const AdditiveModel& model, const extract::StructuredRecord& record) {
  if (record.question_set_digest != model.question_set_digest) {
    throw DigestMismatch(fmt::format("record {} was built against question set {}, model expects {}",
                                     record.note_id, record.question_set_digest,
                                     model.question_set_digest));
  }
  if (record.answers.size() != model.num_questions) {
    throw DigestMismatch(fmt::format("record {} has {} answers, model expects {}", record.note_id,
                                     record.answers.size(), model.num_questions));
  }
  Prediction p;
  p.contributions.reserve(model.num_questions);
  double sum = 0.0;
  for (std::size_t q = 0; q < model.num_questions; ++q) {
    const auto block = model.block(q);
    double c = 0.0;
    for (auto b : encode_answer(record.answers[q], q + 1, model.encoder)) c += block[b];
    p.contributions.push_back(c);
    sum += c;
  }
  p.logit = model.bias + sum;
  p.probability = sigmoid(p.logit);
  return p;
}

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("auc_roc: scores and labels differ in length");
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw Error("auc_roc: NaN score");
    if (labels[i] != 0 && labels[i] != 1) throw Error("auc_roc: labels must be 0 or 1");
    n_pos += labels[i] == 1 ? 1 : 0;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error("auc_roc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    // Positions i..j-1 share the average of 1-based ranks i+1..j.
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

Metrics evaluate(const AdditiveModel& model, const std::vector<extract::StructuredRecord>& records) {
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(records.size());
  labels.reserve(records.size());
  Metrics m;
  double loss = 0.0;
  for (const auto& r : records) {
    const auto p = predict(model, r);
    scores.push_back(p.logit);
    labels.push_back(r.label);
    loss += bce_from_logit(p.logit, r.label);
    (r.label == 1 ? m.n_pos : m.n_neg) += 1;
  }
  m.auc = auc_roc(scores, labels);
  m.mean_bce = loss / static_cast<double>(records.size());
  return m;
}

double gradient_check(const Parameters& point, const EncodedBatch& batch, double l2,
                      std::uint64_t seed, std::size_t coordinates) {
  Parameters grad;
  objective(point, batch, l2, &grad);
  Rng rng(seed);

  std::vector<std::size_t> active;
  {
    std::set<std::size_t> seen;
    for (const auto& f : batch.features) seen.insert(f.begin(), f.end());
    active.assign(seen.begin(), seen.end());
  }
  std::set<std::size_t> coords;
  const std::size_t from_active = std::min(active.size(), coordinates / 2);
  rng.shuffle(active);
  coords.insert(active.begin(), active.begin() + static_cast<std::ptrdiff_t>(from_active));
  while (coords.size() < std::min(coordinates, point.weights.size())) {
    coords.insert(rng.below(point.weights.size()));
  }

  constexpr double kStep = 1e-5;
  auto rel_error = [](double analytic, double numeric) {
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    return scale < 1e-10 ? std::abs(analytic - numeric) : std::abs(analytic - numeric) / scale;
  };

  Parameters probe = point;
  probe.bias = point.bias + kStep;
  const double fb_plus = objective(probe, batch, l2);
  probe.bias = point.bias - kStep;
  const double fb_minus = objective(probe, batch, l2);
  probe.bias = point.bias;
  double worst = rel_error(grad.bias, (fb_plus - fb_minus) / (2 * kStep));

  for (auto j : coords) {
    probe.weights[j] = point.weights[j] + kStep;
    const double f_plus = objective(probe, batch, l2);
    probe.weights[j] = point.weights[j] - kStep;
    const double f_minus = objective(probe, batch, l2);
    probe.weights[j] = point.weights[j];
    worst = std::max(worst, rel_error(grad.weights[j], (f_plus - f_minus) / (2 * kStep)));
  }
  return worst;
}

json to_json(const EncoderConfig& cfg) {
  return json{{"hash_dim", cfg.hash_dim},
              {"ngram_orders", cfg.ngram_orders},
              {"salt_scheme", cfg.salt_scheme}};
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig cfg;
  cfg.hash_dim = j.value("hash_dim", cfg.hash_dim);
  cfg.ngram_orders = j.value("ngram_orders", cfg.ngram_orders);
  cfg.salt_scheme = j.value("salt_scheme", cfg.salt_scheme);
  cfg.validate();
  return cfg;
}

json to_json(const AdditiveModel& model) {
  json blocks = json::array();
  for (std::size_t q = 0; q < model.num_questions; ++q) {
    const auto b = model.block(q);
    blocks.push_back(std::vector<double>(b.begin(), b.end()));
  }
  return json{{"bias", model.bias},
              {"weights", blocks},
              {"encoder", to_json(model.encoder)},
              {"question_set_digest", model.question_set_digest},
              {"train_seed", model.train_seed},
              {"train_log", model.train_log},
              {"selection", model.selection}};
}

AdditiveModel model_from_json(const json& j) {
  AdditiveModel m;
  try {
    m.bias = j.at("bias").get<double>();
    m.encoder = encoder_from_json(j.at("encoder"));
    m.question_set_digest = j.at("question_set_digest").get<std::string>();
    m.train_seed = j.value("train_seed", std::uint64_t{0});
    m.train_log = j.value("train_log", json::array());
    m.selection = j.value("selection", json::object());
    const auto& blocks = j.at("weights");
    m.num_questions = blocks.size();
    m.weights.reserve(m.num_questions * m.encoder.hash_dim);
    for (const auto& b : blocks) {
      if (b.size() != m.encoder.hash_dim) throw ParseError("model weight block has wrong width");
      for (const auto& w : b) m.weights.push_back(w.get<double>());
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model: ") + e.what());
  }
  return m;
}

void write_model(const std::filesystem::path& path, const AdditiveModel& model) {
  write_text_file(path, to_json(model).dump() + "\n");
}

AdditiveModel load_model(const std::filesystem::path& path) {
  return model_from_json(read_json_file(path));
}

json to_json(const Metrics& m) {
  return json{{"auc", m.auc}, {"mean_bce", m.mean_bce}, {"n_pos", m.n_pos}, {"n_neg", m.n_neg}};
}

}  // namespace clinstructor::predictor
