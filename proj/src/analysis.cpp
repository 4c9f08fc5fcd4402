#include "clinstructor/analysis.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

namespace clinstructor::analysis {

NaStats na_distribution(const std::vector<extract::StructuredRecord>& records, std::size_t k) {
  if (records.empty()) throw Error("na_distribution needs at least one record");
  NaStats s;
  s.k = k;
  s.num_records = records.size();
  std::size_t total_effective = 0;
  for (const auto& r : records) {
    if (r.answers.size() != k) {
      throw DigestMismatch(fmt::format("record {} has {} answers, expected {}", r.note_id,
                                       r.answers.size(), k));
    }
    const auto eff = extract::effective_feature_count(r);
    ++s.histogram[eff];
    total_effective += eff;
  }
  const double n = static_cast<double>(records.size());
  s.mean_effective = static_cast<double>(total_effective) / n;
  s.na_fraction = k == 0 ? 0.0
                         : static_cast<double>(records.size() * k - total_effective) /
                               (n * static_cast<double>(k));
  return s;
}

json to_json(const NaStats& s) {
  json hist = json::object();
  for (const auto& [count, records] : s.histogram) hist[std::to_string(count)] = records;
  return json{{"k", s.k},
              {"num_records", s.num_records},
              {"mean_effective", s.mean_effective},
              {"na_fraction", s.na_fraction},
              {"histogram", hist}};
}

std::string histogram_csv(const NaStats& s) {
  std::string out = "effective_features,records\n";
  for (std::size_t c = 0; c <= s.k; ++c) {
    const auto it = s.histogram.find(c);
    out += fmt::format("{},{}\n", c, it == s.histogram.end() ? 0 : it->second);
  }
  return out;
}

std::string histogram_gnuplot(const std::string& csv_name) {
  return fmt::format(
      "set datafile separator ','\n"
      "set xlabel 'effective number of features (non-N/A answers)'\n"
      "set ylabel 'records'\n"
      "set style fill solid 0.6\n"
      "set boxwidth 0.9\n"
      "plot '{}' every ::1 using 1:2 with boxes notitle\n",
      csv_name);
}

cluster::QuestionSet truncate(const cluster::QuestionSet& qs, std::size_t k) {
  if (k > qs.k()) throw ConfigError(fmt::format("cannot truncate a {}-question set to {}", qs.k(), k));
  cluster::QuestionSet out;
  out.entries.assign(qs.entries.begin(), qs.entries.begin() + static_cast<std::ptrdiff_t>(k));
  out.edit_log = qs.edit_log;
  return out;
}

std::vector<extract::StructuredRecord> truncate_records(
    const std::vector<extract::StructuredRecord>& records, const cluster::QuestionSet& truncated) {
  const auto d = cluster::digest(truncated);
  std::vector<extract::StructuredRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.answers.size() < truncated.k()) throw DigestMismatch("record " + r.note_id + " too short to truncate");
    out.push_back({r.note_id, r.label,
                   std::vector<std::string>(r.answers.begin(),
                                            r.answers.begin() + static_cast<std::ptrdiff_t>(truncated.k())),
                   d});
  }
  return out;
}

std::vector<AblationRow> topk_ablation(const RecordSplits& splits, const cluster::QuestionSet& qs,
                                       const std::vector<std::size_t>& k_list,
                                       const predictor::EncoderConfig& ecfg,
                                       const predictor::TrainConfig& tcfg,
                                       std::size_t parallelism) {
  extract::check_records(splits.train, qs);
  extract::check_records(splits.val, qs);
  extract::check_records(splits.test, qs);
  for (auto k : k_list) {
    if (k < 1 || k > qs.k()) {
      throw ConfigError(fmt::format("ablation k={} outside 1..{}", k, qs.k()));
    }
  }
  std::vector<AblationRow> rows(k_list.size());
  parallel_for(k_list.size(), parallelism, [&](std::size_t i) {
    const auto k = k_list[i];
    const auto sub = truncate(qs, k);
    const auto train = truncate_records(splits.train, sub);
    const auto val = truncate_records(splits.val, sub);
    const auto test = truncate_records(splits.test, sub);
    const auto result = predictor::train(train, val, sub, ecfg, tcfg);
    const auto metrics = predictor::evaluate(result.model, test);
    rows[i] = {k, metrics.auc, train.size(), val.size(), test.size()};
  });
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "k,auc,train_size,val_size,test_size\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.6f},{},{},{}\n", r.k, r.auc, r.train_size, r.val_size, r.test_size);
  }
  return out;
}

QuestionReport question_report(const cluster::QuestionSet& qs, std::size_t top_n) {
  if (top_n > qs.k()) throw ConfigError(fmt::format("top_n={} exceeds K={}", top_n, qs.k()));
  QuestionReport r;
  r.rows.assign(qs.entries.begin(), qs.entries.begin() + static_cast<std::ptrdiff_t>(top_n));
  return r;
}

std::string QuestionReport::text() const {
  std::size_t width = 8;
  for (const auto& e : rows) width = std::max(width, e.question.size());
  std::string out = fmt::format("{:>4}  {:<{}}  {:>10}  {:>7}\n", "rank", "question", width,
                                "weight", "members");
  for (const auto& e : rows) {
    out += fmt::format("{:>4}  {:<{}}  {:>10.3f}  {:>7}\n", e.rank, e.question, width, e.weight,
                       e.member_count);
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::vector<std::string>> parse_csv(const std::string& csv) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < csv.size(); ++i) {
    const char c = csv[i];
    if (quoted) {
      if (c == '"' && i + 1 < csv.size() && csv[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
      any = true;
    }
  }
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string QuestionReport::csv() const {
  // Weights use shortest round-trip formatting so the CSV parses back exactly.
  std::string out = "rank,question,weight,member_count\n";
  for (const auto& e : rows) {
    out += fmt::format("{},{},{},{}\n", e.rank, csv_field(e.question), e.weight, e.member_count);
  }
  return out;
}

std::vector<ReportRow> parse_question_report_csv(const std::string& csv) {
  const auto table = parse_csv(csv);
  if (table.empty() || table[0] != std::vector<std::string>{"rank", "question", "weight", "member_count"}) {
    throw ParseError("question report CSV has an unexpected header");
  }
  std::vector<ReportRow> out;
  for (std::size_t i = 1; i < table.size(); ++i) {
    const auto& t = table[i];
    if (t.size() != 4) throw ParseError("question report CSV row has wrong width");
    out.push_back({std::stoul(t[0]), t[1], std::stoul(t[3]), std::stod(t[2])});
  }
  return out;
}

ContributionReport contribution_report(const predictor::AdditiveModel& model,
                                       const extract::StructuredRecord& record,
                                       const cluster::QuestionSet& qs) {
  if (cluster::digest(qs) != model.question_set_digest) {
    throw DigestMismatch("question set does not match the model");
  }
  const auto p = predictor::predict(model, record);
  ContributionReport r;
  r.note_id = record.note_id;
  r.bias = model.bias;
  r.logit = p.logit;
  r.probability = p.probability;
  for (std::size_t q = 0; q < qs.k(); ++q) {
    r.rows.push_back({qs.entries[q].rank, qs.entries[q].question, record.answers[q], p.contributions[q]});
  }
  std::stable_sort(r.rows.begin(), r.rows.end(), [](const ContributionRow& a, const ContributionRow& b) {
    return std::abs(a.contribution) > std::abs(b.contribution);
  });
  return r;
}

std::string ContributionReport::text() const {
  std::string out = fmt::format("note {}: probability={:.4f} logit={:.6f} bias={:.6f}\n", note_id,
                                probability, logit, bias);
  out += fmt::format("{:>4}  {:>12}  {}  =>  {}\n", "rank", "contribution", "question", "answer");
  for (const auto& row : rows) {
    out += fmt::format("{:>4}  {:>12.6f}  {}  =>  {}\n", row.rank, row.contribution, row.question,
                       row.answer);
  }
  return out;
}

}  // namespace clinstructor::analysis
