#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clinstructor/util.hpp"

namespace clinstructor::corpus {

enum class Split { kTrain, kVal, kTest };

std::string to_string(Split split);
Split split_from_string(const std::string& s);

struct AdmissionNote {
  std::string note_id;
  std::string text;
  int label = 0;  // 1 = positive outcome (deceased)
  std::optional<Split> split;
};

json to_json(const AdmissionNote& note);
// Throws ParseError on missing fields, empty text or a label outside {0, 1}.
AdmissionNote note_from_json(const json& j);

struct DatasetSplits {
  std::vector<AdmissionNote> train;
  std::vector<AdmissionNote> val;
  std::vector<AdmissionNote> test;
};

struct SplitRatios {
  double train = 0.0;
  double val = 0.0;
  double test = 0.0;
};

// Reads the notes JSONL file. Errors carry the 1-based line number.
std::vector<AdmissionNote> load_notes(const std::filesystem::path& path);
void write_notes(const std::filesystem::path& path, const std::vector<AdmissionNote>& notes);

// Keeps every positive and a seeded uniform subset of negatives of equal
// size. Output preserves input order. If negatives are already fewer than
// positives the input is returned unchanged (with a warning).
std::vector<AdmissionNote> balanced_subsample(const std::vector<AdmissionNote>& notes,
                                              std::uint64_t seed);

// Without ratios every note must carry a split tag and the tags are honored.
// With ratios, each label class is shuffled and cut independently
// (label-stratified). Within a split, notes keep input order.
DatasetSplits resolve_splits(const std::vector<AdmissionNote>& notes,
                             const std::optional<SplitRatios>& ratios, std::uint64_t seed);

// Exactly n notes, n/2 from each class. n must be even.
std::vector<AdmissionNote> sample_identification_notes(const std::vector<AdmissionNote>& notes,
                                                       std::size_t n, std::uint64_t seed);

// --- synthetic corpora -------------------------------------------------------

// One planted attribute. Values are drawn uniformly; value i of m carries the
// signal 2i/(m-1) - 1 in [-1, 1], multiplied by `weight` in the label logit.
struct AttributeTemplate {
  std::string name;  // upper-case KEY, e.g. "HEART_RATE"
  std::vector<std::string> values;
  double weight = 0.0;
};

struct SyntheticSpec {
  std::size_t num_notes = 0;
  double positive_rate = 0.5;
  std::vector<AttributeTemplate> attribute_pool;
  double na_rate = 0.0;
  std::uint64_t seed = 0;
};

struct GroundTruthRow {
  std::string note_id;
  // nullopt = attribute omitted from the note text.
  std::map<std::string, std::optional<std::string>> attributes;
  double true_logit = 0.0;
};

struct SyntheticCorpus {
  std::vector<AdmissionNote> notes;
  std::vector<GroundTruthRow> truth;
};

// Throws ConfigError on an empty pool or rates out of range.
SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec);

// The planted signal of `value` for `attr` (see AttributeTemplate), or
// nullopt if the value is not one of attr.values.
std::optional<double> value_signal(const AttributeTemplate& attr, const std::string& value);

// 56 clinically flavoured attributes. The first six carry all the predictive
// weight; the rest are noise with weight 0.
const std::vector<AttributeTemplate>& default_attribute_pool();

json to_json(const GroundTruthRow& row);
GroundTruthRow truth_from_json(const json& j);
void write_truth(const std::filesystem::path& path, const std::vector<GroundTruthRow>& rows);
std::vector<GroundTruthRow> load_truth(const std::filesystem::path& path);

}  // namespace clinstructor::corpus
