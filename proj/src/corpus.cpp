#include "clinstructor/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <fmt/core.h>

#include "clinstructor/errors.hpp"
#include "clinstructor/log.hpp"

namespace clinstructor::corpus {

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ParseError("unknown split tag \"" + s + "\"");
}

json to_json(const AdmissionNote& note) {
  json j{{"note_id", note.note_id}, {"text", note.text}, {"label", note.label}};
  if (note.split) j["split"] = to_string(*note.split);
  return j;
}

AdmissionNote note_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("note is not a JSON object");
  AdmissionNote note;
  if (!j.contains("note_id") || !j["note_id"].is_string()) {
    throw ParseError("missing string field note_id");
  }
  note.note_id = j["note_id"].get<std::string>();
  if (!j.contains("text") || !j["text"].is_string()) {
    throw ParseError("note " + note.note_id + ": missing string field text");
  }
  note.text = j["text"].get<std::string>();
  if (note.text.empty()) throw ParseError("note " + note.note_id + ": empty text");
  if (!j.contains("label") || !j["label"].is_number_integer()) {
    throw ParseError("note " + note.note_id + ": label must be 0 or 1");
  }
  const auto label = j["label"].get<long long>();
  if (label != 0 && label != 1) {
    throw ParseError("note " + note.note_id + ": label " + std::to_string(label) +
                     " outside {0, 1}");
  }
  note.label = static_cast<int>(label);
  if (j.contains("split") && !j["split"].is_null()) {
    note.split = split_from_string(j["split"].get<std::string>());
  }
  return note;
}

std::vector<AdmissionNote> load_notes(const std::filesystem::path& path) {
  std::ifstream probe(path);
  if (!probe) throw Error("cannot open notes file " + path.string());
  std::vector<AdmissionNote> notes;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(probe, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + "malformed JSON: " + e.what());
    }
    AdmissionNote note;
    try {
      note = note_from_json(j);
    } catch (const std::exception& e) {
      throw ParseError(where + e.what());
    }
    if (!seen.insert(note.note_id).second) {
      throw ParseError(where + "duplicate note_id \"" + note.note_id + "\"");
    }
    notes.push_back(std::move(note));
  }
  return notes;
}

void write_notes(const std::filesystem::path& path, const std::vector<AdmissionNote>& notes) {
  std::vector<json> rows;
  rows.reserve(notes.size());
  for (const auto& n : notes) rows.push_back(to_json(n));
  write_jsonl(path, rows);
}

namespace {

struct ClassIndex {
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
};

ClassIndex index_by_class(const std::vector<AdmissionNote>& notes) {
  ClassIndex idx;
  for (std::size_t i = 0; i < notes.size(); ++i) {
    (notes[i].label == 1 ? idx.pos : idx.neg).push_back(i);
  }
  return idx;
}

// Seeded uniform subset of `count` indices, returned in ascending order.
std::vector<std::size_t> choose(std::vector<std::size_t> pool, std::size_t count, Rng& rng) {
  rng.shuffle(pool);
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<AdmissionNote> gather(const std::vector<AdmissionNote>& notes,
                                  std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());
  std::vector<AdmissionNote> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(notes[i]);
  return out;
}

}  // namespace

std::vector<AdmissionNote> balanced_subsample(const std::vector<AdmissionNote>& notes,
                                              std::uint64_t seed) {
  const auto idx = index_by_class(notes);
  if (idx.pos.empty() || idx.neg.empty()) {
    throw Error("balanced_subsample: corpus contains only one class");
  }
  if (idx.neg.size() < idx.pos.size()) {
    log::warn("balanced_subsample: {} negatives < {} positives; leaving corpus unchanged",
              idx.neg.size(), idx.pos.size());
    return notes;
  }
  Rng rng(seed);
  auto kept = choose(idx.neg, idx.pos.size(), rng);
  kept.insert(kept.end(), idx.pos.begin(), idx.pos.end());
  return gather(notes, std::move(kept));
}

DatasetSplits resolve_splits(const std::vector<AdmissionNote>& notes,
                             const std::optional<SplitRatios>& ratios, std::uint64_t seed) {
  DatasetSplits out;
  if (!ratios) {
    std::size_t tagged = 0;
    for (const auto& n : notes) tagged += n.split.has_value() ? 1 : 0;
    if (tagged == 0) throw ConfigError("resolve_splits: notes carry no split tags and no ratios given");
    if (tagged != notes.size()) {
      throw ConfigError(fmt::format("resolve_splits: mixed corpus, {} of {} notes tagged", tagged,
                                    notes.size()));
    }
    for (const auto& n : notes) {
      switch (*n.split) {
        case Split::kTrain: out.train.push_back(n); break;
        case Split::kVal: out.val.push_back(n); break;
        case Split::kTest: out.test.push_back(n); break;
      }
    }
    return out;
  }

  const auto& r = *ratios;
  if (r.train < 0 || r.val < 0 || r.test < 0 ||
      std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw ConfigError(fmt::format("resolve_splits: ratios ({}, {}, {}) must be non-negative and sum to 1",
                                  r.train, r.val, r.test));
  }
  Rng rng(seed);
  const auto idx = index_by_class(notes);
  std::vector<std::size_t> train, val, test;
  for (const auto* cls : {&idx.neg, &idx.pos}) {
    auto order = *cls;
    rng.shuffle(order);
    const auto n = order.size();
    const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(r.train * n)));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(r.val * n)));
    train.insert(train.end(), order.begin(), order.begin() + n_train);
    val.insert(val.end(), order.begin() + n_train, order.begin() + n_train + n_val);
    test.insert(test.end(), order.begin() + n_train + n_val, order.end());
  }
  out.train = gather(notes, std::move(train));
  out.val = gather(notes, std::move(val));
  out.test = gather(notes, std::move(test));
  return out;
}

std::vector<AdmissionNote> sample_identification_notes(const std::vector<AdmissionNote>& notes,
                                                       std::size_t n, std::uint64_t seed) {
  if (n % 2 != 0) throw ConfigError("identification sample size must be even");
  const auto idx = index_by_class(notes);
  const auto half = n / 2;
  if (idx.pos.size() < half || idx.neg.size() < half) {
    throw Error(fmt::format(
        "identification sample of {} needs {} notes per class; corpus has {} positive, {} negative",
        n, half, idx.pos.size(), idx.neg.size()));
  }
  Rng rng(seed);
  auto picked = choose(idx.pos, half, rng);
  auto neg = choose(idx.neg, half, rng);
  picked.insert(picked.end(), neg.begin(), neg.end());
  return gather(notes, std::move(picked));
}

// --- synthetic ---------------------------------------------------------------

std::optional<double> value_signal(const AttributeTemplate& attr, const std::string& value) {
  const auto it = std::find(attr.values.begin(), attr.values.end(), value);
  if (it == attr.values.end()) return std::nullopt;
  const auto m = attr.values.size();
  if (m == 1) return 0.0;
  const auto i = static_cast<double>(it - attr.values.begin());
  return 2.0 * i / static_cast<double>(m - 1) - 1.0;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Intercept b such that the mean of sigmoid(b + logit_i) equals `rate`.
double calibrate_intercept(const std::vector<double>& logits, double rate) {
  if (logits.empty()) return std::log(rate / (1.0 - rate));
  double lo = -60.0, hi = 60.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (double l : logits) mean += sigmoid(mid + l);
    mean /= static_cast<double>(logits.size());
    (mean < rate ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

constexpr const char* kFiller[] = {
    "patient seen and examined in the emergency department.",
    "history obtained from the patient and family at bedside.",
    "transferred to the intensive care unit for closer monitoring.",
    "plan discussed with the admitting team.",
    "review of systems otherwise as documented below.",
};

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.attribute_pool.empty()) throw ConfigError("synthetic spec has an empty attribute pool");
  if (!(spec.positive_rate > 0.0 && spec.positive_rate < 1.0)) {
    throw ConfigError("synthetic positive_rate must lie in (0, 1)");
  }
  if (!(spec.na_rate >= 0.0 && spec.na_rate < 1.0)) {
    throw ConfigError("synthetic na_rate must lie in [0, 1)");
  }
  for (const auto& a : spec.attribute_pool) {
    if (a.name.empty() || a.values.empty()) {
      throw ConfigError("synthetic attribute needs a name and at least one value");
    }
  }

  Rng rng(spec.seed);
  SyntheticCorpus out;
  out.truth.reserve(spec.num_notes);
  std::vector<double> logits;
  logits.reserve(spec.num_notes);
  for (std::size_t i = 0; i < spec.num_notes; ++i) {
    GroundTruthRow row;
    row.note_id = fmt::format("synth-{:06d}", i);
    double logit = 0.0;
    for (const auto& attr : spec.attribute_pool) {
      const bool omitted = rng.uniform() < spec.na_rate;
      const auto& value = attr.values[rng.below(attr.values.size())];
      if (omitted) {
        row.attributes[attr.name] = std::nullopt;
      } else {
        row.attributes[attr.name] = value;
        logit += attr.weight * *value_signal(attr, value);
      }
    }
    logits.push_back(logit);
    out.truth.push_back(std::move(row));
  }

  const double intercept = calibrate_intercept(logits, spec.positive_rate);
  out.notes.reserve(spec.num_notes);
  for (std::size_t i = 0; i < spec.num_notes; ++i) {
    auto& row = out.truth[i];
    row.true_logit = intercept + logits[i];
    AdmissionNote note;
    note.note_id = row.note_id;
    note.label = rng.uniform() < sigmoid(row.true_logit) ? 1 : 0;

    std::vector<std::size_t> order(spec.attribute_pool.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::string text = "ADMISSION NOTE\n";
    text += kFiller[rng.below(std::size(kFiller))];
    text += '\n';
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& attr = spec.attribute_pool[order[k]];
      const auto& value = row.attributes[attr.name];
      if (value) text += attr.name + ": " + *value + "\n";
      if (k % 8 == 7) {
        text += kFiller[rng.below(std::size(kFiller))];
        text += '\n';
      }
    }
    note.text = std::move(text);
    out.notes.push_back(std::move(note));
  }
  return out;
}

const std::vector<AttributeTemplate>& default_attribute_pool() {
  static const std::vector<AttributeTemplate> pool = [] {
    std::vector<AttributeTemplate> p = {
        {"AGE", {"34", "41", "48", "55", "62", "69", "76", "83", "90"}, 12.0},
        {"MENTAL_STATUS",
         {"alert and oriented", "mildly confused", "lethargic", "obtunded", "unresponsive"},
         12.0},
        {"OXYGEN_SATURATION", {"99%", "97%", "95%", "92%", "88%", "84%"}, 10.0},
        {"BLOOD_PRESSURE", {"128/76", "118/70", "104/62", "92/54", "78/40"}, 10.0},
        {"PRIMARY_DIAGNOSIS",
         {"elective knee replacement", "asthma exacerbation", "community acquired pneumonia",
          "upper gi bleed", "septic shock"},
         10.0},
        {"RENAL_FUNCTION",
         {"normal creatinine", "mildly elevated creatinine", "acute kidney injury",
          "dialysis dependent"},
         8.0},
    };
    const char* noise[] = {
        "ALLERGIES", "FAMILY_HISTORY", "SOCIAL_HISTORY", "SMOKING_HISTORY", "ALCOHOL_USE",
        "CHIEF_COMPLAINT", "SURGICAL_HISTORY", "HOME_MEDICATIONS", "DIET", "CODE_STATUS",
        "PAIN_LEVEL", "MOBILITY", "SKIN_EXAM", "HEENT_EXAM", "NECK_EXAM", "LUNG_EXAM",
        "CARDIAC_EXAM", "ABDOMINAL_EXAM", "EXTREMITY_EXAM", "NEURO_EXAM", "VISION", "HEARING",
        "DENTAL_STATUS", "IMMUNIZATIONS", "OCCUPATION", "LIVING_SITUATION", "INSURANCE",
        "PRIMARY_LANGUAGE", "RELIGION", "MARITAL_STATUS", "EXERCISE", "SLEEP_PATTERN",
        "CAFFEINE_USE", "TRAVEL_HISTORY", "PETS", "HEIGHT", "HAND_DOMINANCE", "BLOOD_TYPE",
        "EYE_COLOR", "TATTOOS", "LAST_DENTAL_VISIT", "PREFERRED_PHARMACY", "EMERGENCY_CONTACT",
        "ADVANCE_DIRECTIVE", "INTERPRETER_NEEDED", "BOWEL_HABITS", "URINARY_HABITS",
        "MENSTRUAL_HISTORY", "HOBBIES", "EDUCATION_LEVEL",
    };
    const std::vector<std::string> generic = {"unremarkable", "noted previously",
                                              "within normal limits", "not documented in detail",
                                              "reported by family"};
    for (const char* name : noise) p.push_back({name, generic, 0.0});
    return p;
  }();
  return pool;
}

json to_json(const GroundTruthRow& row) {
  json attrs = json::object();
  for (const auto& [k, v] : row.attributes) attrs[k] = v ? json(*v) : json(nullptr);
  return json{{"note_id", row.note_id}, {"attributes", attrs}, {"true_logit", row.true_logit}};
}

GroundTruthRow truth_from_json(const json& j) {
  GroundTruthRow row;
  row.note_id = j.at("note_id").get<std::string>();
  for (const auto& [k, v] : j.at("attributes").items()) {
    row.attributes[k] = v.is_null() ? std::nullopt : std::optional<std::string>(v.get<std::string>());
  }
  row.true_logit = j.value("true_logit", 0.0);
  return row;
}

void write_truth(const std::filesystem::path& path, const std::vector<GroundTruthRow>& rows) {
  std::vector<json> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(to_json(r));
  write_jsonl(path, out);
}

std::vector<GroundTruthRow> load_truth(const std::filesystem::path& path) {
  std::vector<GroundTruthRow> rows;
  for (const auto& j : read_jsonl(path)) rows.push_back(truth_from_json(j));
  return rows;
}

}  // namespace clinstructor::corpus
