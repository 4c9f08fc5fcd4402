#include "clinstructor/cluster_select.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include <fmt/core.h>

#include "clinstructor/disjoint_set.hpp"
#include "clinstructor/log.hpp"

namespace clinstructor::cluster {

using identify::normalize_key;

std::vector<FeatureCluster> cluster_candidates(const std::vector<FeatureCandidate>& candidates) {
  const auto n = candidates.size();
  DisjointSet dsu(n);
  std::vector<std::string> norm_q(n), norm_k(n);
  // Questions and keywords live in separate namespaces: a keyword that
  // happens to equal some question text does not link them.
  std::unordered_map<std::string, std::size_t> first_q, first_k;
  for (std::size_t i = 0; i < n; ++i) {
    norm_q[i] = normalize_key(candidates[i].question);
    norm_k[i] = normalize_key(candidates[i].keyword);
    if (auto [it, inserted] = first_q.emplace(norm_q[i], i); !inserted) dsu.unite(i, it->second);
    if (auto [it, inserted] = first_k.emplace(norm_k[i], i); !inserted) dsu.unite(i, it->second);
  }

  std::vector<FeatureCluster> clusters;
  std::unordered_map<std::size_t, std::size_t> root_to_cluster;
  for (std::size_t i = 0; i < n; ++i) {
    const auto root = dsu.find(i);
    auto [it, inserted] = root_to_cluster.emplace(root, clusters.size());
    if (inserted) clusters.emplace_back();
    auto& c = clusters[it->second];
    c.members.push_back(i);
    c.questions.insert(norm_q[i]);
    c.keywords.insert(norm_k[i]);
  }
  for (auto& c : clusters) {
    std::vector<double> w;
    w.reserve(c.members.size());
    for (auto m : c.members) w.push_back(candidates[m].importance);
    c.weight = stable_sum(std::move(w));
  }
  return clusters;
}

std::string representative_question(const FeatureCluster& cluster,
                                    const std::vector<FeatureCandidate>& candidates) {
  struct Tally {
    std::vector<double> importances;
    const FeatureCandidate* best_occurrence = nullptr;
  };
  std::map<std::string, Tally> by_question;
  for (auto m : cluster.members) {
    const auto& c = candidates[m];
    auto& t = by_question[normalize_key(c.question)];
    t.importances.push_back(c.importance);
    if (t.best_occurrence == nullptr || c.importance > t.best_occurrence->importance ||
        (c.importance == t.best_occurrence->importance && c.question < t.best_occurrence->question)) {
      t.best_occurrence = &c;
    }
  }
  if (by_question.empty()) throw Error("representative_question: empty cluster");

  const Tally* best = nullptr;
  double best_sum = 0.0;
  // std::map iterates keys ascending, so strict comparisons keep the
  // lexicographically smallest question on full ties.
  for (const auto& kv : by_question) {
    const auto& tally = kv.second;
    const double sum = stable_sum(tally.importances);
    if (best == nullptr || sum > best_sum ||
        (sum == best_sum && tally.importances.size() > best->importances.size())) {
      best = &tally;
      best_sum = sum;
    }
  }
  return best->best_occurrence->question;
}

std::vector<std::string> QuestionSet::questions() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.question);
  return out;
}

QuestionSet rank_and_select(const std::vector<FeatureCluster>& clusters,
                            const std::vector<FeatureCandidate>& candidates, std::size_t k) {
  if (k < 1) throw ConfigError("rank_and_select: k must be >= 1");
  std::vector<QuestionEntry> all;
  all.reserve(clusters.size());
  for (const auto& c : clusters) {
    QuestionEntry e;
    e.question = representative_question(c, candidates);
    e.weight = c.weight;
    e.keywords.assign(c.keywords.begin(), c.keywords.end());
    e.member_count = c.members.size();
    all.push_back(std::move(e));
  }
  std::sort(all.begin(), all.end(), [](const QuestionEntry& a, const QuestionEntry& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.question < b.question;
  });
  if (all.size() < k) {
    log::warn("rank_and_select: only {} clusters available for k={}", all.size(), k);
  } else {
    all.resize(k);
  }
  QuestionSet qs;
  qs.entries = std::move(all);
  for (std::size_t i = 0; i < qs.entries.size(); ++i) qs.entries[i].rank = i + 1;
  return qs;
}

namespace {

std::string to_string(Provenance p) { return p == Provenance::kHuman ? "human" : "llm"; }

std::size_t find_entry(const QuestionSet& qs, const ReviewEdit& edit) {
  if (edit.rank) {
    for (std::size_t i = 0; i < qs.entries.size(); ++i) {
      if (qs.entries[i].rank == *edit.rank) return i;
    }
    throw ReviewError(fmt::format("review edit references unknown rank {}", *edit.rank));
  }
  const auto wanted = normalize_key(edit.question);
  for (std::size_t i = 0; i < qs.entries.size(); ++i) {
    if (normalize_key(qs.entries[i].question) == wanted) return i;
  }
  throw ReviewError("review edit references unknown question \"" + edit.question + "\"");
}

}  // namespace

QuestionSet apply_review(const QuestionSet& qs, const std::vector<ReviewEdit>& edits) {
  const auto source = digest(qs);
  QuestionSet out = qs;
  for (const auto& edit : edits) {
    const auto idx = find_entry(out, edit);
    auto& entry = out.entries[idx];
    json log_row{{"source_digest", source}, {"rank", entry.rank}, {"question", entry.question}};
    if (edit.action == ReviewEdit::Action::kDrop) {
      log_row["action"] = "drop";
      out.entries.erase(out.entries.begin() + static_cast<std::ptrdiff_t>(idx));
    } else {
      if (normalize_key(edit.replacement).empty()) {
        throw ReviewError("replacement for \"" + entry.question + "\" is empty");
      }
      for (std::size_t j = 0; j < out.entries.size(); ++j) {
        if (j != idx && normalize_key(out.entries[j].question) == normalize_key(edit.replacement)) {
          throw ReviewError("replacement \"" + edit.replacement + "\" duplicates rank " +
                            std::to_string(out.entries[j].rank));
        }
      }
      log_row["action"] = "replace";
      log_row["replacement"] = edit.replacement;
      entry.question = edit.replacement;
      entry.provenance = Provenance::kHuman;
    }
    out.edit_log.push_back(std::move(log_row));
  }
  // Edits address the ranks of the input set; renumber once at the end.
  for (std::size_t i = 0; i < out.entries.size(); ++i) out.entries[i].rank = i + 1;
  return out;
}

json to_json(const QuestionSet& qs) {
  json entries = json::array();
  for (const auto& e : qs.entries) {
    entries.push_back({{"rank", e.rank},
                       {"question", e.question},
                       {"weight", e.weight},
                       {"keywords", e.keywords},
                       {"member_count", e.member_count},
                       {"provenance", to_string(e.provenance)}});
  }
  return json{{"k", qs.k()}, {"entries", entries}, {"edit_log", qs.edit_log}};
}

QuestionSet question_set_from_json(const json& j) {
  QuestionSet qs;
  try {
    for (const auto& e : j.at("entries")) {
      QuestionEntry entry;
      entry.rank = e.at("rank").get<std::size_t>();
      entry.question = e.at("question").get<std::string>();
      entry.weight = e.at("weight").get<double>();
      entry.keywords = e.value("keywords", std::vector<std::string>{});
      entry.member_count = e.value("member_count", std::size_t{0});
      entry.provenance = e.value("provenance", "llm") == "human" ? Provenance::kHuman
                                                                  : Provenance::kLlm;
      qs.entries.push_back(std::move(entry));
    }
    qs.edit_log = j.value("edit_log", json::array());
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed question set: ") + e.what());
  }
  for (std::size_t i = 0; i < qs.entries.size(); ++i) {
    if (qs.entries[i].rank != i + 1) throw ParseError("question set ranks must be 1..K in order");
  }
  if (j.contains("k") && j["k"].get<std::size_t>() != qs.entries.size()) {
    throw ParseError("question set k does not match its entry count");
  }
  return qs;
}

std::string digest(const QuestionSet& qs) { return sha256_hex(to_json(qs).dump()); }

void write_question_set(const std::filesystem::path& path, const QuestionSet& qs) {
  write_text_file(path, to_json(qs).dump(2) + "\n");
}

QuestionSet load_question_set(const std::filesystem::path& path) {
  return question_set_from_json(read_json_file(path));
}

ReviewEdit review_edit_from_json(const json& j) {
  ReviewEdit edit;
  const auto action = j.value("action", "");
  if (action == "drop") {
    edit.action = ReviewEdit::Action::kDrop;
  } else if (action == "replace") {
    edit.action = ReviewEdit::Action::kReplace;
    if (!j.contains("replacement")) throw ParseError("replace edit needs a replacement");
    edit.replacement = j["replacement"].get<std::string>();
  } else {
    throw ParseError("review edit action must be drop or replace, got \"" + action + "\"");
  }
  edit.question = j.value("question", "");
  if (j.contains("rank")) edit.rank = j["rank"].get<std::size_t>();
  if (edit.question.empty() && !edit.rank) throw ParseError("review edit needs a question or rank");
  return edit;
}

std::vector<ReviewEdit> load_review_edits(const std::filesystem::path& path) {
  std::vector<ReviewEdit> out;
  for (const auto& j : read_jsonl(path)) out.push_back(review_edit_from_json(j));
  return out;
}

}  // namespace clinstructor::cluster
