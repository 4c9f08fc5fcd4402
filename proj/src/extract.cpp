#include "clinstructor/extract.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <set>

#include <fmt/core.h>

#include "clinstructor/log.hpp"
#include "clinstructor/prompts.hpp"

namespace clinstructor::extract {

llm::ChatRequest build_extract_prompt(const corpus::AdmissionNote& note,
                                      const cluster::QuestionSet& qs,
                                      const identify::PromptOptions& options) {
  if (qs.entries.empty()) throw ConfigError("cannot build an extraction prompt for an empty question set");
  std::string user(prompts::kExtractInstruction);
  user += prompts::kQuestionsMarker;
  for (const auto& e : qs.entries) {
    auto q = e.question;
    std::replace(q.begin(), q.end(), '\n', ' ');
    user += fmt::format("Q{}: {}\n", e.rank, q);
  }
  user += prompts::kNoteMarker;
  user += note.text;

  const auto k = qs.k();
  llm::ChatRequest req;
  req.model_id = options.model_id;
  req.system_prompt = std::string(prompts::kExtractSystem);
  req.user_prompt = std::move(user);
  req.response_schema = {prompts::extract_schema_name(k), prompts::extract_schema_description(k),
                         prompts::extract_schema(k)};
  req.temperature = options.temperature;
  req.max_tokens = options.max_tokens;
  return req;
}

std::vector<std::string> parse_answers(const llm::ChatResponse& response, std::size_t k) {
  const auto& v = response.parsed_value;
  if (!v.is_object()) throw ParseError("extraction response is not an object");
  std::vector<std::string> answers;
  answers.reserve(k);
  for (std::size_t i = 1; i <= k; ++i) {
    const auto key = "Q" + std::to_string(i);
    if (!v.contains(key)) throw ParseError("extraction response is missing " + key);
    if (!v[key].is_string()) throw ParseError("extraction answer " + key + " is not a string");
    auto a = trim(v[key].get<std::string>());
    answers.push_back(a.empty() ? std::string(kNa) : std::move(a));
  }
  if (v.size() != k) {
    for (const auto& [key, value] : v.items()) {
      bool expected = false;
      for (std::size_t i = 1; i <= k && !expected; ++i) expected = key == "Q" + std::to_string(i);
      if (!expected) throw ParseError("extraction response has unexpected key " + key);
    }
  }
  return answers;
}

bool is_na(std::string_view answer) { return to_lower_ascii(trim(answer)) == "n/a"; }

std::size_t effective_feature_count(const StructuredRecord& record) {
  return static_cast<std::size_t>(
      std::count_if(record.answers.begin(), record.answers.end(),
                    [](const std::string& a) { return !is_na(a); }));
}

json to_json(const StructuredRecord& r) {
  return json{{"note_id", r.note_id},
              {"label", r.label},
              {"question_set_digest", r.question_set_digest},
              {"answers", r.answers}};
}

StructuredRecord record_from_json(const json& j) {
  StructuredRecord r;
  try {
    r.note_id = j.at("note_id").get<std::string>();
    r.label = j.at("label").get<int>();
    r.question_set_digest = j.at("question_set_digest").get<std::string>();
    r.answers = j.at("answers").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed structured record: ") + e.what());
  }
  if (r.label != 0 && r.label != 1) throw ParseError("record " + r.note_id + ": label outside {0, 1}");
  for (const auto& a : r.answers) {
    if (a.empty()) throw ParseError("record " + r.note_id + ": empty answer");
  }
  return r;
}

std::vector<StructuredRecord> load_records(const std::filesystem::path& path) {
  std::vector<StructuredRecord> out;
  for (const auto& j : read_jsonl(path)) out.push_back(record_from_json(j));
  return out;
}

void write_records(const std::filesystem::path& path,
                   const std::vector<StructuredRecord>& records) {
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(to_json(r));
  write_jsonl(path, rows);
}

void check_records(const std::vector<StructuredRecord>& records, const cluster::QuestionSet& qs) {
  const auto d = cluster::digest(qs);
  for (const auto& r : records) {
    if (r.question_set_digest != d) {
      throw DigestMismatch(fmt::format("record {} was built against question set {}, expected {}",
                                       r.note_id, r.question_set_digest, d));
    }
    if (r.answers.size() != qs.k()) {
      throw DigestMismatch(fmt::format("record {} has {} answers, question set has {}", r.note_id,
                                       r.answers.size(), qs.k()));
    }
  }
}

namespace {

// Appends records in notes order: a completed record is written once every
// earlier note has been written or has failed.
class OrderedAppender {
 public:
  OrderedAppender(const std::optional<std::filesystem::path>& path, std::size_t n)
      : done_(n, false), rows_(n) {
    if (path) {
      if (path->has_parent_path()) std::filesystem::create_directories(path->parent_path());
      out_.open(*path, std::ios::app);
      if (!out_) throw Error("cannot append to " + path->string());
    }
  }

  void complete(std::size_t i, std::optional<json> row) {
    std::lock_guard lock(mu_);
    done_[i] = true;
    rows_[i] = std::move(row);
    while (next_ < done_.size() && done_[next_]) {
      if (out_.is_open() && rows_[next_]) {
        out_ << rows_[next_]->dump() << '\n';
        out_.flush();
      }
      rows_[next_].reset();
      ++next_;
    }
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
  std::vector<bool> done_;
  std::vector<std::optional<json>> rows_;
  std::size_t next_ = 0;
};

}  // namespace

ExtractionResult run_extraction(const std::vector<corpus::AdmissionNote>& notes,
                                const cluster::QuestionSet& qs, llm::Gateway& gateway,
                                const ExtractOptions& options) {
  if (notes.empty()) throw Error("extraction needs at least one note");
  if (qs.entries.empty()) throw Error("extraction needs a non-empty question set");
  const auto qs_digest = cluster::digest(qs);

  std::map<std::string, StructuredRecord> existing;
  if (options.output_path && std::filesystem::exists(*options.output_path)) {
    for (auto& r : load_records(*options.output_path)) {
      if (r.question_set_digest != qs_digest) {
        throw DigestMismatch("existing records in " + options.output_path->string() +
                             " were built against a different question set");
      }
      auto id = r.note_id;
      existing.emplace(std::move(id), std::move(r));
    }
  }

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < notes.size(); ++i) {
    if (!existing.count(notes[i].note_id)) todo.push_back(i);
  }
  const std::size_t resumed = notes.size() - todo.size();
  if (resumed > 0) log::info("extraction: resuming, {} notes already done", resumed);

  std::vector<std::optional<StructuredRecord>> fresh(notes.size());
  std::vector<std::optional<std::string>> errors(notes.size());
  OrderedAppender appender(options.output_path, todo.size());
  std::atomic<std::size_t> done{0};
  parallel_for(todo.size(), gateway.parallelism(), [&](std::size_t t) {
    const auto i = todo[t];
    const auto& note = notes[i];
    std::optional<json> row;
    try {
      const auto response = gateway.complete(build_extract_prompt(note, qs, options.prompt));
      StructuredRecord r{note.note_id, note.label, parse_answers(response, qs.k()), qs_digest};
      row = to_json(r);
      fresh[i] = std::move(r);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
    appender.complete(t, std::move(row));
    const auto n = ++done;
    if (n % 250 == 0 || n == todo.size()) log::info("extraction: {}/{} notes", n, todo.size());
  });

  ExtractionResult result;
  result.resumed = resumed;
  for (std::size_t i = 0; i < notes.size(); ++i) {
    if (auto it = existing.find(notes[i].note_id); it != existing.end()) {
      result.records.push_back(it->second);
    } else if (fresh[i]) {
      result.records.push_back(std::move(*fresh[i]));
    } else {
      log::warn("extraction failed for note {}: {}", notes[i].note_id, errors[i].value_or("?"));
      result.failures.push_back({notes[i].note_id, errors[i].value_or("unknown error")});
    }
  }
  if (result.records.empty()) {
    throw Error(fmt::format("extraction produced no records ({} notes failed)",
                            result.failures.size()));
  }
  return result;
}

std::string finetune_text(const StructuredRecord& record, const cluster::QuestionSet& qs) {
  std::string text;
  for (std::size_t i = 0; i < qs.entries.size(); ++i) {
    text += "Q: " + qs.entries[i].question + "\nA: " + record.answers.at(i) + "\n";
  }
  return text;
}

std::vector<std::string> parse_finetune_text(const std::string& text,
                                             const std::vector<std::string>& questions) {
  std::vector<std::string> answers;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    const auto head = "Q: " + questions[i] + "\nA: ";
    if (text.compare(pos, head.size(), head) != 0) {
      throw ParseError(fmt::format("fine-tune text: block {} does not start with its question", i + 1));
    }
    pos += head.size();
    std::size_t end;
    if (i + 1 < questions.size()) {
      end = text.find("\nQ: " + questions[i + 1] + "\nA: ", pos);
    } else {
      end = text.empty() ? std::string::npos : text.size() - 1;
      if (end == std::string::npos || end < pos || text[end] != '\n') end = std::string::npos;
    }
    if (end == std::string::npos) {
      throw ParseError(fmt::format("fine-tune text: block {} is not terminated", i + 1));
    }
    answers.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  if (pos != text.size()) throw ParseError("fine-tune text has trailing content");
  return answers;
}

void export_finetune_file(const std::vector<StructuredRecord>& records,
                          const cluster::QuestionSet& qs, const std::filesystem::path& path) {
  check_records(records, qs);
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) {
    rows.push_back({{"note_id", r.note_id}, {"label", r.label}, {"text", finetune_text(r, qs)}});
  }
  write_jsonl(path, rows);
}

}  // namespace clinstructor::extract
