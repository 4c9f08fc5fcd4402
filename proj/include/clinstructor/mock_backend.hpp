#pragma once

#include <string>
#include <utility>
#include <vector>

#include "clinstructor/corpus.hpp"
#include "clinstructor/llm_gateway.hpp"

namespace clinstructor::llm {

// Deterministic offline backend for synthetic corpora. It reads the planted
// "KEY: value" lines out of the note embedded in the prompt:
//  - identification prompts get `candidates_per_note` candidates generated
//    from phrasing templates over the planted attributes, with importance
//    derived from the attribute's planted weight;
//  - extraction prompts get each question answered by exact lookup of the
//    planted attribute whose templates produce that question, else "N/A".
// Output depends only on the prompt bytes.
class MockBackend : public ChatBackend {
 public:
  explicit MockBackend(std::vector<corpus::AttributeTemplate> pool = corpus::default_attribute_pool(),
                       std::size_t candidates_per_note = 20);

  BackendKind kind() const override { return BackendKind::kMock; }
  BackendReply send(const ChatRequest& request) override;

  // Importance the mock assigns to an attribute's primary phrasing.
  double importance_of(const std::string& key) const;

  struct Phrasing {
    std::string question;
    std::string keyword;
    double importance_factor;
  };
  // The phrasings generated for a planted KEY.
  static std::vector<Phrasing> phrasings(const std::string& key);

 private:
  std::string identify(const std::string& note) const;
  std::string extract(const ChatRequest& request) const;

  std::vector<corpus::AttributeTemplate> pool_;
  std::size_t candidates_per_note_;
  double max_abs_weight_ = 0.0;
};

// Planted "KEY: value" lines of a note, in text order.
std::vector<std::pair<std::string, std::string>> planted_attributes(std::string_view note);

// Runs a request straight through a MockBackend with schema validation, no
// cache and no retries.
ChatResponse mock_complete(const ChatRequest& request,
                           const std::vector<corpus::AttributeTemplate>& pool =
                               corpus::default_attribute_pool());

}  // namespace clinstructor::llm
