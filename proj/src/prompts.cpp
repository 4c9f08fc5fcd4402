#include "clinstructor/prompts.hpp"

#include <string>

namespace clinstructor::prompts {

json identify_schema() {
  return json::parse(R"json({
    "type": "object",
    "properties": {
      "question_info": {
        "type": "array",
        "items": {
          "type": "object",
          "properties": {
            "question": {
              "type": "string",
              "description": "A clinical question that can be answered from the note"
            },
            "keyword": {
              "type": "string",
              "description": "A concise name for the feature"
            },
            "importance": {
              "type": "number",
              "description": "Feature importance score from 0 (low) to 1 (high)"
            }
          },
          "required": ["question", "keyword", "importance"]
        }
      }
    },
    "required": ["question_info"]
  })json");
}

json extract_schema(std::size_t k) {
  json properties = json::object();
  json required = json::array();
  for (std::size_t i = 1; i <= k; ++i) {
    const auto key = "Q" + std::to_string(i);
    properties[key] = json{{"type", "string"}};
    required.push_back(key);
  }
  return json{{"type", "object"},
              {"properties", properties},
              {"required", required},
              {"additionalProperties", false}};
}

std::string extract_schema_name(std::size_t k) { return "answer_" + std::to_string(k); }

std::string extract_schema_description(std::size_t k) {
  return "Answer to the given " + std::to_string(k) + " questions.";
}

}  // namespace clinstructor::prompts
