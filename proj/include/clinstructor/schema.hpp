#pragma once

#include <optional>
#include <string>

#include "clinstructor/util.hpp"

namespace clinstructor::schema {

// Validator for the JSON-schema subset used by response schemas: type
// (object, array, string, number, integer, boolean, null), properties,
// required, items, additionalProperties (boolean), enum, minItems, maxItems.
// Unknown keywords such as "description" are ignored.

// Returns an error message if `schema` is not a well-formed document of the
// supported subset.
std::optional<std::string> check_document(const json& schema);

// Returns nullopt when `value` conforms, else a message naming the first
// offending JSON pointer.
std::optional<std::string> validate(const json& value, const json& schema);

}  // namespace clinstructor::schema
