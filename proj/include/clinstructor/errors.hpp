#pragma once

#include <stdexcept>
#include <string>

namespace clinstructor {

// Base for all pipeline failures. The CLI maps ConfigError to exit code 2 and
// everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// Cross-stage artifact mismatch (question set vs records vs model).
class DigestMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace clinstructor
