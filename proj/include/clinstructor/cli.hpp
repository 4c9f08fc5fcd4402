#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace clinstructor::cli {

// Runs one invocation; args excludes the program name. Returns the process
// exit code: 0 success, 1 runtime failure, 2 usage or configuration error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace clinstructor::cli
