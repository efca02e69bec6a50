#pragma once

#include <string>
#include <vector>

namespace clint {

// Runs one CLI invocation. `args` excludes the program name.
// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 training error.
int run_cli(const std::vector<std::string>& args);

}  // namespace clint
