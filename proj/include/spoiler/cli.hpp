#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace spoiler::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsageError = 1,
  kDataError = 2,
  kRuntimeError = 3,
};

// args excludes the program name. Diagnostics go to `out` (help text) and
// `err` (progress, warnings, errors); results go only to files named by flags.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace spoiler::cli
