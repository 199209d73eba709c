#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace survbias::cli {

/// Runs the command line `args` (without the program name) and returns the
/// process exit code: 0 success, 1 usage or configuration error, 2 data
/// error, 3 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace survbias::cli
