#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fnm::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kData = 3,
    kTolerance = 4,
};

// Runs one command line (without the program name). Regular output goes to
// `out`, diagnostics and stdout-bound manifests to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace fnm::cli
