#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gmlab::cli {

enum ExitCode : int { kPass = 0, kCheckFailure = 1, kUsage = 2, kRuntime = 3 };

/// Runs one command line (args[0] is the program name). Normal output goes to
/// `out`, diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gmlab::cli
