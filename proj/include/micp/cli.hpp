#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace micp {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,       // bad flags, unreadable files, invalid configuration
  kExitParse = 2,       // malformed trajectory log or schema violation
  kExitConstraint = 3,  // infeasible budgets, empty calibration pools
  kExitVersion = 4,     // artifact format/version mismatch
};

// Entry point shared by the executable and the tests. args[0] is the
// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace micp
