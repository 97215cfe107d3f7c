#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace shiftmoment {

/// Exit codes of the command-line front end.
enum ExitCode : int { kExitOk = 0, kExitInternal = 1, kExitConfig = 2, kExitInput = 3 };

/// Parses argv (argv[0] is the program name) and runs one subcommand.
/// Normal output goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace shiftmoment
