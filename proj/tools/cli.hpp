#pragma once

#include <iosfwd>

namespace abcran::cli {

/// Exit codes returned by dispatch().
enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericalError = 3 };

/// Parses `argv` (argv[0] is the program name), runs one subcommand and maps
/// failures onto ExitCode.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace abcran::cli
