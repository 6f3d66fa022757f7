#pragma once

#include <iosfwd>

namespace difftrack::cli {

/// Parses the command line and runs one subcommand. Returns the process exit
/// code; errors are reported on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace difftrack::cli
