#pragma once

namespace hqlab {

/// Entry point of the command-line harness; returns the process exit code.
/// argv[1] selects the subcommand, everything after it is flags.
int run_cli(int argc, const char* const* argv);

}  // namespace hqlab
