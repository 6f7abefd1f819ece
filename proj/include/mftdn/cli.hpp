#pragma once

#include <iostream>

namespace mftdn {

enum ExitCode : int {
  exit_ok = 0,
  exit_usage = 1,
  exit_data = 2,
  exit_numerical = 3,
  // The fit stopped at its iteration cap; outputs are still written.
  exit_not_converged = 4,
};

// Entry point of the `mftdn` tool. Subcommands: simulate, fit, select, eval,
// embed, cluster, offline-fit. Errors are reported on `err`, never thrown.
int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
            std::ostream& err = std::cerr);

}  // namespace mftdn
