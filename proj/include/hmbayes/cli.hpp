#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hmb {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitNumerical = 3,
  kExitData = 4,
};

// Parses `args` (without the program name), runs the selected stage and maps
// failures onto the exit-code taxonomy. Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace hmb
