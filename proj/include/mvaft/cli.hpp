#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mvaft::cli {

// Exit codes.
inline constexpr int ok = 0;
inline constexpr int invalid_input = 1;
inline constexpr int not_converged = 2;
inline constexpr int inconsistent = 3;

// Runs the command line `args` (without the program name). Diagnostics go to
// err, progress and tables to out. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mvaft::cli
