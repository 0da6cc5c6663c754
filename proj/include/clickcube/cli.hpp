#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace clickcube::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs the clickcube command line. `args` excludes the program name.
/// Returns the process exit code.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace clickcube::cli
