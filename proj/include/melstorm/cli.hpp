#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace melstorm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// Parses and executes one command line. argv[0] is the program name.
/// Returns 0 on success, 1 on usage errors, 2 on runtime failures.
int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace melstorm
