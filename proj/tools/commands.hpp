#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lpvsd::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kInfeasible = 2;
inline constexpr int kHalted = 3;

/// Runs `lpvsd <verb> [flags]`; argv[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lpvsd::cli
