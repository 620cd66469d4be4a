#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace slowsem {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIntegrity = 3;
inline constexpr int kExitNumerical = 4;

// Entry point for the `slowsem` tool. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace slowsem
